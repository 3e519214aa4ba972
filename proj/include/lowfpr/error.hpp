#pragma once

#include <stdexcept>
#include <string>

namespace lowfpr {

// Input files or records that violate the dataset schema.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures: non-finite objectives, broken identities, degenerate fits.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lowfpr
