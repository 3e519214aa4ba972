#pragma once

// Per-sample ensemble prediction records: loading, validation, writing,
// split filtering and seeded subsampling.
//
// CSV layout (header required):
//   sample_id,label,split,family,m0,m1,...,m{T-1}
// JSONL layout, one object per line:
//   {"id": ..., "label": 0|1, "split": ..., "family": null|"...", "scores": [...]}

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lowfpr/error.hpp"
#include "lowfpr/random.hpp"

namespace lowfpr {

enum class Label : std::uint8_t { benign = 0, malicious = 1 };
enum class Split : std::uint8_t { train, validation, test };
enum class DataFormat { csv, jsonl };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct SampleRecord {
  std::string sample_id;
  Label label = Label::benign;
  Split split = Split::test;
  std::optional<std::string> family;
  std::vector<double> member_scores;

  bool malicious() const { return label == Label::malicious; }
  bool operator==(const SampleRecord&) const = default;
};

struct PredictionDataset {
  std::vector<SampleRecord> records;
  std::size_t member_count = 0;
  std::string provenance;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::size_t count(Label label) const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(),
        [label](const SampleRecord& r) { return r.label == label; }));
  }
};

namespace detail {

inline std::string location(std::size_t line, std::string_view field) {
  std::string out = "line " + std::to_string(line);
  if (!field.empty()) out += ", field '" + std::string(field) + "'";
  return out;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return value;
}

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

inline void check_record(const SampleRecord& r, std::size_t line,
                         std::size_t member_count) {
  if (r.family && r.label == Label::benign) {
    throw data_error(location(line, "family") + ": benign sample '" +
                     r.sample_id + "' carries family tag '" + *r.family + "'");
  }
  if (r.member_scores.size() != member_count) {
    throw data_error(location(line, "scores") + ": sample '" + r.sample_id +
                     "' has " + std::to_string(r.member_scores.size()) +
                     " member scores, expected " +
                     std::to_string(member_count));
  }
  for (std::size_t m = 0; m < r.member_scores.size(); ++m) {
    const double s = r.member_scores[m];
    if (!(s >= 0.0 && s <= 1.0)) {
      throw data_error(location(line, "m" + std::to_string(m)) + ": score " +
                       format_double(s) + " of sample '" + r.sample_id +
                       "' outside [0,1]");
    }
  }
}

inline void check_unique(std::unordered_set<std::string>& seen,
                         const SampleRecord& r, std::size_t line) {
  if (!seen.insert(r.sample_id).second) {
    throw data_error(location(line, "sample_id") + ": duplicate sample_id '" +
                     r.sample_id + "'");
  }
}

inline Label parse_label(std::string_view text, std::size_t line) {
  if (text == "0") return Label::benign;
  if (text == "1") return Label::malicious;
  throw data_error(location(line, "label") + ": expected 0 or 1, got '" +
                   std::string(text) + "'");
}

inline Split parse_split_field(std::string_view text, std::size_t line) {
  if (auto s = parse_split(text)) return *s;
  throw data_error(location(line, "split") + ": unknown split '" +
                   std::string(text) + "'");
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

inline PredictionDataset read_csv(std::istream& in, std::string provenance = {}) {
  PredictionDataset ds;
  ds.provenance = std::move(provenance);
  std::string raw;
  if (!std::getline(in, raw)) throw data_error("line 1: missing CSV header");
  const auto header = detail::split_commas(detail::strip_cr(raw));
  const char* required[] = {"sample_id", "label", "split", "family"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (header.size() <= i || header[i] != required[i]) {
      throw data_error(detail::location(1, required[i]) +
                       ": missing header column '" + required[i] + "'");
    }
  }
  if (header.size() < 5) {
    throw data_error(detail::location(1, "m0") + ": missing header column 'm0'");
  }
  for (std::size_t i = 4; i < header.size(); ++i) {
    const std::string expected = "m" + std::to_string(i - 4);
    if (header[i] != expected) {
      throw data_error(detail::location(1, expected) +
                       ": missing header column '" + expected + "'");
    }
  }
  ds.member_count = header.size() - 4;

  std::unordered_set<std::string> seen;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = detail::strip_cr(raw);
    if (text.empty()) continue;
    const auto fields = detail::split_commas(text);
    SampleRecord r;
    if (!fields.empty()) r.sample_id = std::string(fields[0]);
    if (fields.size() != header.size()) {
      throw data_error(detail::location(line, "") + ": sample '" + r.sample_id +
                       "' has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(header.size()));
    }
    if (r.sample_id.empty()) {
      throw data_error(detail::location(line, "sample_id") + ": empty id");
    }
    r.label = detail::parse_label(fields[1], line);
    r.split = detail::parse_split_field(fields[2], line);
    if (!fields[3].empty()) r.family = std::string(fields[3]);
    r.member_scores.reserve(ds.member_count);
    for (std::size_t m = 0; m < ds.member_count; ++m) {
      const auto v = detail::parse_double(fields[4 + m]);
      if (!v) {
        throw data_error(detail::location(line, "m" + std::to_string(m)) +
                         ": not a number: '" + std::string(fields[4 + m]) + "'");
      }
      r.member_scores.push_back(*v);
    }
    detail::check_record(r, line, ds.member_count);
    detail::check_unique(seen, r, line);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

inline PredictionDataset read_jsonl(std::istream& in, std::string provenance = {}) {
  using nlohmann::json;
  PredictionDataset ds;
  ds.provenance = std::move(provenance);
  std::unordered_set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  bool have_count = false;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = detail::strip_cr(raw);
    if (text.find_first_not_of(" \t") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw data_error(detail::location(line, "") + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw data_error(detail::location(line, "") + ": expected a JSON object");
    }
    auto field = [&](const char* name) -> const json& {
      auto it = obj.find(name);
      if (it == obj.end()) {
        throw data_error(detail::location(line, name) + ": missing key");
      }
      return *it;
    };
    SampleRecord r;
    const json& id = field("id");
    if (id.is_string()) {
      r.sample_id = id.get<std::string>();
    } else if (id.is_number_integer()) {
      r.sample_id = id.dump();
    } else {
      throw data_error(detail::location(line, "id") + ": expected string");
    }
    if (r.sample_id.empty()) {
      throw data_error(detail::location(line, "id") + ": empty id");
    }
    const json& label = field("label");
    if (!label.is_number_integer()) {
      throw data_error(detail::location(line, "label") + ": expected 0 or 1");
    }
    r.label = detail::parse_label(std::to_string(label.get<std::int64_t>()), line);
    const json& split = field("split");
    if (!split.is_string()) {
      throw data_error(detail::location(line, "split") + ": expected string");
    }
    r.split = detail::parse_split_field(split.get<std::string>(), line);
    if (auto it = obj.find("family"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) {
        throw data_error(detail::location(line, "family") + ": expected string or null");
      }
      if (!it->get<std::string>().empty()) r.family = it->get<std::string>();
    }
    const json& scores = field("scores");
    if (!scores.is_array() || scores.empty()) {
      throw data_error(detail::location(line, "scores") + ": expected nonempty array");
    }
    for (const auto& s : scores) {
      if (!s.is_number()) {
        throw data_error(detail::location(line, "scores") + ": non-numeric score");
      }
      r.member_scores.push_back(s.get<double>());
    }
    if (!have_count) {
      ds.member_count = r.member_scores.size();
      have_count = true;
    }
    detail::check_record(r, line, ds.member_count);
    detail::check_unique(seen, r, line);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

inline DataFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".json") ? DataFormat::jsonl : DataFormat::csv;
}

inline PredictionDataset load_dataset(const std::filesystem::path& path,
                                      DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path.string() + "'");
  return format == DataFormat::csv ? read_csv(in, path.string())
                                   : read_jsonl(in, path.string());
}

inline PredictionDataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, format_from_path(path));
}

inline void write_csv(std::ostream& out, const PredictionDataset& ds) {
  out << "sample_id,label,split,family";
  for (std::size_t m = 0; m < ds.member_count; ++m) out << ",m" << m;
  out << '\n';
  for (const auto& r : ds.records) {
    out << r.sample_id << ',' << static_cast<int>(r.label) << ','
        << to_string(r.split) << ',' << r.family.value_or("");
    for (double s : r.member_scores) out << ',' << detail::format_double(s);
    out << '\n';
  }
}

inline void write_jsonl(std::ostream& out, const PredictionDataset& ds) {
  for (const auto& r : ds.records) {
    nlohmann::ordered_json obj;
    obj["id"] = r.sample_id;
    obj["label"] = static_cast<int>(r.label);
    obj["split"] = std::string(to_string(r.split));
    obj["family"] = r.family ? nlohmann::ordered_json(*r.family) : nullptr;
    obj["scores"] = r.member_scores;
    out << obj.dump() << '\n';
  }
}

inline void save_dataset(const std::filesystem::path& path,
                         const PredictionDataset& ds, DataFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write '" + path.string() + "'");
  if (format == DataFormat::csv) {
    write_csv(out, ds);
  } else {
    write_jsonl(out, ds);
  }
}

inline PredictionDataset filter_split(const PredictionDataset& ds, Split split) {
  PredictionDataset out;
  out.member_count = ds.member_count;
  out.provenance = ds.provenance;
  std::copy_if(ds.records.begin(), ds.records.end(),
               std::back_inserter(out.records),
               [split](const SampleRecord& r) { return r.split == split; });
  return out;
}

// Number of records kept by subsample(): fraction * n rounded half-to-even,
// never below one for a nonempty input.
inline std::size_t subsample_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample fraction must lie in (0, 1]");
  }
  if (n == 0) return 0;
  const double scaled = fraction * static_cast<double>(n);
  double whole = std::floor(scaled);
  const double rest = scaled - whole;
  if (rest > 0.5 || (rest == 0.5 && std::fmod(whole, 2.0) != 0.0)) whole += 1.0;
  return std::clamp<std::size_t>(static_cast<std::size_t>(whole), 1, n);
}

// Uniform sample without replacement; kept records retain their input order.
inline PredictionDataset subsample(const PredictionDataset& ds, double fraction,
                                   std::uint64_t seed) {
  const std::size_t n = ds.size();
  const std::size_t k = subsample_size(n, fraction);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RandomStream rng(seed, /*stream=*/0x5u, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  PredictionDataset out;
  out.member_count = ds.member_count;
  out.provenance = ds.provenance;
  out.records.reserve(k);
  for (std::size_t i : idx) out.records.push_back(ds.records[i]);
  return out;
}

}  // namespace lowfpr
