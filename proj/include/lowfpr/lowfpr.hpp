#pragma once

#include "lowfpr/adjust.hpp"
#include "lowfpr/analysis.hpp"
#include "lowfpr/brent.hpp"
#include "lowfpr/data_model.hpp"
#include "lowfpr/error.hpp"
#include "lowfpr/parallel.hpp"
#include "lowfpr/protocol.hpp"
#include "lowfpr/random.hpp"
#include "lowfpr/roc.hpp"
#include "lowfpr/synth.hpp"
#include "lowfpr/uncertainty.hpp"
