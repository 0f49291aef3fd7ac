#pragma once

#include <span>
#include <vector>

#include "nextdest/core.hpp"
#include "nextdest/pipeline.hpp"
#include "nextdest/tensor.hpp"

namespace nextdest {

/// The n most probable classes of one row, highest first; equal
/// probabilities rank the lower class id first.
std::vector<int> top_n_classes(std::span<const double> probs, std::size_t n);

/// Support-weighted mean of per-class F1. Classes never seen in `labels`
/// carry zero weight.
double weighted_f1(std::span<const int> predictions, std::span<const int> labels,
                   std::size_t num_classes);

/// Top-N F1: an instance counts as predicting its true label when that label
/// is among the N most probable classes, otherwise as predicting the argmax.
/// The collapsed predictions are scored with weighted_f1.
double topn_f1(const nn::Matrix& probs, std::span<const int> labels, std::size_t n);

/// Share of instances whose label is among the N most probable classes.
double recall_at_n(const nn::Matrix& probs, std::span<const int> labels, std::size_t n);

std::vector<int> labels_of(std::span<const WindowEntry> entries);

/// Most frequent destination in `train` (lowest id on ties).
CityId global_mode_destination(std::span<const WindowEntry> train);

/// Destination of the latest window flight that left from the target
/// origin; `fallback` when there is none. Exact for strictly alternating
/// two-city histories.
std::vector<int> lookup_oracle_predictions(std::span<const WindowEntry> entries, CityId fallback);

}  // namespace nextdest
