// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gremc/common.hpp"

namespace gremc {

/// Ordering sentinel for "no jointly observed modality". Kept finite so it can
/// pass through plain double arithmetic; every consumer only compares it.
inline constexpr double kNegInf = -1e30;

inline bool is_neg_inf(double v) { return v <= kNegInf; }

/// Per-modality feature matrix, rows aligned with item-graph node ids.
/// Features are stored as loaded; cosine is scale-invariant so no
/// normalization pass is applied.
struct FeatureMatrix {
  uint32_t modality = 0;
  size_t rows = 0;
  size_t dim = 0;
  std::vector<float> data;  // row-major

  std::span<const float> row(size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(size_t i) { return {data.data() + i * dim, dim}; }
};

struct ModalityStore {
  std::vector<FeatureMatrix> modalities;

  size_t n_modalities() const { return modalities.size(); }
  size_t n_items() const { return modalities.empty() ? 0 : modalities[0].rows; }
  std::span<const float> feature(uint32_t item, uint32_t m) const {
    return modalities[m].row(item);
  }
  size_t dim(uint32_t m) const { return modalities[m].dim; }
  void validate() const;  // equal row counts, finite entries
};

/// Observation indicator per (item, modality) slot. Invariant: every item
/// keeps at least one observed modality.
struct ModalityMask {
  size_t n_items = 0;
  size_t n_modalities = 0;
  std::vector<uint8_t> observed;  // row-major
  uint64_t seed = 0;
  double rate = 0.0;

  bool is_observed(uint32_t item, uint32_t m) const { return observed[item * n_modalities + m] != 0; }
  void set_observed(uint32_t item, uint32_t m, bool v) { observed[item * n_modalities + m] = v ? 1 : 0; }

  std::vector<uint32_t> observed_modalities(uint32_t item) const;
  std::vector<uint32_t> missing_modalities(uint32_t item) const;
  size_t observed_count(uint32_t item) const;

  /// Copy with one slot of one item forced to unobserved (self-supervised
  /// re-masking of a training query).
  ModalityMask with_hidden(uint32_t item, uint32_t m) const;

  static ModalityMask all_observed(size_t n_items, size_t n_modalities);
};

/// Cosine over equal-length vectors; accumulates in double. Zero-norm inputs
/// yield 0 rather than NaN so degenerate rows cannot poison means.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(std::span<const double> a, std::span<const double> b);

/// Mean cosine over modalities jointly observed by i and v; kNegInf when the
/// joint set is empty.
double relevance(const ModalityStore& store, const ModalityMask& mask, uint32_t i, uint32_t v);

/// (1/|S|) sum of relevance(i, v) over v in S. Any sentinel member makes the
/// whole mean kNegInf.
double mean_relevance(const ModalityStore& store, const ModalityMask& mask, uint32_t i,
                      std::span<const uint32_t> s);

/// Masks exactly round(rate * n_items * M) slots, uniformly at random subject
/// to every item keeping >= 1 observed modality. rate must be <= (M-1)/M.
ModalityMask apply_masking(size_t n_items, size_t n_modalities, double rate, uint64_t seed);

// Feature file: magic "GMC1", u32 version=1, u64 rows, u64 cols, f32 row-major.
void save_features(const FeatureMatrix& f, const std::string& path);
FeatureMatrix load_features(const std::string& path, uint32_t modality);

// Mask file: CSV `item_id,modality,observed` with observed in {0,1}.
void save_mask_csv(const ModalityMask& mask, const std::string& path);
ModalityMask load_mask_csv(const std::string& path);

}  // namespace gremc
