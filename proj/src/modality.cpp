// SPDX-License-Identifier: Apache-2.0

#include "gremc/modality.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gremc/rng.hpp"

namespace gremc {

void ModalityStore::validate() const {
  for (size_t m = 1; m < modalities.size(); ++m) {
    require(modalities[m].rows == modalities[0].rows, "modality row counts differ");
  }
  for (const auto& f : modalities) {
    for (float v : f.data) require(std::isfinite(v), "non-finite feature entry");
  }
}

std::vector<uint32_t> ModalityMask::observed_modalities(uint32_t item) const {
  std::vector<uint32_t> out;
  for (uint32_t m = 0; m < n_modalities; ++m)
    if (is_observed(item, m)) out.push_back(m);
  return out;
}

std::vector<uint32_t> ModalityMask::missing_modalities(uint32_t item) const {
  std::vector<uint32_t> out;
  for (uint32_t m = 0; m < n_modalities; ++m)
    if (!is_observed(item, m)) out.push_back(m);
  return out;
}

size_t ModalityMask::observed_count(uint32_t item) const {
  size_t c = 0;
  for (uint32_t m = 0; m < n_modalities; ++m) c += is_observed(item, m) ? 1 : 0;
  return c;
}

ModalityMask ModalityMask::with_hidden(uint32_t item, uint32_t m) const {
  ModalityMask copy = *this;
  copy.set_observed(item, m, false);
  return copy;
}

ModalityMask ModalityMask::all_observed(size_t n_items, size_t n_modalities) {
  ModalityMask mask;
  mask.n_items = n_items;
  mask.n_modalities = n_modalities;
  mask.observed.assign(n_items * n_modalities, 1);
  return mask;
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  require(a.size() == b.size(), "cosine dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

double relevance(const ModalityStore& store, const ModalityMask& mask, uint32_t i, uint32_t v) {
  double sum = 0.0;
  size_t joint = 0;
  for (uint32_t m = 0; m < mask.n_modalities; ++m) {
    if (!mask.is_observed(i, m) || !mask.is_observed(v, m)) continue;
    sum += cosine(store.feature(i, m), store.feature(v, m));
    ++joint;
  }
  if (joint == 0) return kNegInf;
  return sum / static_cast<double>(joint);
}

double mean_relevance(const ModalityStore& store, const ModalityMask& mask, uint32_t i,
                      std::span<const uint32_t> s) {
  require(!s.empty(), "empty node set");
  double sum = 0.0;
  for (uint32_t v : s) {
    double r = relevance(store, mask, i, v);
    if (is_neg_inf(r)) return kNegInf;
    sum += r;
  }
  return sum / static_cast<double>(s.size());
}

ModalityMask apply_masking(size_t n_items, size_t n_modalities, double rate, uint64_t seed) {
  require(n_modalities >= 1, "need at least one modality");
  require(rate >= 0.0, "negative masking rate");
  double max_rate = static_cast<double>(n_modalities - 1) / static_cast<double>(n_modalities);
  require(rate <= max_rate + 1e-12, "constraint infeasible: rate exceeds (M-1)/M");

  ModalityMask mask = ModalityMask::all_observed(n_items, n_modalities);
  mask.seed = seed;
  mask.rate = rate;

  auto target = static_cast<size_t>(std::llround(rate * static_cast<double>(n_items * n_modalities)));
  if (target == 0) return mask;

  std::vector<uint64_t> slots(n_items * n_modalities);
  for (size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  Rng rng = derive_stream(seed, "mask");
  rng.shuffle(slots);

  std::vector<uint32_t> observed_left(n_items, static_cast<uint32_t>(n_modalities));
  size_t masked = 0;
  for (uint64_t slot : slots) {
    if (masked == target) break;
    auto item = static_cast<uint32_t>(slot / n_modalities);
    auto m = static_cast<uint32_t>(slot % n_modalities);
    if (observed_left[item] <= 1) continue;  // keep >= 1 observed per item
    mask.set_observed(item, m, false);
    --observed_left[item];
    ++masked;
  }
  require(masked == target, "masking failed to reach target slot count");
  return mask;
}

void save_features(const FeatureMatrix& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open feature file for writing: " + path);
  os.write("GMC1", 4);
  write_u32(os, 1);
  write_u64(os, f.rows);
  write_u64(os, f.dim);
  write_f32_block(os, f.data);
  require(os.good(), "feature file write failed: " + path);
}

FeatureMatrix load_features(const std::string& path, uint32_t modality) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open feature file: " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "GMC1", 4) == 0, "bad feature file magic: " + path);
  require(read_u32(is) == 1, "unsupported feature file version");
  FeatureMatrix f;
  f.modality = modality;
  f.rows = read_u64(is);
  f.dim = read_u64(is);
  f.data.resize(f.rows * f.dim);
  read_f32_block(is, f.data);
  for (float v : f.data) require(std::isfinite(v), "non-finite feature entry in " + path);
  return f;
}

void save_mask_csv(const ModalityMask& mask, const std::string& path) {
  std::ostringstream ss;
  ss << "item_id,modality,observed\n";
  for (size_t i = 0; i < mask.n_items; ++i) {
    for (size_t m = 0; m < mask.n_modalities; ++m) {
      ss << i << ',' << m << ',' << (mask.observed[i * mask.n_modalities + m] ? 1 : 0) << '\n';
    }
  }
  write_text_file(path, ss.str());
}

ModalityMask load_mask_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open mask file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "empty mask file: " + path);

  struct Row {
    uint32_t item, m;
    uint8_t obs;
  };
  std::vector<Row> rows;
  size_t max_item = 0, max_mod = 0;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    uint64_t v[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int f = 0; f < 3; ++f) {
      auto [np, ec] = std::from_chars(p, end, v[f]);
      bool last = (f == 2);
      if (ec != std::errc() || (last ? np != end : (np == end || *np != ','))) {
        fail("malformed mask row at line " + std::to_string(line_no));
      }
      p = last ? np : np + 1;
    }
    require(v[2] <= 1, "mask observed flag must be 0/1 at line " + std::to_string(line_no));
    rows.push_back({static_cast<uint32_t>(v[0]), static_cast<uint32_t>(v[1]),
                    static_cast<uint8_t>(v[2])});
    max_item = std::max<size_t>(max_item, v[0]);
    max_mod = std::max<size_t>(max_mod, v[1]);
  }
  require(!rows.empty(), "mask file has no rows: " + path);

  ModalityMask mask;
  mask.n_items = max_item + 1;
  mask.n_modalities = max_mod + 1;
  mask.observed.assign(mask.n_items * mask.n_modalities, 0);
  for (const Row& r : rows) mask.observed[r.item * mask.n_modalities + r.m] = r.obs;
  for (size_t i = 0; i < mask.n_items; ++i) {
    require(mask.observed_count(static_cast<uint32_t>(i)) >= 1,
            "mask leaves item " + std::to_string(i) + " with no observed modality");
  }
  return mask;
}

}  // namespace gremc
