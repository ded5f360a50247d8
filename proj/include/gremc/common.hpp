// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gremc {

/// Dense row-major matrix of doubles. Everything at this scale (token sets,
/// codebooks, parameter blocks) is small enough that a flat vector is fine.
struct Mat {
  size_t rows = 0, cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return data[r * cols + c]; }
  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }
  size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Non-owning matrix view over a raw double block (used for parameter slices).
struct MatView {
  double* d = nullptr;
  size_t rows = 0, cols = 0;
  double& operator()(size_t r, size_t c) const { return d[r * cols + c]; }
  std::span<double> row(size_t r) const { return {d + r * cols, cols}; }
};

struct ConstMatView {
  const double* d = nullptr;
  size_t rows = 0, cols = 0;
  double operator()(size_t r, size_t c) const { return d[r * cols + c]; }
  std::span<const double> row(size_t r) const { return {d + r * cols, cols}; }
};

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// FNV-1a, used for input content hashes in run manifests and seed-stream naming.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(std::string_view s);
std::string hex64(uint64_t v);
uint64_t hash_file(const std::string& path);

// Little-endian scalar IO for the binary cache formats.
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f32(std::ostream& os, float v);
uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
void write_f32_block(std::ostream& os, std::span<const float> v);
void read_f32_block(std::istream& is, std::span<float> v);

/// Runs fn(i) for i in [0, n). threads <= 1 stays on the calling thread;
/// otherwise work is split into contiguous chunks. Callers must not share
/// mutable state across indices.
void parallel_for(size_t n, unsigned threads, const std::function<void(size_t)>& fn);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Fixed-format double printing so emitted CSV/JSON artifacts are byte-stable.
std::string format_double(double v);

}  // namespace gremc
