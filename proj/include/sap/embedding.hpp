// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sap {

/// Keyed dense float32 vectors of a fixed dimension, stored row-major.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::uint32_t dim);

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  /// Appends a row. Throws on duplicate key or wrong length.
  void add(std::string key, std::span<const float> vector);

  const std::string& key(std::size_t row) const { return keys_[row]; }
  const std::vector<std::string>& keys() const { return keys_; }
  std::span<const float> row(std::size_t row) const;

  bool contains(const std::string& key) const { return index_.contains(key); }
  /// Throws sap::Error naming the key when absent.
  std::span<const float> at(const std::string& key) const;
  std::size_t row_of(const std::string& key) const;

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

 private:
  std::uint32_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// aᵀb / (‖a‖‖b‖) with float64 accumulation. Throws on dimension mismatch or a
/// zero-norm argument.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Divides every row by its L2 norm. Throws naming the key of a zero row.
/// Rows already within float rounding of unit length (|norm - 1| <= 2^-23)
/// are copied unchanged, which makes normalize exactly idempotent.
EmbeddingMatrix normalize(const EmbeddingMatrix& m);

/// Binary layout, little-endian:
///   "SAPEMB01" | u32 dim | u64 count | count x (u32 keylen | key | dim x f32)
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

}  // namespace sap
