// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "sap/common.hpp"
#include "sap/kernels.hpp"

namespace sap {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'P', 'E', 'M', 'B', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "embedding I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view v(bytes_.data() + pos_, n);
    pos_ += n;
    return v;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("truncated embedding file");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t dim) : dim_(dim) {
  if (dim == 0) throw Error("embedding dim must be positive");
}

void EmbeddingMatrix::add(std::string key, std::span<const float> vector) {
  if (dim_ == 0) throw Error("embedding dim must be positive");
  if (vector.size() != dim_) {
    throw Error("embedding " + key + " has " + std::to_string(vector.size()) +
                " components, expected " + std::to_string(dim_));
  }
  if (index_.contains(key)) throw Error("duplicate embedding key: " + key);
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

std::span<const float> EmbeddingMatrix::row(std::size_t r) const {
  return {data_.data() + r * dim_, dim_};
}

std::size_t EmbeddingMatrix::row_of(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw Error("missing embedding: " + key);
  return it->second;
}

std::span<const float> EmbeddingMatrix::at(const std::string& key) const { return row(row_of(key)); }

bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.dim_ != b.dim_ || a.keys_ != b.keys_ || a.data_.size() != b.data_.size()) return false;
  // Bitwise, so NaN payloads and signed zeros count.
  return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const double aa = kernels::dot(a, a);
  const double bb = kernels::dot(b, b);
  if (aa == 0.0 || bb == 0.0) throw Error("zero-norm vector in cosine similarity");
  return kernels::dot(a, b) / (std::sqrt(aa) * std::sqrt(bb));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw Error("zero-norm vector in cosine similarity");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

EmbeddingMatrix normalize(const EmbeddingMatrix& m) {
  if (m.dim() == 0) return {};
  EmbeddingMatrix out(m.dim());
  std::vector<float> buf(m.dim());
  for (std::size_t r = 0; r < m.size(); ++r) {
    auto v = m.row(r);
    const double norm = std::sqrt(kernels::dot(v, v));
    if (norm == 0.0 || !std::isfinite(norm)) {
      throw Error("cannot normalize zero or non-finite vector: " + m.key(r));
    }
    if (std::fabs(norm - 1.0) <= 0x1.0p-23) {
      out.add(m.key(r), v);
      continue;
    }
    for (std::size_t i = 0; i < v.size(); ++i) buf[i] = static_cast<float>(v[i] / norm);
    out.add(m.key(r), buf);
  }
  return out;
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, m.dim());
  put<std::uint64_t>(out, m.size());
  for (std::size_t r = 0; r < m.size(); ++r) {
    const auto& key = m.key(r);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(key.size()));
    out.append(key);
    auto v = m.row(r);
    out.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("missing file: " + path.string());
  Reader in(std::string(std::istreambuf_iterator<char>(f), {}));

  auto magic = in.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error("bad magic in " + path.string());
  }
  const auto dim = in.get<std::uint32_t>();
  const auto count = in.get<std::uint64_t>();
  if (dim == 0) throw Error("dim mismatch: header dim is 0 in " + path.string());

  EmbeddingMatrix m(dim);
  std::vector<float> v(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto key_len = in.get<std::uint32_t>();
    std::string key(in.take(key_len));
    auto raw = in.take(std::size_t{dim} * sizeof(float));
    std::memcpy(v.data(), raw.data(), raw.size());
    m.add(std::move(key), v);
  }
  if (!in.at_end()) {
    throw Error("count mismatch: trailing bytes after " + std::to_string(count) + " records in " +
                path.string());
  }
  return m;
}

}  // namespace sap
