#pragma once
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mirig {

inline int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dim must be positive");
    n *= d;
  }
  return n;
}

// Dense row-major tensor.  float for training, double for the shadow path
// used by gradient checking.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (int64_t(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  int64_t numel() const { return int64_t(data.size()); }
  int dim(int i) const { return shape.at(size_t(i)); }
  int rank() const { return int(shape.size()); }

  T& operator[](int64_t i) { return data[size_t(i)]; }
  const T& operator[](int64_t i) const { return data[size_t(i)]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// FNV-1a over raw bytes; used for config provenance hashes and test goldens.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t tensor_hash(const Tensor& t) {
  uint64_t h = fnv1a64(t.shape.data(), t.shape.size() * sizeof(int));
  return fnv1a64(t.data.data(), t.data.size() * sizeof(float), h);
}

}  // namespace mirig
