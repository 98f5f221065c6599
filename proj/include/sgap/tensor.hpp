#ifndef SGAP_TENSOR_HPP
#define SGAP_TENSOR_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sgap/common.hpp"

namespace sgap {

// Dense row-major tensor. Rank is dynamic; batches of images use
// {N, C, H, W}, single images {C, H, W}, vectors {n}.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }
  Tensor(std::vector<int> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw ShapeError("tensor data size does not match shape " + shape_str());
  }

  static int64_t numel_of(const std::vector<int>& shp) {
    int64_t n = 1;
    for (int d : shp) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // {N,C,H,W} indexing.
  S& at4(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const S& at4(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  // {C,H,W} indexing.
  S& at3(int c, int h, int w) {
    return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
  }
  const S& at3(int c, int h, int w) const {
    return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(S(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "}";
    return os.str();
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename S>
void check_shape(const Tensor<S>& t, const std::vector<int>& expect,
                 const char* what) {
  if (t.shape != expect) {
    Tensor<S> e;
    e.shape = expect;
    throw ShapeError(std::string(what) + ": expected shape " + e.shape_str() +
                     ", got " + t.shape_str());
  }
}

// Stacks equally shaped {C,H,W} images into one {N,C,H,W} batch.
template <typename S>
Tensor<S> stack_images(const std::vector<const Tensor<S>*>& images) {
  if (images.empty()) throw ShapeError("cannot stack an empty image list");
  const auto& s0 = images[0]->shape;
  if (s0.size() != 3) throw ShapeError("stack_images expects {C,H,W} inputs");
  Tensor<S> out({static_cast<int>(images.size()), s0[0], s0[1], s0[2]});
  const int64_t per = images[0]->numel();
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape != s0)
      throw ShapeError("stack_images: mismatched image shapes");
    std::copy(images[i]->data.begin(), images[i]->data.end(),
              out.data.begin() + static_cast<int64_t>(i) * per);
  }
  return out;
}

// Extracts image n of a {N,C,H,W} batch as {C,H,W}.
template <typename S>
Tensor<S> slice_image(const Tensor<S>& batch, int n) {
  if (batch.rank() != 4) throw ShapeError("slice_image expects a {N,C,H,W} batch");
  Tensor<S> out({batch.dim(1), batch.dim(2), batch.dim(3)});
  const int64_t per = out.numel();
  std::copy(batch.data.begin() + n * per, batch.data.begin() + (n + 1) * per,
            out.data.begin());
  return out;
}

}  // namespace sgap

#endif  // SGAP_TENSOR_HPP
