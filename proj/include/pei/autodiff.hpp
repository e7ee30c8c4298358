#pragma once

// Reverse-mode differentiation over the small set of primitives needed by the
// reconstruction networks and the training losses.
//
// A Tape owns every intermediate value. Tensors are lightweight handles into
// the tape and become invalid once the tape is cleared. Parameters live
// outside the tape; backward() accumulates into Parameter::grad.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pei/image.hpp"

namespace pei::ad {

struct Shape {
  std::array<int, 4> dims{1, 1, 1, 1};
  int rank = 0;

  static Shape scalar() { return {}; }
  static Shape vector(int n) { return {{n, 1, 1, 1}, 1}; }
  static Shape image(int c, int h, int w) { return {{c, h, w, 1}, 3}; }
  static Shape filter(int out, int in, int kh, int kw) { return {{out, in, kh, kw}, 4}; }

  std::size_t size() const {
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) n *= static_cast<std::size_t>(dims[i]);
    return n;
  }
  int operator[](int i) const { return dims[i]; }
  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i) {
      if (dims[i] != o.dims[i]) return false;
    }
    return true;
  }
  std::string str() const;
};

template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s)
      : name(std::move(n)), shape(s), value(s.size(), T(0)), grad(s.size(), T(0)) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// A fixed linear operator with its exact transpose, acting on flat buffers.
template <typename T>
struct LinearMap {
  Shape in_shape;
  Shape out_shape;
  std::function<void(const T* in, T* out)> forward;   // out = A in
  std::function<void(const T* in, T* out)> adjoint;   // out = A^T in
};

enum class Padding { zero, reflect };

template <typename T>
class Tape;

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  bool valid() const;
  const Shape& shape() const;
  std::span<const T> values() const;
  /// Gradient of the last backward() call with respect to this tensor.
  std::span<const T> grad() const;
  T item() const;
  Image<T> image() const;

  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape<T>;
  Tensor(Tape<T>* tape, int id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
  std::uint64_t generation_ = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> constant(Shape shape, std::vector<T> values);
  Tensor<T> constant(const Image<T>& img);
  /// Leaf that receives a gradient (readable via Tensor::grad()).
  Tensor<T> variable(Shape shape, std::vector<T> values);
  Tensor<T> variable(const Image<T>& img);
  Tensor<T> parameter(Parameter<T>& p);

  /// Reverse sweep from a scalar loss. Node gradients are recomputed from
  /// scratch on every call; parameter gradients are accumulated.
  void backward(const Tensor<T>& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Used by the primitive implementations.
  Tensor<T> record(Shape shape, std::vector<T> value, std::vector<int> inputs, BackwardFn fn);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& checked(const Tensor<T>& t) const;

 private:
  Tensor<T> leaf(Shape shape, std::vector<T> values, bool needs_grad, Parameter<T>* p);

  friend class Tensor<T>;

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> abs(const Tensor<T>& a);
template <typename T>
Tensor<T> square(const Tensor<T>& a);
/// sqrt(a + eps), elementwise.
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a, double eps);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Stride-1 "same" convolution (cross-correlation). x: Cin x H x W,
/// weight: Cout x Cin x k x k, bias: Cout.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Padding pad);

template <typename T>
Tensor<T> linear_op(const Tensor<T>& x, const LinearMap<T>& map);

/// Bilinear upsampling by an integer factor (half-pixel centres, edge clamp).
template <typename T>
LinearMap<T> bilinear_upsample_map(int channels, int height, int width, int factor);
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int factor);

/// mean((a - b)^2).
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace pei::ad
