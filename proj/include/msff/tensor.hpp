#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace msff {

// Numeric mode for newly created tensors: f32 for training speed, f64 for
// gradient verification. One global engine setting, not per-tensor.
enum class Dtype { f32, f64 };

Dtype default_dtype();
void set_default_dtype(Dtype d);
const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& name);

/// Sets the global numeric mode for its lifetime, restoring the old one.
class DtypeScope {
 public:
  explicit DtypeScope(Dtype d) : prev_(default_dtype()) { set_default_dtype(d); }
  ~DtypeScope() { set_default_dtype(prev_); }
  DtypeScope(const DtypeScope&) = delete;
  DtypeScope& operator=(const DtypeScope&) = delete;

 private:
  Dtype prev_;
};

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

Buffer make_buffer(Dtype d, std::int64_t n);

class Tape;

struct TensorImpl {
  Shape shape;
  Dtype dtype = Dtype::f32;
  Buffer data;
  bool requires_grad = false;
  std::unique_ptr<Buffer> grad;  // lazily allocated; same shape and dtype
  Tape* producer = nullptr;      // tape whose op produced this value

  template <typename T>
  T* ptr() {
    return std::get<std::vector<T>>(data).data();
  }
  template <typename T>
  const T* ptr() const {
    return std::get<std::vector<T>>(data).data();
  }
};

// Calls f with a value of the active scalar type (float or double).
template <typename F>
decltype(auto) dispatch_dtype(Dtype d, F&& f) {
  if (d == Dtype::f32) return f(float{});
  return f(double{});
}

// Grad buffer access for op backward implementations.
template <typename T>
T* ensure_grad(TensorImpl& t);
template <typename T>
const T* grad_ptr(const TensorImpl& t);  // nullptr when absent

/// N x C x H x W tensor handle with optional recorded gradient. Values are
/// immutable once placed on a tape; all ops produce fresh tensors.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s);
  static Tensor zeros(Shape s, Dtype d);
  static Tensor full(Shape s, double value);
  static Tensor from_values(Shape s, const std::vector<double>& values);
  static Tensor rand_uniform(Shape s, double lo, double hi, std::mt19937_64& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Dtype dtype() const { return impl_->dtype; }
  std::int64_t numel() const { return impl_->shape.numel(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return impl_ && impl_->grad != nullptr; }
  /// Copy of the accumulated gradient as a plain tensor.
  Tensor grad() const;
  void zero_grad() const;   // allocate (if needed) and clear
  void clear_grad() const;  // drop the buffer entirely

  double at_flat(std::int64_t i) const;
  void set_flat(std::int64_t i, double v);
  double at(int n, int c, int y, int x) const;
  void set(int n, int c, int y, int x, double v);
  /// Value of a single-element tensor.
  double item() const;

  template <typename T>
  T* data() {
    return impl_->ptr<T>();
  }
  template <typename T>
  const T* data() const {
    return impl_->ptr<T>();
  }

  Tensor clone() const;  // deep copy of values (grad not copied)
  bool all_finite() const;

  /// Text dump: "N C H W" header line, then whitespace-separated values.
  void save_txt(const std::string& path) const;
  static Tensor load_txt(const std::string& path);

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  TensorImpl* raw() const { return impl_.get(); }

  static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Wengert list of recorded ops. One tape per training thread; installs
/// itself as the active tape for the current thread on construction.
class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backprop;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(Node node);
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss recorded on this tape. Gradients
  /// accumulate additively across multiple uses of a tensor.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
};

/// Disables op recording for its lifetime (inference / oracle evaluation).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
};

bool grad_recording_enabled();

namespace autograd {

bool should_record(std::initializer_list<Tensor> inputs);
bool should_record(const std::vector<Tensor>& inputs);

/// Marks `out` as produced by `op` on the active tape. `backprop` reads the
/// output grad and accumulates into the inputs' grads.
void record(const char* op, std::initializer_list<Tensor> inputs, Tensor& out,
            std::function<void()> backprop);
void record(const char* op, const std::vector<Tensor>& inputs, Tensor& out,
            std::function<void()> backprop);

}  // namespace autograd

/// Caps OpenBLAS worker threads from the MSFF_THREADS environment variable.
void init_threads_from_env();

}  // namespace msff
