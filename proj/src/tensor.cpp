#include "msff/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

extern "C" void openblas_set_num_threads(int);

namespace msff {

namespace {
Dtype g_default_dtype = Dtype::f32;
thread_local Tape* g_active_tape = nullptr;
thread_local int g_no_grad_depth = 0;
}  // namespace

Dtype default_dtype() { return g_default_dtype; }
void set_default_dtype(Dtype d) { g_default_dtype = d; }

const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype dtype_from_name(const std::string& name) {
  if (name == "f32") return Dtype::f32;
  if (name == "f64") return Dtype::f64;
  throw std::runtime_error("unknown dtype name: " + name);
}

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

Buffer make_buffer(Dtype d, std::int64_t n) {
  if (d == Dtype::f32) return std::vector<float>(static_cast<std::size_t>(n), 0.f);
  return std::vector<double>(static_cast<std::size_t>(n), 0.0);
}

template <typename T>
T* ensure_grad(TensorImpl& t) {
  if (!t.grad) t.grad = std::make_unique<Buffer>(make_buffer(t.dtype, t.shape.numel()));
  return std::get<std::vector<T>>(*t.grad).data();
}
template float* ensure_grad<float>(TensorImpl&);
template double* ensure_grad<double>(TensorImpl&);

template <typename T>
const T* grad_ptr(const TensorImpl& t) {
  if (!t.grad) return nullptr;
  return std::get<std::vector<T>>(*t.grad).data();
}
template const float* grad_ptr<float>(const TensorImpl&);
template const double* grad_ptr<double>(const TensorImpl&);

namespace {

std::shared_ptr<TensorImpl> new_impl(Shape s, Dtype d) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->dtype = d;
  impl->data = make_buffer(d, s.numel());
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape s) { return zeros(s, default_dtype()); }

Tensor Tensor::zeros(Shape s, Dtype d) { return wrap(new_impl(s, d)); }

Tensor Tensor::full(Shape s, double value) {
  Tensor t = zeros(s);
  dispatch_dtype(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* p = t.data<T>();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<T>(value);
  });
  return t;
}

Tensor Tensor::from_values(Shape s, const std::vector<double>& values) {
  if (static_cast<std::int64_t>(values.size()) != s.numel())
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + s.str());
  Tensor t = zeros(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set_flat(i, values[static_cast<std::size_t>(i)]);
  return t;
}

Tensor Tensor::rand_uniform(Shape s, double lo, double hi, std::mt19937_64& rng) {
  Tensor t = zeros(s);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set_flat(i, dist(rng));
  return t;
}

Tensor Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("tensor has no gradient");
  Tensor g = zeros(shape(), dtype());
  dispatch_dtype(dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = std::get<std::vector<T>>(*impl_->grad).data();
    T* dst = g.data<T>();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i];
  });
  return g;
}

void Tensor::zero_grad() const {
  dispatch_dtype(dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* g = ensure_grad<T>(*impl_);
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) g[i] = T(0);
  });
}

void Tensor::clear_grad() const { impl_->grad.reset(); }

double Tensor::at_flat(std::int64_t i) const {
  return dispatch_dtype(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(impl_->ptr<T>()[i]);
  });
}

void Tensor::set_flat(std::int64_t i, double v) {
  dispatch_dtype(dtype(), [&](auto tag) {
    using T = decltype(tag);
    impl_->ptr<T>()[i] = static_cast<T>(v);
  });
}

double Tensor::at(int n, int c, int y, int x) const {
  const Shape& s = shape();
  return at_flat(((static_cast<std::int64_t>(n) * s.c + c) * s.h + y) * s.w + x);
}

void Tensor::set(int n, int c, int y, int x, double v) {
  const Shape& s = shape();
  set_flat(((static_cast<std::int64_t>(n) * s.c + c) * s.h + y) * s.w + x, v);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return at_flat(0);
}

Tensor Tensor::clone() const {
  Tensor t = zeros(shape(), dtype());
  dispatch_dtype(dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = data<T>();
    T* dst = t.data<T>();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i];
  });
  return t;
}

bool Tensor::all_finite() const {
  return dispatch_dtype(dtype(), [&](auto tag) -> bool {
    using T = decltype(tag);
    const T* p = data<T>();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i)
      if (!std::isfinite(static_cast<double>(p[i]))) return false;
    return true;
  });
}

void Tensor::save_txt(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const Shape& s = shape();
  out << s.n << " " << s.c << " " << s.h << " " << s.w << "\n";
  char buf[64];
  const int digits = dtype() == Dtype::f32 ? 9 : 17;
  for (std::int64_t i = 0; i < numel(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.*g", digits, at_flat(i));
    out << buf << (i + 1 == numel() ? "\n" : " ");
  }
}

Tensor Tensor::load_txt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  Shape s;
  if (!(in >> s.n >> s.c >> s.h >> s.w)) throw std::runtime_error("bad tensor header in " + path);
  Tensor t = zeros(s);
  double v = 0;
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (!(in >> v)) throw std::runtime_error("truncated tensor payload in " + path);
    t.set_flat(i, v);
  }
  return t;
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(Node node) {
  node.output->producer = this;
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward on non-scalar tensor of shape " + loss.shape().str());
  if (loss.impl()->producer != this)
    throw std::runtime_error("backward: loss was not produced on the current tape");
  dispatch_dtype(loss.dtype(), [&](auto tag) {
    using T = decltype(tag);
    ensure_grad<T>(*loss.impl())[0] = T(1);
  });
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output->grad) continue;  // no gradient flowed into this value
    it->backprop();
  }
}

NoGradScope::NoGradScope() { ++g_no_grad_depth; }
NoGradScope::~NoGradScope() { --g_no_grad_depth; }

bool grad_recording_enabled() { return g_active_tape != nullptr && g_no_grad_depth == 0; }

namespace autograd {

bool should_record(std::initializer_list<Tensor> inputs) {
  if (!grad_recording_enabled()) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

bool should_record(const std::vector<Tensor>& inputs) {
  if (!grad_recording_enabled()) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

void record(const char* op, std::initializer_list<Tensor> inputs, Tensor& out,
            std::function<void()> backprop) {
  record(op, std::vector<Tensor>(inputs), out, std::move(backprop));
}

void record(const char* op, const std::vector<Tensor>& inputs, Tensor& out,
            std::function<void()> backprop) {
  Tape::Node node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node.inputs.push_back(t.impl());
  node.output = out.impl();
  node.backprop = std::move(backprop);
  out.set_requires_grad(true);
  Tape::active()->record(std::move(node));
}

}  // namespace autograd

void init_threads_from_env() {
  if (const char* v = std::getenv("MSFF_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) openblas_set_num_threads(n);
  }
}

}  // namespace msff
