#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctrl/errors.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

struct TensorData {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    bool needs_grad = false;  // requires_grad or derived from such a tensor
};

// Shared handle to a dense row-major value buffer. Copies alias the same
// storage; the tape's backward closures keep intermediates alive.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    // Trainable leaf, weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    static Tensor param_uniform(Shape shape, std::size_t fan_in, RngStream& rng);
    static Tensor param_zeros(Shape shape);
    static Tensor param_full(Shape shape, double value);

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::size_t numel() const { return d_->data.size(); }
    std::size_t rank() const { return d_->shape.size(); }
    // Row/column view: 1-D tensors count as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    double value() const;  // numel() == 1
    std::span<const double> data() const { return d_->data; }
    std::span<double> mutable_data() { return d_->data; }
    std::span<const double> grad() const { return d_->grad; }
    bool has_grad() const { return !d_->grad.empty(); }

    bool requires_grad() const { return d_->requires_grad; }
    bool needs_grad() const { return d_ && d_->needs_grad; }
    void set_requires_grad(bool on);
    void zero_grad();
    std::vector<double>& ensure_grad();

    TensorData* node() const { return d_.get(); }

  private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData> d_;
};

// Records every differentiable operation in execution order (inputs always
// precede their consumers) and replays local backward rules in reverse.
// One tape per logical forward pass; tapes are never shared across threads.
class Tape {
  public:
    void set_recording(bool on) { recording_ = on; }
    bool recording() const { return recording_; }
    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    Tensor add(const Tensor& a, const Tensor& b);
    // a: [m x n], bias: [n] or [1 x n], broadcast over rows. The only
    // broadcast the engine supports.
    Tensor add_bias(const Tensor& a, const Tensor& bias);
    // Elementwise x*mul + shift with constants.
    Tensor affine(const Tensor& x, double mul, double shift);
    // Elementwise product with a one-element tensor (trainable scalar).
    Tensor scale_by(const Tensor& x, const Tensor& s);
    Tensor relu(const Tensor& x);
    Tensor sigmoid(const Tensor& x);
    Tensor exp(const Tensor& x);
    Tensor log(const Tensor& x);
    Tensor clamp(const Tensor& x, double lo, double hi);
    // Softmax over the last axis, applied row-wise; subtracts the row max.
    Tensor softmax(const Tensor& x);
    // Concatenate along the last axis; leading dimensions must agree.
    Tensor concat(std::span<const Tensor> parts);
    // Stack k tensors of shape [n] or [1 x n] into [k x n].
    Tensor stack_rows(std::span<const Tensor> rows);
    Tensor slice_last(const Tensor& x, std::size_t offset, std::size_t len);
    // Column means of [m x n] -> [1 x n].
    Tensor mean_rows(const Tensor& x);
    Tensor sum(const Tensor& x);  // -> [1]
    Tensor select_row(const Tensor& table, std::size_t row);

    // Reverse pass from a scalar loss. Gradients accumulate into every
    // requires_grad leaf; the caller zeroes them between steps.
    void backward(const Tensor& loss);

  private:
    struct Record {
        Tensor out;
        std::function<void()> back;
    };

    Tensor make(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs);
    void push(const Tensor& out, std::function<void()> back);

    bool recording_ = true;
    std::vector<Record> records_;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction over a fixed set of named parameters.
// A step with any non-finite gradient is rejected atomically.
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config);

    void step();
    void zero_grad();
    std::int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return config_; }

  private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamConfig config_;
    std::int64_t step_count_ = 0;
};

// Named parameter registry in insertion order. Checkpointing and the
// optimizer both walk it; names are unique.
class ParamStore {
  public:
    Tensor add(const std::string& name, Tensor t);
    const Tensor* find(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t scalar_count() const;
    void zero_grad();

    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& snap);

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace ctrl
