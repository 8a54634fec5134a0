#include "ctrl/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ctrl {

namespace {

std::size_t product(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void accumulate(const Tensor& t, std::size_t i, double g) {
    t.node()->grad[i] += g;
}

bool prepare_grad(const Tensor& t) {
    if (!t.needs_grad()) return false;
    const_cast<Tensor&>(t).ensure_grad();
    return true;
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(Shape shape) {
    auto d = std::make_shared<TensorData>();
    d->data.assign(product(shape), 0.0);
    d->shape = std::move(shape);
    return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.d_->data.begin(), t.d_->data.end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (product(shape) != values.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->data = std::move(values);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::param_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
    Tensor t = zeros(std::move(shape));
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    for (auto& v : t.d_->data) v = (2.0 * rng.uniform_real() - 1.0) * bound;
    t.set_requires_grad(true);
    return t;
}

Tensor Tensor::param_zeros(Shape shape) {
    Tensor t = zeros(std::move(shape));
    t.set_requires_grad(true);
    return t;
}

Tensor Tensor::param_full(Shape shape, double value) {
    Tensor t = full(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() > 2) throw DimensionError("rows: tensor rank > 2: " + shape_str(shape()));
    return rank() == 2 ? d_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
    if (rank() > 2) throw DimensionError("cols: tensor rank > 2: " + shape_str(shape()));
    return d_->shape.empty() ? 0 : d_->shape.back();
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value: tensor is not a scalar, shape " + shape_str(shape()));
    }
    return d_->data[0];
}

void Tensor::set_requires_grad(bool on) {
    d_->requires_grad = on;
    d_->needs_grad = on;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

std::vector<double>& Tensor::ensure_grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
    return d_->grad;
}

Tensor Tape::make(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs) {
    Tensor out = Tensor::from(std::move(shape), std::move(values));
    if (recording_) {
        for (const auto& in : inputs) {
            if (in.needs_grad()) {
                out.node()->needs_grad = true;
                break;
            }
        }
    }
    return out;
}

void Tape::push(const Tensor& out, std::function<void()> back) {
    if (out.needs_grad()) records_.push_back({out, std::move(back)});
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> v(m * n, 0.0);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) v[i * n + j] += aip * bd[p * n + j];
        }
    }
    Tensor out = make({m, n}, std::move(v), {a, b});
    push(out, [a, b, out, m, k, n] {
        const auto g = out.grad();
        const auto ad = a.data();
        const auto bd = b.data();
        if (prepare_grad(a)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[p * n + j];
                    accumulate(a, i * k + p, s);
                }
        }
        if (prepare_grad(b)) {
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    const double aip = ad[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) accumulate(b, p * n + j, aip * g[i * n + j]);
                }
        }
    });
    return out;
}

Tensor Tape::transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> v(m * n);
    const auto ad = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = ad[i * n + j];
    Tensor out = make({n, m}, std::move(v), {a});
    push(out, [a, out, m, n] {
        if (!prepare_grad(a)) return;
        const auto g = out.grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) accumulate(a, i * n + j, g[j * m + i]);
    });
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    std::vector<double> v(a.numel());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = ad[i] + bd[i];
    Tensor out = make(a.shape(), std::move(v), {a, b});
    push(out, [a, b, out] {
        const auto g = out.grad();
        if (prepare_grad(a))
            for (std::size_t i = 0; i < g.size(); ++i) accumulate(a, i, g[i]);
        if (prepare_grad(b))
            for (std::size_t i = 0; i < g.size(); ++i) accumulate(b, i, g[i]);
    });
    return out;
}

Tensor Tape::add_bias(const Tensor& a, const Tensor& bias) {
    if (a.rank() != 2 || bias.numel() != a.shape()[1]) {
        throw DimensionError("add_bias: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(bias.shape()));
    }
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> v(m * n);
    const auto ad = a.data();
    const auto bd = bias.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = ad[i * n + j] + bd[j];
    Tensor out = make({m, n}, std::move(v), {a, bias});
    push(out, [a, bias, out, m, n] {
        const auto g = out.grad();
        if (prepare_grad(a))
            for (std::size_t i = 0; i < g.size(); ++i) accumulate(a, i, g[i]);
        if (prepare_grad(bias)) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) s += g[i * n + j];
                accumulate(bias, j, s);
            }
        }
    });
    return out;
}

Tensor Tape::affine(const Tensor& x, double mul, double shift) {
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = xd[i] * mul + shift;
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out, mul] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        for (std::size_t i = 0; i < g.size(); ++i) accumulate(x, i, g[i] * mul);
    });
    return out;
}

Tensor Tape::scale_by(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) {
        throw DimensionError("scale_by: scale must be one element, got " + shape_str(s.shape()));
    }
    const double sv = s.data()[0];
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = xd[i] * sv;
    Tensor out = make(x.shape(), std::move(v), {x, s});
    push(out, [x, s, out, sv] {
        const auto g = out.grad();
        if (prepare_grad(x))
            for (std::size_t i = 0; i < g.size(); ++i) accumulate(x, i, g[i] * sv);
        if (prepare_grad(s)) {
            const auto xd = x.data();
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xd[i];
            accumulate(s, 0, acc);
        }
    });
    return out;
}

Tensor Tape::relu(const Tensor& x) {
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const auto xd = x.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xd[i] > 0.0) accumulate(x, i, g[i]);
    });
    return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const auto od = out.data();
        for (std::size_t i = 0; i < g.size(); ++i) accumulate(x, i, g[i] * od[i] * (1.0 - od[i]));
    });
    return out;
}

Tensor Tape::exp(const Tensor& x) {
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(xd[i]);
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const auto od = out.data();
        for (std::size_t i = 0; i < g.size(); ++i) accumulate(x, i, g[i] * od[i]);
    });
    return out;
}

Tensor Tape::log(const Tensor& x) {
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(xd[i] > 0.0)) {
            throw NumericError("log: non-positive input " + std::to_string(xd[i]));
        }
        v[i] = std::log(xd[i]);
    }
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const auto xd = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) accumulate(x, i, g[i] / xd[i]);
    });
    return out;
}

Tensor Tape::clamp(const Tensor& x, double lo, double hi) {
    if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(std::max(xd[i], lo), hi);
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out, lo, hi] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const auto xd = x.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xd[i] >= lo && xd[i] <= hi) accumulate(x, i, g[i]);
    });
    return out;
}

Tensor Tape::softmax(const Tensor& x) {
    if (x.numel() == 0) throw DomainError("softmax: empty input");
    const std::size_t last = x.shape().back();
    const std::size_t rows = x.numel() / last;
    std::vector<double> v(x.numel());
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * last;
        double mx = xd[base];
        for (std::size_t j = 1; j < last; ++j) mx = std::max(mx, xd[base + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < last; ++j) {
            v[base + j] = std::exp(xd[base + j] - mx);
            sum += v[base + j];
        }
        for (std::size_t j = 0; j < last; ++j) v[base + j] /= sum;
    }
    Tensor out = make(x.shape(), std::move(v), {x});
    push(out, [x, out, rows, last] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const auto od = out.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * last;
            double dot = 0.0;
            for (std::size_t j = 0; j < last; ++j) dot += g[base + j] * od[base + j];
            for (std::size_t j = 0; j < last; ++j)
                accumulate(x, base + j, od[base + j] * (g[base + j] - dot));
        }
    });
    return out;
}

Tensor Tape::concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const std::size_t rows = parts.front().rows();
    const bool two_d = parts.front().rank() == 2;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows || (p.rank() == 2) != two_d) {
            throw DimensionError("concat: incompatible part shape " + shape_str(p.shape()));
        }
        total += p.cols();
    }
    std::vector<double> v(rows * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        const auto pd = p.data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) v[r * total + off + j] = pd[r * w + j];
        off += w;
    }
    Shape shape = two_d ? Shape{rows, total} : Shape{total};
    Tensor out = Tensor::from(std::move(shape), std::move(v));
    if (recording_) {
        for (const auto& p : parts)
            if (p.needs_grad()) {
                out.node()->needs_grad = true;
                break;
            }
    }
    std::vector<Tensor> held(parts.begin(), parts.end());
    push(out, [held = std::move(held), out, rows, total] {
        const auto g = out.grad();
        std::size_t off = 0;
        for (const auto& p : held) {
            const std::size_t w = p.cols();
            if (prepare_grad(p)) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) accumulate(p, r * w + j, g[r * total + off + j]);
            }
            off += w;
        }
    });
    return out;
}

Tensor Tape::stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) throw ContractError("stack_rows: no inputs");
    const std::size_t n = rows.front().numel();
    std::vector<double> v;
    v.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.numel() != n || r.rows() != 1) {
            throw DimensionError("stack_rows: expected row of " + std::to_string(n) +
                                 " values, got " + shape_str(r.shape()));
        }
        const auto rd = r.data();
        v.insert(v.end(), rd.begin(), rd.end());
    }
    Tensor out = Tensor::from({rows.size(), n}, std::move(v));
    if (recording_) {
        for (const auto& r : rows)
            if (r.needs_grad()) {
                out.node()->needs_grad = true;
                break;
            }
    }
    std::vector<Tensor> held(rows.begin(), rows.end());
    push(out, [held = std::move(held), out, n] {
        const auto g = out.grad();
        for (std::size_t r = 0; r < held.size(); ++r) {
            if (!prepare_grad(held[r])) continue;
            for (std::size_t j = 0; j < n; ++j) accumulate(held[r], j, g[r * n + j]);
        }
    });
    return out;
}

Tensor Tape::slice_last(const Tensor& x, std::size_t offset, std::size_t len) {
    const std::size_t last = x.shape().back();
    if (offset + len > last) {
        throw DimensionError("slice_last: range [" + std::to_string(offset) + ", " +
                             std::to_string(offset + len) + ") exceeds width " + std::to_string(last));
    }
    const std::size_t rows = x.numel() / last;
    std::vector<double> v(rows * len);
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < len; ++j) v[r * len + j] = xd[r * last + offset + j];
    Shape shape = x.shape();
    shape.back() = len;
    Tensor out = make(std::move(shape), std::move(v), {x});
    push(out, [x, out, offset, len, rows, last] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < len; ++j) accumulate(x, r * last + offset + j, g[r * len + j]);
    });
    return out;
}

Tensor Tape::mean_rows(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("mean_rows: expected rank 2, got " + shape_str(x.shape()));
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (m == 0) throw ContractError("mean_rows: zero rows");
    std::vector<double> v(n, 0.0);
    const auto xd = x.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j] += xd[i * n + j];
    for (auto& val : v) val /= static_cast<double>(m);
    Tensor out = make({1, n}, std::move(v), {x});
    push(out, [x, out, m, n] {
        if (!prepare_grad(x)) return;
        const auto g = out.grad();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) accumulate(x, i * n + j, g[j] * inv);
    });
    return out;
}

Tensor Tape::sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = make({1}, {s}, {x});
    push(out, [x, out] {
        if (!prepare_grad(x)) return;
        const double g = out.grad()[0];
        for (std::size_t i = 0; i < x.numel(); ++i) accumulate(x, i, g);
    });
    return out;
}

Tensor Tape::select_row(const Tensor& table, std::size_t row) {
    if (table.rank() != 2) {
        throw DimensionError("select_row: expected rank 2, got " + shape_str(table.shape()));
    }
    const std::size_t n = table.shape()[1];
    if (row >= table.shape()[0]) {
        throw DimensionError("select_row: row " + std::to_string(row) + " out of " +
                             std::to_string(table.shape()[0]));
    }
    std::vector<double> v(n);
    const auto td = table.data();
    for (std::size_t j = 0; j < n; ++j) v[j] = td[row * n + j];
    Tensor out = make({1, n}, std::move(v), {table});
    push(out, [table, out, row, n] {
        if (!prepare_grad(table)) return;
        const auto g = out.grad();
        for (std::size_t j = 0; j < n; ++j) accumulate(table, row * n + j, g[j]);
    });
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a defined scalar tensor");
    }
    // Reset adjoints of everything this tape produced, then seed the loss.
    // Leaf gradients are left alone so they accumulate across tapes.
    for (auto& rec : records_) rec.out.zero_grad();
    if (!loss.needs_grad()) return;
    const_cast<Tensor&>(loss).ensure_grad()[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->out.has_grad()) it->back();
    }
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, t] : params_) {
        m_.emplace_back(t.numel(), 0.0);
        v_.emplace_back(t.numel(), 0.0);
    }
}

void AdamOptimizer::step() {
    for (const auto& [name, t] : params_) {
        for (double g : t.grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("adam: non-finite gradient in parameter '" + name + "'");
            }
        }
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor t = params_[p].second;
        auto data = t.mutable_data();
        const auto grad = t.grad();
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = i < grad.size() ? grad[i] : 0.0;
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (find(name)) throw ConfigError("param store: duplicate parameter '" + name + "'");
    items_.emplace_back(name, t);
    return t;
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return &t;
    return nullptr;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : items_) const_cast<Tensor&>(t).zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(items_.size());
    for (const auto& [name, t] : items_) snap.emplace_back(t.data().begin(), t.data().end());
    return snap;
}

void ParamStore::restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != items_.size()) throw ContractError("param store: snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
        Tensor t = items_[i].second;
        if (snap[i].size() != t.numel()) throw ContractError("param store: snapshot shape mismatch");
        std::copy(snap[i].begin(), snap[i].end(), t.mutable_data().begin());
    }
}

}  // namespace ctrl
