#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sgrisk/errors.hpp"
#include "sgrisk/rng.hpp"

namespace sgrisk::num {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily, only when requires_grad
    bool requires_grad = false;

    TensorData() = default;
    ~TensorData();  // recycles the buffers through a thread-local pool
    TensorData(const TensorData&) = delete;
    TensorData& operator=(const TensorData&) = delete;
};

// Handle to a dense 64-bit tensor (rank 0..2 in practice).  Copies are
// shallow; the differentiation tape keeps inputs alive through the
// recorded backward closures.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> value, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor vector(std::vector<double> v, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                         bool requires_grad = false);
    static Tensor identity(std::size_t n, bool requires_grad = false);
    // Uniform in [-limit, limit]; used for parameter init.
    static Tensor uniform(Shape shape, double limit, Rng& rng, bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    std::size_t numel() const { return d_->value.size(); }
    std::size_t rank() const { return d_->shape.size(); }
    // Matrix view helpers: a vector is treated as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return d_->value.data(); }
    const double* data() const { return d_->value.data(); }
    const std::vector<double>& values() const { return d_->value; }
    double item() const;
    double at(std::size_t i) const { return d_->value[i]; }

    bool requires_grad() const { return d_ && d_->requires_grad; }
    void set_requires_grad(bool rg);
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    std::shared_ptr<TensorData> ptr() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

// Per-thread differentiation tape.  Operations append backward closures
// in creation order; backward() replays them in exact reverse order.
class Tape {
public:
    static Tape& active();

    void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }
    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates adjoints for every
    // requires_grad tensor reachable from the recorded computation.
    void backward(const Tensor& loss);

private:
    std::vector<std::function<void()>> records_;
};

inline void backward(const Tensor& loss) { Tape::active().backward(loss); }

// Whether ops record onto the tape; NoGrad disables recording for
// inference paths.
bool grad_enabled();

class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    bool prev_;
};

// ---- operations ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Raw dense kernel shared with matmul: out[m x n] = (or += when
// `accumulate`) a[m x k] * b[k x n].  For inference paths that manage
// their own buffers.
void matmul_raw(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate);

// Binary elementwise ops; the second argument may broadcast as a scalar,
// a row vector over a matrix, or a column vector over a matrix.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);

// Reductions; axis omitted reduces over all entries to a scalar.
Tensor reduce_sum(const Tensor& x, std::optional<std::size_t> axis = std::nullopt);
Tensor reduce_mean(const Tensor& x, std::optional<std::size_t> axis = std::nullopt);
// Max routes the gradient to the first argmax on ties.
Tensor reduce_max(const Tensor& x, std::optional<std::size_t> axis = std::nullopt);

Tensor softmax(const Tensor& x, std::size_t axis = 0);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// Row gather / scatter (adjoints of each other).
Tensor index_select(const Tensor& x, const std::vector<std::size_t>& indices);
Tensor scatter_add(const Tensor& rows, const std::vector<std::size_t>& indices,
                   std::size_t n_out);

// Multiplies row i by the constant coeffs[i]; coefficients are not
// differentiated through.
Tensor row_scale(const Tensor& x, const std::vector<double>& coeffs);

Tensor reshape(const Tensor& x, Shape shape);

// Inverted dropout: training mode zeroes entries with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

}  // namespace sgrisk::num
