#include "sgrisk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace sgrisk::num {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

thread_local bool g_grad_enabled = true;
thread_local Tape g_tape;

// Recycles value/grad buffers between tensors of the same size.  The
// workload creates millions of short-lived tensors in a handful of
// fixed sizes, so exact-size free lists remove nearly all allocator
// traffic on the hot path.
constexpr std::size_t kPoolMinSize = 16;
constexpr std::size_t kPoolMaxPerBucket = 64;

class BufferPool {
public:
    // Contents of a recycled buffer are stale; callers must overwrite.
    std::vector<double> take(std::size_t n) {
        if (n >= kPoolMinSize) {
            auto it = buckets_.find(n);
            if (it != buckets_.end() && !it->second.empty()) {
                std::vector<double> v = std::move(it->second.back());
                it->second.pop_back();
                return v;
            }
        }
        return std::vector<double>(n);
    }

    void give(std::vector<double>&& v) {
        if (v.size() < kPoolMinSize) return;
        auto& bin = buckets_[v.size()];
        if (bin.size() < kPoolMaxPerBucket) bin.push_back(std::move(v));
    }

private:
    std::unordered_map<std::size_t, std::vector<std::vector<double>>> buckets_;
};

// The alive flag is trivially destructible, so give() stays safe for
// tensors destroyed during thread teardown after the pool is gone.
thread_local bool g_pool_alive = false;
struct PoolHolder {
    BufferPool pool;
    PoolHolder() { g_pool_alive = true; }
    ~PoolHolder() { g_pool_alive = false; }
};
thread_local PoolHolder g_pool;

std::vector<double> pool_take(std::size_t n) {  // stale contents
    return g_pool.pool.take(n);
}

std::vector<double> pool_take_zero(std::size_t n) {
    std::vector<double> v = g_pool.pool.take(n);
    std::fill(v.begin(), v.end(), 0.0);
    return v;
}

void ensure_grad(TensorData& d) {
    if (d.requires_grad && d.grad.size() != d.value.size())
        d.grad = pool_take_zero(d.value.size());
}

// out[m x n] (+)= A[m x k] * B[k x n]
void mm_nn(const double* __restrict a, const double* __restrict b, double* __restrict out, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate) {
    if (n == 1) {
        // Column vector rhs: per-row dot products keep the reduction
        // loop dense instead of a length-1 inner loop.
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p];
            if (accumulate)
                out[i] += acc;
            else
                out[i] = acc;
        }
        return;
    }
    if (!accumulate) std::fill(out, out + m * n, 0.0);
    // 2 output rows x 4 k-rows per pass: cuts the read/write traffic on
    // the output rows, which is what bounds the small-m cases here. The
    // zero-skip matters for one-hot input rows.
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* ar0 = a + i * k;
        const double* ar1 = ar0 + k;
        double* o0 = out + i * n;
        double* o1 = o0 + n;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            const double x0 = ar0[p], x1 = ar0[p + 1], x2 = ar0[p + 2], x3 = ar0[p + 3];
            const double y0 = ar1[p], y1 = ar1[p + 1], y2 = ar1[p + 2], y3 = ar1[p + 3];
            if (x0 == 0.0 && x1 == 0.0 && x2 == 0.0 && x3 == 0.0 && y0 == 0.0 &&
                y1 == 0.0 && y2 == 0.0 && y3 == 0.0)
                continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double v0 = bp[j], v1 = bp[n + j], v2 = bp[2 * n + j],
                             v3 = bp[3 * n + j];
                o0[j] += x0 * v0 + x1 * v1 + x2 * v2 + x3 * v3;
                o1[j] += y0 * v0 + y1 * v1 + y2 * v2 + y3 * v3;
            }
        }
        for (; p < k; ++p) {
            const double xv = ar0[p], yv = ar1[p];
            if (xv == 0.0 && yv == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                o0[j] += xv * brow[j];
                o1[j] += yv * brow[j];
            }
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
            if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
            const double* b0 = b + p * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            for (std::size_t j = 0; j < n; ++j)
                orow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m x k] += G[m x n] * B[k x n]^T
void mm_nt_acc(const double* __restrict g, const double* __restrict b, double* __restrict out, std::size_t m, std::size_t n,
               std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* orow = out + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            orow[p] += acc;
        }
    }
}

// out[k x n] += A[m x k]^T * G[m x n]
void mm_tn_acc(const double* __restrict a, const double* __restrict g, double* __restrict out, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
    }
}

}  // namespace

TensorData::~TensorData() {
    if (!g_pool_alive) return;
    g_pool.pool.give(std::move(value));
    g_pool.pool.give(std::move(grad));
}

Tensor::Tensor(Shape shape, std::vector<double> value, bool requires_grad) {
    if (shape_numel(shape) != value.size())
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(value.size()));
    d_ = std::make_shared<TensorData>();
    d_->shape = std::move(shape);
    d_->value = std::move(value);
    d_->requires_grad = requires_grad;
    ensure_grad(*d_);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v = pool_take_zero(shape_numel(shape));
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double x, bool requires_grad) {
    std::vector<double> v = pool_take(shape_numel(shape));
    std::fill(v.begin(), v.end(), x);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(Shape{1}, {v}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> v, bool requires_grad) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                      bool requires_grad) {
    return Tensor(Shape{rows, cols}, std::move(v), requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
    Tensor t = zeros(Shape{n, n}, requires_grad);
    for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0;
    return t;
}

Tensor Tensor::uniform(Shape shape, double limit, Rng& rng, bool requires_grad) {
    std::vector<double> v = pool_take(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::size_t Tensor::rows() const {
    return d_->shape.size() == 2 ? d_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
    if (d_->shape.size() == 2) return d_->shape[1];
    if (d_->shape.size() == 1) return d_->shape[0];
    return 1;
}

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return d_->value[0];
}

void Tensor::set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    ensure_grad(*d_);
}

std::vector<double>& Tensor::grad() {
    if (!requires_grad()) throw UsageError("grad() on tensor without requires_grad");
    ensure_grad(*d_);
    return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!requires_grad()) throw UsageError("grad() on tensor without requires_grad");
    return d_->grad;
}

void Tensor::zero_grad() {
    if (requires_grad()) d_->grad.assign(d_->value.size(), 0.0);
}

Tape& Tape::active() { return g_tape; }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw UsageError("backward() requires a scalar loss");
    auto d = loss.ptr();
    if (d->requires_grad) {
        ensure_grad(*d);
        d->grad[0] += 1.0;
    }
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }

namespace {

bool tracks(const Tensor& t) { return g_grad_enabled && t.requires_grad(); }

Tensor make_output(Shape shape, std::vector<double> value, bool track) {
    Tensor out(std::move(shape), std::move(value), track);
    return out;
}

}  // namespace

void matmul_raw(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                std::size_t n, bool accumulate) {
    mm_nn(a, b, out, m, k, n, accumulate);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    // Rank-1 operands are interpreted as a row vector (lhs) and a
    // column vector (rhs); the result is always rank 2.
    const std::size_t m = a.rank() == 1 ? 1 : a.rows();
    const std::size_t k = a.rank() == 1 ? a.shape()[0] : a.cols();
    const std::size_t k2 = b.rank() == 1 ? b.shape()[0] : b.rows();
    const std::size_t n = b.rank() == 1 ? 1 : b.cols();
    if (a.rank() > 2 || b.rank() > 2 || k != k2)
        throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    std::vector<double> out = pool_take(m * n);
    mm_nn(a.data(), b.data(), out.data(), m, k, n, false);
    const bool track = tracks(a) || tracks(b);
    Tensor r = make_output(Shape{m, n}, std::move(out), track);
    if (track) {
        auto da = a.ptr(), db = b.ptr(), dr = r.ptr();
        Tape::active().record([da, db, dr, m, k, n] {
            ensure_grad(*dr);
            if (da->requires_grad) {
                ensure_grad(*da);
                mm_nt_acc(dr->grad.data(), db->value.data(), da->grad.data(), m, n, k);
            }
            if (db->requires_grad) {
                ensure_grad(*db);
                mm_tn_acc(da->value.data(), dr->grad.data(), db->grad.data(), m, k, n);
            }
        });
    }
    return r;
}

namespace {

enum class Bcast { Same, Scalar, Row, Col };

// Maps each flat output index to an index of b under the broadcast mode.
struct BcastPlan {
    Bcast mode;
    std::size_t rows, cols;

    std::size_t b_index(std::size_t flat) const {
        switch (mode) {
            case Bcast::Same: return flat;
            case Bcast::Scalar: return 0;
            case Bcast::Row: return flat % cols;
            case Bcast::Col: return flat / cols;
        }
        return 0;
    }
};

BcastPlan plan_broadcast(const Tensor& a, const Tensor& b, const char* opname) {
    BcastPlan p{Bcast::Same, a.rows(), a.cols()};
    if (a.shape() == b.shape()) return p;
    if (b.numel() == 1) {
        p.mode = Bcast::Scalar;
        return p;
    }
    if (a.rank() == 2) {
        if ((b.rank() == 1 && b.shape()[0] == a.cols()) ||
            (b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols())) {
            p.mode = Bcast::Row;
            return p;
        }
        if (b.rank() == 2 && b.cols() == 1 && b.rows() == a.rows()) {
            p.mode = Bcast::Col;
            return p;
        }
    }
    throw ShapeError(std::string(opname) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename F, typename Dfa, typename Dfb>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, Dfa dfa, Dfb dfb) {
    const BcastPlan plan = plan_broadcast(a, b, name);
    std::vector<double> out = pool_take(a.numel());
    const double* av = a.data();
    const double* bv = b.data();
    const std::size_t n = out.size();
    // Specialized loops: keeping the broadcast dispatch out of the inner
    // loop roughly halves the cost of small elementwise ops.
    switch (plan.mode) {
        case Bcast::Same:
            for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
            break;
        case Bcast::Scalar: {
            const double s = bv[0];
            for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], s);
            break;
        }
        case Bcast::Row:
            for (std::size_t r = 0; r < plan.rows; ++r) {
                const std::size_t off = r * plan.cols;
                for (std::size_t j = 0; j < plan.cols; ++j)
                    out[off + j] = f(av[off + j], bv[j]);
            }
            break;
        case Bcast::Col:
            for (std::size_t r = 0; r < plan.rows; ++r) {
                const std::size_t off = r * plan.cols;
                const double s = bv[r];
                for (std::size_t j = 0; j < plan.cols; ++j) out[off + j] = f(av[off + j], s);
            }
            break;
    }
    const bool track = tracks(a) || tracks(b);
    Tensor r = make_output(a.shape(), std::move(out), track);
    if (track) {
        auto da = a.ptr(), db = b.ptr(), dr = r.ptr();
        Tape::active().record([da, db, dr, plan, dfa, dfb] {
            ensure_grad(*dr);
            const auto& g = dr->grad;
            const bool wa = da->requires_grad, wb = db->requires_grad;
            if (wa) ensure_grad(*da);
            if (wb) ensure_grad(*db);
            if (plan.mode == Bcast::Same) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = da->value[i], y = db->value[i];
                    if (wa) da->grad[i] += g[i] * dfa(x, y);
                    if (wb) db->grad[i] += g[i] * dfb(x, y);
                }
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const std::size_t j = plan.b_index(i);
                    const double x = da->value[i], y = db->value[j];
                    if (wa) da->grad[i] += g[i] * dfa(x, y);
                    if (wb) db->grad[j] += g[i] * dfb(x, y);
                }
            }
        });
    }
    return r;
}

template <typename F, typename Dfx>
Tensor unary_op(const Tensor& x, F f, Dfx dfx) {
    std::vector<double> out = pool_take(x.numel());
    const double* xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    const bool track = tracks(x);
    Tensor r = make_output(x.shape(), std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, dfx] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t i = 0; i < dr->grad.size(); ++i)
                dx->grad[i] += dr->grad[i] * dfx(dx->value[i], dr->value[i]);
        });
    }
    return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (!(x.data()[i] > 0.0))
            throw DomainError("log of non-positive value " + std::to_string(x.data()[i]));
    return unary_op(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (x.data()[i] < 0.0)
            throw DomainError("sqrt of negative value " + std::to_string(x.data()[i]));
    return unary_op(
        x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

Tensor neg(const Tensor& x) {
    return unary_op(
        x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor clamp_min(const Tensor& x, double floor) {
    return unary_op(
        x, [floor](double v) { return v < floor ? floor : v; },
        [floor](double v, double) { return v >= floor ? 1.0 : 0.0; });
}

namespace {

struct ReduceDims {
    std::size_t n_slices;   // independent reductions
    std::size_t slice_len;  // entries per reduction
    std::size_t stride;     // step between entries of one slice
    std::size_t base_step;  // step between slice origins
    Shape out_shape;
};

ReduceDims reduce_dims(const Tensor& x, std::optional<std::size_t> axis) {
    if (x.numel() == 0) throw DomainError("reduce over empty tensor");
    if (!axis) return {1, x.numel(), 1, 0, Shape{1}};
    if (*axis >= std::max<std::size_t>(x.rank(), 1))
        throw ShapeError("reduce axis " + std::to_string(*axis) + " out of range for shape " +
                         shape_str(x.shape()));
    if (x.rank() <= 1) return {1, x.numel(), 1, 0, Shape{1}};
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (*axis == 0) return {c, r, c, 1, Shape{c}};
    return {r, c, 1, c, Shape{r}};
}

}  // namespace

Tensor reduce_sum(const Tensor& x, std::optional<std::size_t> axis) {
    const ReduceDims d = reduce_dims(x, axis);
    std::vector<double> out = pool_take_zero(d.n_slices);
    for (std::size_t s = 0; s < d.n_slices; ++s)
        for (std::size_t i = 0; i < d.slice_len; ++i)
            out[s] += x.data()[s * d.base_step + i * d.stride];
    const bool track = tracks(x);
    Tensor r = make_output(d.out_shape, std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, d] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t s = 0; s < d.n_slices; ++s)
                for (std::size_t i = 0; i < d.slice_len; ++i)
                    dx->grad[s * d.base_step + i * d.stride] += dr->grad[s];
        });
    }
    return r;
}

Tensor reduce_mean(const Tensor& x, std::optional<std::size_t> axis) {
    const ReduceDims d = reduce_dims(x, axis);
    const double inv = 1.0 / static_cast<double>(d.slice_len);
    std::vector<double> out = pool_take_zero(d.n_slices);
    for (std::size_t s = 0; s < d.n_slices; ++s) {
        for (std::size_t i = 0; i < d.slice_len; ++i)
            out[s] += x.data()[s * d.base_step + i * d.stride];
        out[s] *= inv;
    }
    const bool track = tracks(x);
    Tensor r = make_output(d.out_shape, std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, d, inv] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t s = 0; s < d.n_slices; ++s)
                for (std::size_t i = 0; i < d.slice_len; ++i)
                    dx->grad[s * d.base_step + i * d.stride] += dr->grad[s] * inv;
        });
    }
    return r;
}

Tensor reduce_max(const Tensor& x, std::optional<std::size_t> axis) {
    const ReduceDims d = reduce_dims(x, axis);
    std::vector<double> out = pool_take(d.n_slices);
    std::vector<std::size_t> arg(d.n_slices);
    for (std::size_t s = 0; s < d.n_slices; ++s) {
        double best = x.data()[s * d.base_step];
        std::size_t best_i = 0;
        for (std::size_t i = 1; i < d.slice_len; ++i) {
            const double v = x.data()[s * d.base_step + i * d.stride];
            if (v > best) {
                best = v;
                best_i = i;
            }
        }
        out[s] = best;
        arg[s] = s * d.base_step + best_i * d.stride;
    }
    const bool track = tracks(x);
    Tensor r = make_output(d.out_shape, std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, arg = std::move(arg)] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t s = 0; s < arg.size(); ++s) dx->grad[arg[s]] += dr->grad[s];
        });
    }
    return r;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= std::max<std::size_t>(x.rank(), 1))
        throw ShapeError("softmax axis out of range for shape " + shape_str(x.shape()));
    // Slice layout mirrors reduce_dims but over the kept axis.
    std::size_t n_slices, slice_len, stride, base_step;
    if (x.rank() <= 1) {
        n_slices = 1;
        slice_len = x.numel();
        stride = 1;
        base_step = 0;
    } else if (axis == 1) {
        n_slices = x.shape()[0];
        slice_len = x.shape()[1];
        stride = 1;
        base_step = x.shape()[1];
    } else {
        n_slices = x.shape()[1];
        slice_len = x.shape()[0];
        stride = x.shape()[1];
        base_step = 1;
    }
    std::vector<double> out = pool_take(x.numel());
    for (std::size_t s = 0; s < n_slices; ++s) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < slice_len; ++i)
            mx = std::max(mx, x.data()[s * base_step + i * stride]);
        double z = 0.0;
        for (std::size_t i = 0; i < slice_len; ++i) {
            const std::size_t idx = s * base_step + i * stride;
            out[idx] = std::exp(x.data()[idx] - mx);
            z += out[idx];
        }
        for (std::size_t i = 0; i < slice_len; ++i) out[s * base_step + i * stride] /= z;
    }
    const bool track = tracks(x);
    Tensor r = make_output(x.shape(), std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, n_slices, slice_len, stride, base_step] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t s = 0; s < n_slices; ++s) {
                double dot = 0.0;
                for (std::size_t i = 0; i < slice_len; ++i) {
                    const std::size_t idx = s * base_step + i * stride;
                    dot += dr->grad[idx] * dr->value[idx];
                }
                for (std::size_t i = 0; i < slice_len; ++i) {
                    const std::size_t idx = s * base_step + i * stride;
                    dx->grad[idx] += dr->value[idx] * (dr->grad[idx] - dot);
                }
            }
        });
    }
    return r;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw UsageError("concat of zero tensors");
    if (parts[0].rank() <= 1 || axis > 1) {
        if (axis != 0) throw ShapeError("concat axis must be 0 for vectors");
        std::size_t total = 0;
        for (const auto& p : parts) {
            if (p.rank() > 1) throw ShapeError("concat mixes vector and matrix operands");
            total += p.numel();
        }
        std::vector<double> out;
        out.reserve(total);
        bool track = false;
        for (const auto& p : parts) {
            out.insert(out.end(), p.data(), p.data() + p.numel());
            track = track || tracks(p);
        }
        Tensor r = make_output(Shape{total}, std::move(out), track);
        if (track) {
            std::vector<std::shared_ptr<TensorData>> ds;
            for (const auto& p : parts) ds.push_back(p.ptr());
            auto dr = r.ptr();
            Tape::active().record([ds = std::move(ds), dr] {
                ensure_grad(*dr);
                std::size_t off = 0;
                for (auto& d : ds) {
                    if (d->requires_grad) {
                        ensure_grad(*d);
                        for (std::size_t i = 0; i < d->value.size(); ++i)
                            d->grad[i] += dr->grad[off + i];
                    }
                    off += d->value.size();
                }
            });
        }
        return r;
    }
    const std::size_t rows0 = parts[0].rows();
    const std::size_t cols0 = parts[0].cols();
    std::size_t rows = rows0, cols = cols0;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto& p = parts[i];
        if (axis == 0) {
            if (p.cols() != cols0)
                throw ShapeError("concat column mismatch: " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
            rows += p.rows();
        } else {
            if (p.rows() != rows0)
                throw ShapeError("concat row mismatch: " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
            cols += p.cols();
        }
    }
    std::vector<double> out = pool_take(rows * cols);
    bool track = false;
    if (axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p.data(), p.data() + p.numel(), out.begin() + off);
            off += p.numel();
            track = track || tracks(p);
        }
    } else {
        std::size_t coff = 0;
        for (const auto& p : parts) {
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(p.data() + i * p.cols(), p.data() + (i + 1) * p.cols(),
                          out.begin() + i * cols + coff);
            coff += p.cols();
            track = track || tracks(p);
        }
    }
    Tensor r = make_output(Shape{rows, cols}, std::move(out), track);
    if (track) {
        std::vector<std::shared_ptr<TensorData>> ds;
        std::vector<std::size_t> part_cols, part_rows;
        for (const auto& p : parts) {
            ds.push_back(p.ptr());
            part_cols.push_back(p.cols());
            part_rows.push_back(p.rows());
        }
        auto dr = r.ptr();
        Tape::active().record(
            [ds = std::move(ds), part_cols = std::move(part_cols),
             part_rows = std::move(part_rows), dr, axis, rows, cols] {
                ensure_grad(*dr);
                if (axis == 0) {
                    std::size_t off = 0;
                    for (std::size_t pi = 0; pi < ds.size(); ++pi) {
                        auto& d = ds[pi];
                        if (d->requires_grad) {
                            ensure_grad(*d);
                            for (std::size_t i = 0; i < d->value.size(); ++i)
                                d->grad[i] += dr->grad[off + i];
                        }
                        off += d->value.size();
                    }
                } else {
                    std::size_t coff = 0;
                    for (std::size_t pi = 0; pi < ds.size(); ++pi) {
                        auto& d = ds[pi];
                        if (d->requires_grad) {
                            ensure_grad(*d);
                            for (std::size_t i = 0; i < rows; ++i)
                                for (std::size_t j = 0; j < part_cols[pi]; ++j)
                                    d->grad[i * part_cols[pi] + j] +=
                                        dr->grad[i * cols + coff + j];
                        }
                        coff += part_cols[pi];
                    }
                }
            });
    }
    return r;
}

Tensor index_select(const Tensor& x, const std::vector<std::size_t>& indices) {
    const std::size_t n_rows = x.rank() == 2 ? x.rows() : x.numel();
    const std::size_t width = x.rank() == 2 ? x.cols() : 1;
    for (auto i : indices)
        if (i >= n_rows)
            throw ShapeError("index_select index " + std::to_string(i) + " out of range [0, " +
                              std::to_string(n_rows) + ")");
    std::vector<double> out = pool_take(indices.size() * width);
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::copy(x.data() + indices[r] * width, x.data() + (indices[r] + 1) * width,
                  out.begin() + r * width);
    const bool track = tracks(x);
    Shape os = x.rank() == 2 ? Shape{indices.size(), width} : Shape{indices.size()};
    Tensor r = make_output(std::move(os), std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, indices, width] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t row = 0; row < indices.size(); ++row)
                for (std::size_t j = 0; j < width; ++j)
                    dx->grad[indices[row] * width + j] += dr->grad[row * width + j];
        });
    }
    return r;
}

Tensor scatter_add(const Tensor& rows, const std::vector<std::size_t>& indices,
                   std::size_t n_out) {
    const std::size_t n_rows = rows.rank() == 2 ? rows.rows() : rows.numel();
    const std::size_t width = rows.rank() == 2 ? rows.cols() : 1;
    if (n_rows != indices.size())
        throw ShapeError("scatter_add: " + std::to_string(indices.size()) + " indices for " +
                         std::to_string(n_rows) + " rows");
    for (auto i : indices)
        if (i >= n_out)
            throw ShapeError("scatter_add index " + std::to_string(i) + " out of range [0, " +
                              std::to_string(n_out) + ")");
    std::vector<double> out = pool_take_zero(n_out * width);
    for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t j = 0; j < width; ++j)
            out[indices[r] * width + j] += rows.data()[r * width + j];
    const bool track = tracks(rows);
    Shape os = rows.rank() == 2 ? Shape{n_out, width} : Shape{n_out};
    Tensor r = make_output(std::move(os), std::move(out), track);
    if (track) {
        auto dx = rows.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, indices, width] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t row = 0; row < indices.size(); ++row)
                for (std::size_t j = 0; j < width; ++j)
                    dx->grad[row * width + j] += dr->grad[indices[row] * width + j];
        });
    }
    return r;
}

Tensor row_scale(const Tensor& x, const std::vector<double>& coeffs) {
    const std::size_t n_rows = x.rank() == 2 ? x.rows() : x.numel();
    const std::size_t width = x.rank() == 2 ? x.cols() : 1;
    if (coeffs.size() != n_rows)
        throw ShapeError("row_scale: " + std::to_string(coeffs.size()) + " coeffs for " +
                         std::to_string(n_rows) + " rows");
    std::vector<double> out = pool_take(x.numel());
    for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t j = 0; j < width; ++j)
            out[r * width + j] = x.data()[r * width + j] * coeffs[r];
    const bool track = tracks(x);
    Tensor res = make_output(x.shape(), std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = res.ptr();
        Tape::active().record([dx, dr, coeffs, width] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t r = 0; r < coeffs.size(); ++r)
                for (std::size_t j = 0; j < width; ++j)
                    dx->grad[r * width + j] += dr->grad[r * width + j] * coeffs[r];
        });
    }
    return res;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    const bool track = tracks(x);
    std::vector<double> out = pool_take(x.numel());
    std::copy(x.data(), x.data() + x.numel(), out.begin());
    Tensor r = make_output(std::move(shape), std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t i = 0; i < dr->grad.size(); ++i) dx->grad[i] += dr->grad[i];
        });
    }
    return r;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout probability " + std::to_string(p) + " outside [0, 1)");
    if (!training || p == 0.0) return x;
    const double scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.numel());
    std::vector<double> out = pool_take(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = rng.bernoulli(p) ? 0.0 : scale;
        out[i] = x.data()[i] * mask[i];
    }
    const bool track = tracks(x);
    Tensor r = make_output(x.shape(), std::move(out), track);
    if (track) {
        auto dx = x.ptr(), dr = r.ptr();
        Tape::active().record([dx, dr, mask = std::move(mask)] {
            ensure_grad(*dr);
            ensure_grad(*dx);
            for (std::size_t i = 0; i < mask.size(); ++i) dx->grad[i] += dr->grad[i] * mask[i];
        });
    }
    return r;
}

}  // namespace sgrisk::num
