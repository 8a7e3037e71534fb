#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfcdn/rng.hpp"

namespace bfcdn {

enum class Padding { Same, Valid };

template <class S>
struct TensorT;

template <class S>
using TensorPtr = std::shared_ptr<TensorT<S>>;

// Dense N-d tensor node. Values are row-major; grad is allocated on demand
// during backward. parents/backward_fn form the computation graph.
template <class S>
struct TensorT {
    std::vector<int> dims;
    std::vector<S> values;
    std::vector<S> grad;
    bool requires_grad = false;
    std::vector<TensorPtr<S>> parents;
    std::function<void(TensorT<S>&)> backward_fn;
    const char* op = "leaf";

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    int dim(int i) const { return dims.at(static_cast<std::size_t>(i)); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), S(0));
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
        os << ']';
        return os.str();
    }
};

namespace detail {

inline std::int64_t numel(const std::vector<int>& dims) {
    std::int64_t n = 1;
    for (const int d : dims) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
        n *= d;
    }
    return n;
}

[[noreturn]] inline void shape_error(const std::string& msg) {
    throw std::invalid_argument("shape error: " + msg);
}

}  // namespace detail

template <class S>
TensorPtr<S> make_tensor(std::vector<int> dims, std::vector<S> values, bool requires_grad = false) {
    auto t = std::make_shared<TensorT<S>>();
    if (static_cast<std::int64_t>(values.size()) != detail::numel(dims))
        detail::shape_error("value count does not match dims");
    t->dims = std::move(dims);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

template <class S>
TensorPtr<S> zeros(std::vector<int> dims, bool requires_grad = false) {
    const auto n = detail::numel(dims);
    return make_tensor<S>(std::move(dims), std::vector<S>(static_cast<std::size_t>(n), S(0)), requires_grad);
}

template <class S>
TensorPtr<S> full(std::vector<int> dims, S value, bool requires_grad = false) {
    const auto n = detail::numel(dims);
    return make_tensor<S>(std::move(dims), std::vector<S>(static_cast<std::size_t>(n), value), requires_grad);
}

template <class S>
TensorPtr<S> scalar_tensor(S value, bool requires_grad = false) {
    return make_tensor<S>({1}, std::vector<S>{value}, requires_grad);
}

template <class S>
void check_finite(const TensorT<S>& t, const char* where) {
    for (const S v : t.values) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw std::runtime_error(std::string("non-finite value in ") + where);
        }
    }
}

namespace detail {

template <class S>
TensorPtr<S> make_result(std::vector<int> dims, std::vector<S> values,
                         std::vector<TensorPtr<S>> parents, const char* op) {
    auto t = make_tensor<S>(std::move(dims), std::move(values));
    for (const auto& p : parents) {
        if (p->requires_grad) t->requires_grad = true;
    }
    t->parents = std::move(parents);
    t->op = op;
    return t;
}

// C[M x N] += A[M x K] * B[K x N], all row-major.
template <class S>
void gemm_acc(int M, int K, int N, const S* A, const S* B, S* C) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(M) * K * N > 65536)
#endif
    for (int i = 0; i < M; ++i) {
        S* crow = C + static_cast<std::size_t>(i) * N;
        const S* arow = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const S a = arow[k];
            if (a == S(0)) continue;
            const S* brow = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M x N] += A[K x M]^T * B[K x N]
template <class S>
void gemm_tn_acc(int M, int K, int N, const S* A, const S* B, S* C) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(M) * K * N > 65536)
#endif
    for (int i = 0; i < M; ++i) {
        S* crow = C + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const S a = A[static_cast<std::size_t>(k) * M + i];
            if (a == S(0)) continue;
            const S* brow = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M x N] += A[M x K] * B[N x K]^T
template <class S>
void gemm_nt_acc(int M, int K, int N, const S* A, const S* B, S* C) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(M) * K * N > 65536)
#endif
    for (int i = 0; i < M; ++i) {
        S* crow = C + static_cast<std::size_t>(i) * N;
        const S* arow = A + static_cast<std::size_t>(i) * K;
        for (int j = 0; j < N; ++j) {
            const S* brow = B + static_cast<std::size_t>(j) * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += static_cast<double>(arow[k]) * brow[k];
            crow[j] += static_cast<S>(acc);
        }
    }
}

// Unroll one sample's receptive fields into col[Cin*kH*kW x Ho*Wo].
template <class S>
void im2col(const S* x, int Cin, int H, int W, int kH, int kW, int padH, int padW,
            int Ho, int Wo, S* col) {
    for (int c = 0; c < Cin; ++c) {
        const S* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < kH; ++ki) {
            for (int kj = 0; kj < kW; ++kj) {
                S* row = col + (static_cast<std::size_t>(c) * kH * kW + ki * kW + kj) *
                                   static_cast<std::size_t>(Ho) * Wo;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi + ki - padH;
                    if (ii < 0 || ii >= H) {
                        std::fill(row + static_cast<std::size_t>(oi) * Wo,
                                  row + static_cast<std::size_t>(oi + 1) * Wo, S(0));
                        continue;
                    }
                    const S* xr = xc + static_cast<std::size_t>(ii) * W;
                    S* dst = row + static_cast<std::size_t>(oi) * Wo;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj + kj - padW;
                        dst[oj] = (jj >= 0 && jj < W) ? xr[jj] : S(0);
                    }
                }
            }
        }
    }
}

template <class S>
void col2im_acc(const S* col, int Cin, int H, int W, int kH, int kW, int padH, int padW,
                int Ho, int Wo, S* x) {
    for (int c = 0; c < Cin; ++c) {
        S* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < kH; ++ki) {
            for (int kj = 0; kj < kW; ++kj) {
                const S* row = col + (static_cast<std::size_t>(c) * kH * kW + ki * kW + kj) *
                                         static_cast<std::size_t>(Ho) * Wo;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi + ki - padH;
                    if (ii < 0 || ii >= H) continue;
                    S* xr = xc + static_cast<std::size_t>(ii) * W;
                    const S* src = row + static_cast<std::size_t>(oi) * Wo;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj + kj - padW;
                        if (jj >= 0 && jj < W) xr[jj] += src[oj];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---- elementwise ops -------------------------------------------------------

template <class S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b) {
    if (a->dims != b->dims)
        detail::shape_error("add: " + a->shape_str() + " vs " + b->shape_str());
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] + b->values[i];
    auto t = detail::make_result<S>(a->dims, std::move(out), {a, b}, "add");
    if (t->requires_grad) {
        t->backward_fn = [a, b](TensorT<S>& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b) {
    if (a->dims != b->dims)
        detail::shape_error("mul: " + a->shape_str() + " vs " + b->shape_str());
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * b->values[i];
    auto t = detail::make_result<S>(a->dims, std::move(out), {a, b}, "mul");
    if (t->requires_grad) {
        t->backward_fn = [a, b](TensorT<S>& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    a->grad[i] += self.grad[i] * b->values[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    b->grad[i] += self.grad[i] * a->values[i];
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> scale(const TensorPtr<S>& a, S c) {
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * c;
    auto t = detail::make_result<S>(a->dims, std::move(out), {a}, "scale");
    if (t->requires_grad) {
        t->backward_fn = [a, c](TensorT<S>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * c;
        };
    }
    return t;
}

template <class S>
TensorPtr<S> relu(const TensorPtr<S>& a) {
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] > S(0) ? a->values[i] : S(0);
    auto t = detail::make_result<S>(a->dims, std::move(out), {a}, "relu");
    if (t->requires_grad) {
        t->backward_fn = [a](TensorT<S>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (a->values[i] > S(0)) a->grad[i] += self.grad[i];
        };
    }
    return t;
}

template <class S>
TensorPtr<S> softplus(const TensorPtr<S>& a) {
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = static_cast<double>(a->values[i]);
        out[i] = x > 20.0 ? a->values[i] : static_cast<S>(std::log1p(std::exp(x)));
    }
    auto t = detail::make_result<S>(a->dims, std::move(out), {a}, "softplus");
    if (t->requires_grad) {
        t->backward_fn = [a](TensorT<S>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double x = static_cast<double>(a->values[i]);
                const double sig = 1.0 / (1.0 + std::exp(-x));
                a->grad[i] += self.grad[i] * static_cast<S>(sig);
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> vexp(const TensorPtr<S>& a) {
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(std::exp(static_cast<double>(a->values[i])));
    auto t = detail::make_result<S>(a->dims, std::move(out), {a}, "exp");
    if (t->requires_grad) {
        t->backward_fn = [a](TensorT<S>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a->grad[i] += self.grad[i] * self.values[i];
        };
    }
    return t;
}

template <class S>
TensorPtr<S> vlog(const TensorPtr<S>& a) {
    constexpr double kTiny = 1e-30;
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(std::log(std::max(static_cast<double>(a->values[i]), kTiny)));
    auto t = detail::make_result<S>(a->dims, std::move(out), {a}, "log");
    if (t->requires_grad) {
        t->backward_fn = [a](TensorT<S>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a->grad[i] += self.grad[i] /
                              static_cast<S>(std::max(static_cast<double>(a->values[i]), kTiny));
        };
    }
    return t;
}

template <class S>
TensorPtr<S> vsqrt(const TensorPtr<S>& a) {
    for (const S v : a->values)
        if (v < S(0)) throw std::invalid_argument("sqrt: negative input");
    std::vector<S> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(std::sqrt(static_cast<double>(a->values[i])));
    auto t = detail::make_result<S>(a->dims, std::move(out), {a}, "sqrt");
    if (t->requires_grad) {
        t->backward_fn = [a](TensorT<S>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double denom = 2.0 * static_cast<double>(self.values[i]) + 1e-12;
                a->grad[i] += static_cast<S>(static_cast<double>(self.grad[i]) / denom);
            }
        };
    }
    return t;
}

// ---- reductions (float64 accumulation) -------------------------------------

template <class S>
TensorPtr<S> sum(const TensorPtr<S>& a) {
    double acc = 0.0;
    for (const S v : a->values) acc += static_cast<double>(v);
    auto t = detail::make_result<S>({1}, {static_cast<S>(acc)}, {a}, "sum");
    if (t->requires_grad) {
        t->backward_fn = [a](TensorT<S>& self) {
            a->ensure_grad();
            const S g = self.grad[0];
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
        };
    }
    return t;
}

template <class S>
TensorPtr<S> mean(const TensorPtr<S>& a) {
    double acc = 0.0;
    for (const S v : a->values) acc += static_cast<double>(v);
    const double inv = 1.0 / static_cast<double>(a->values.size());
    auto t = detail::make_result<S>({1}, {static_cast<S>(acc * inv)}, {a}, "mean");
    if (t->requires_grad) {
        t->backward_fn = [a, inv](TensorT<S>& self) {
            a->ensure_grad();
            const S g = static_cast<S>(static_cast<double>(self.grad[0]) * inv);
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
        };
    }
    return t;
}

// Average of scalar nodes, accumulated in float64. With identical inputs the
// result equals them exactly.
template <class S>
TensorPtr<S> mean_of(const std::vector<TensorPtr<S>>& terms) {
    if (terms.empty()) throw std::invalid_argument("mean_of: no terms");
    double acc = 0.0;
    for (const auto& t : terms) {
        if (t->size() != 1) throw std::invalid_argument("mean_of: terms must be scalar");
        acc += static_cast<double>(t->values[0]);
    }
    const double inv = 1.0 / static_cast<double>(terms.size());
    auto out = detail::make_result<S>({1}, {static_cast<S>(acc * inv)}, terms, "mean_of");
    if (out->requires_grad) {
        auto parents = terms;
        out->backward_fn = [parents, inv](TensorT<S>& self) {
            const S g = static_cast<S>(static_cast<double>(self.grad[0]) * inv);
            for (const auto& p : parents) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                p->grad[0] += g;
            }
        };
    }
    return out;
}

// ---- channel-axis ops on [N,C,H,W] -----------------------------------------

namespace detail {
template <class S>
void require_nchw(const TensorPtr<S>& t, const char* who) {
    if (t->dims.size() != 4) shape_error(std::string(who) + ": expected [N,C,H,W], got " + t->shape_str());
}
}  // namespace detail

template <class S>
TensorPtr<S> softmax_channels(const TensorPtr<S>& z) {
    detail::require_nchw(z, "softmax_channels");
    const int N = z->dim(0), C = z->dim(1), H = z->dim(2), W = z->dim(3);
    if (C < 2) detail::shape_error("softmax_channels: C must be >= 2");
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    std::vector<S> out(z->values.size());
    for (int n = 0; n < N; ++n) {
        const S* zn = z->values.data() + static_cast<std::size_t>(n) * C * HW;
        S* yn = out.data() + static_cast<std::size_t>(n) * C * HW;
        for (std::int64_t p = 0; p < HW; ++p) {
            double mx = -1e300;
            for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(zn[c * HW + p]));
            double denom = 0.0;
            for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(zn[c * HW + p]) - mx);
            for (int c = 0; c < C; ++c)
                yn[c * HW + p] = static_cast<S>(std::exp(static_cast<double>(zn[c * HW + p]) - mx) / denom);
        }
    }
    auto t = detail::make_result<S>(z->dims, std::move(out), {z}, "softmax_channels");
    if (t->requires_grad) {
        t->backward_fn = [z, N, C, HW](TensorT<S>& self) {
            z->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const S* y = self.values.data() + static_cast<std::size_t>(n) * C * HW;
                const S* gy = self.grad.data() + static_cast<std::size_t>(n) * C * HW;
                S* gz = z->grad.data() + static_cast<std::size_t>(n) * C * HW;
                for (std::int64_t p = 0; p < HW; ++p) {
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c)
                        dot += static_cast<double>(gy[c * HW + p]) * y[c * HW + p];
                    for (int c = 0; c < C; ++c)
                        gz[c * HW + p] += static_cast<S>(
                            static_cast<double>(y[c * HW + p]) *
                            (static_cast<double>(gy[c * HW + p]) - dot));
                }
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> log_softmax_channels(const TensorPtr<S>& z) {
    detail::require_nchw(z, "log_softmax_channels");
    const int N = z->dim(0), C = z->dim(1), H = z->dim(2), W = z->dim(3);
    if (C < 2) detail::shape_error("log_softmax_channels: C must be >= 2");
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    std::vector<S> out(z->values.size());
    for (int n = 0; n < N; ++n) {
        const S* zn = z->values.data() + static_cast<std::size_t>(n) * C * HW;
        S* yn = out.data() + static_cast<std::size_t>(n) * C * HW;
        for (std::int64_t p = 0; p < HW; ++p) {
            double mx = -1e300;
            for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(zn[c * HW + p]));
            double denom = 0.0;
            for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(zn[c * HW + p]) - mx);
            const double lse = mx + std::log(denom);
            for (int c = 0; c < C; ++c)
                yn[c * HW + p] = static_cast<S>(static_cast<double>(zn[c * HW + p]) - lse);
        }
    }
    auto t = detail::make_result<S>(z->dims, std::move(out), {z}, "log_softmax_channels");
    if (t->requires_grad) {
        t->backward_fn = [z, N, C, HW](TensorT<S>& self) {
            z->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const S* ls = self.values.data() + static_cast<std::size_t>(n) * C * HW;
                const S* gy = self.grad.data() + static_cast<std::size_t>(n) * C * HW;
                S* gz = z->grad.data() + static_cast<std::size_t>(n) * C * HW;
                for (std::int64_t p = 0; p < HW; ++p) {
                    double gsum = 0.0;
                    for (int c = 0; c < C; ++c) gsum += static_cast<double>(gy[c * HW + p]);
                    for (int c = 0; c < C; ++c) {
                        const double y = std::exp(static_cast<double>(ls[c * HW + p]));
                        gz[c * HW + p] += static_cast<S>(
                            static_cast<double>(gy[c * HW + p]) - y * gsum);
                    }
                }
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> concat_channels(const TensorPtr<S>& a, const TensorPtr<S>& b) {
    detail::require_nchw(a, "concat_channels");
    detail::require_nchw(b, "concat_channels");
    if (a->dim(0) != b->dim(0) || a->dim(2) != b->dim(2) || a->dim(3) != b->dim(3))
        detail::shape_error("concat_channels: " + a->shape_str() + " vs " + b->shape_str());
    const int N = a->dim(0), Ca = a->dim(1), Cb = b->dim(1), H = a->dim(2), W = a->dim(3);
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    std::vector<S> out(static_cast<std::size_t>(N) * (Ca + Cb) * HW);
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->values.data() + static_cast<std::size_t>(n) * Ca * HW, Ca * HW,
                    out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW);
        std::copy_n(b->values.data() + static_cast<std::size_t>(n) * Cb * HW, Cb * HW,
                    out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW + Ca * HW);
    }
    auto t = detail::make_result<S>({N, Ca + Cb, H, W}, std::move(out), {a, b}, "concat_channels");
    if (t->requires_grad) {
        t->backward_fn = [a, b, N, Ca, Cb, HW](TensorT<S>& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const S* g = self.grad.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW;
                    S* ga = a->grad.data() + static_cast<std::size_t>(n) * Ca * HW;
                    for (std::int64_t i = 0; i < Ca * HW; ++i) ga[i] += g[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const S* g = self.grad.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW + Ca * HW;
                    S* gb = b->grad.data() + static_cast<std::size_t>(n) * Cb * HW;
                    for (std::int64_t i = 0; i < Cb * HW; ++i) gb[i] += g[i];
                }
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> avg_pool2(const TensorPtr<S>& x) {
    detail::require_nchw(x, "avg_pool2");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        detail::shape_error("avg_pool2: spatial dims must be even, got " + x->shape_str());
    const int Ho = H / 2, Wo = W / 2;
    std::vector<S> out(static_cast<std::size_t>(N) * C * Ho * Wo);
    for (int nc = 0; nc < N * C; ++nc) {
        const S* xp = x->values.data() + static_cast<std::size_t>(nc) * H * W;
        S* op = out.data() + static_cast<std::size_t>(nc) * Ho * Wo;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j)
                op[i * Wo + j] = static_cast<S>(
                    0.25 * (static_cast<double>(xp[(2 * i) * W + 2 * j]) +
                            xp[(2 * i) * W + 2 * j + 1] + xp[(2 * i + 1) * W + 2 * j] +
                            xp[(2 * i + 1) * W + 2 * j + 1]));
    }
    auto t = detail::make_result<S>({N, C, Ho, Wo}, std::move(out), {x}, "avg_pool2");
    if (t->requires_grad) {
        t->backward_fn = [x, N, C, H, W, Ho, Wo](TensorT<S>& self) {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const S* g = self.grad.data() + static_cast<std::size_t>(nc) * Ho * Wo;
                S* gx = x->grad.data() + static_cast<std::size_t>(nc) * H * W;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const S q = static_cast<S>(0.25 * static_cast<double>(g[i * Wo + j]));
                        gx[(2 * i) * W + 2 * j] += q;
                        gx[(2 * i) * W + 2 * j + 1] += q;
                        gx[(2 * i + 1) * W + 2 * j] += q;
                        gx[(2 * i + 1) * W + 2 * j + 1] += q;
                    }
            }
        };
    }
    return t;
}

template <class S>
TensorPtr<S> nearest_upsample2(const TensorPtr<S>& x) {
    detail::require_nchw(x, "nearest_upsample2");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    const int Ho = H * 2, Wo = W * 2;
    std::vector<S> out(static_cast<std::size_t>(N) * C * Ho * Wo);
    for (int nc = 0; nc < N * C; ++nc) {
        const S* xp = x->values.data() + static_cast<std::size_t>(nc) * H * W;
        S* op = out.data() + static_cast<std::size_t>(nc) * Ho * Wo;
        for (int i = 0; i < Ho; ++i) {
            const S* xr = xp + static_cast<std::size_t>(i / 2) * W;
            for (int j = 0; j < Wo; ++j) op[i * Wo + j] = xr[j / 2];
        }
    }
    auto t = detail::make_result<S>({N, C, Ho, Wo}, std::move(out), {x}, "nearest_upsample2");
    if (t->requires_grad) {
        t->backward_fn = [x, N, C, H, W, Ho, Wo](TensorT<S>& self) {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const S* g = self.grad.data() + static_cast<std::size_t>(nc) * Ho * Wo;
                S* gx = x->grad.data() + static_cast<std::size_t>(nc) * H * W;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) gx[(i / 2) * W + j / 2] += g[i * Wo + j];
            }
        };
    }
    return t;
}

// a[N,C,H,W] * s[N,1,H,W], s broadcast across channels
template <class S>
TensorPtr<S> mul_broadcast_channel(const TensorPtr<S>& a, const TensorPtr<S>& s) {
    detail::require_nchw(a, "mul_broadcast_channel");
    detail::require_nchw(s, "mul_broadcast_channel");
    if (s->dim(1) != 1 || a->dim(0) != s->dim(0) || a->dim(2) != s->dim(2) || a->dim(3) != s->dim(3))
        detail::shape_error("mul_broadcast_channel: " + a->shape_str() + " vs " + s->shape_str());
    const int N = a->dim(0), C = a->dim(1);
    const std::int64_t HW = static_cast<std::int64_t>(a->dim(2)) * a->dim(3);
    std::vector<S> out(a->values.size());
    for (int n = 0; n < N; ++n) {
        const S* sv = s->values.data() + static_cast<std::size_t>(n) * HW;
        for (int c = 0; c < C; ++c) {
            const S* av = a->values.data() + (static_cast<std::size_t>(n) * C + c) * HW;
            S* ov = out.data() + (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::int64_t p = 0; p < HW; ++p) ov[p] = av[p] * sv[p];
        }
    }
    auto t = detail::make_result<S>(a->dims, std::move(out), {a, s}, "mul_broadcast_channel");
    if (t->requires_grad) {
        t->backward_fn = [a, s, N, C, HW](TensorT<S>& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const S* sv = s->values.data() + static_cast<std::size_t>(n) * HW;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
                        for (std::int64_t p = 0; p < HW; ++p)
                            a->grad[off + p] += self.grad[off + p] * sv[p];
                    }
                }
            }
            if (s->requires_grad) {
                s->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    S* gs = s->grad.data() + static_cast<std::size_t>(n) * HW;
                    for (std::int64_t p = 0; p < HW; ++p) {
                        double acc = 0.0;
                        for (int c = 0; c < C; ++c) {
                            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
                            acc += static_cast<double>(self.grad[off + p]) * a->values[off + p];
                        }
                        gs[p] += static_cast<S>(acc);
                    }
                }
            }
        };
    }
    return t;
}

// ---- dropout ---------------------------------------------------------------

// Inverted dropout: survivors scaled by 1/(1-rate) so eval needs no rescale.
template <class S>
TensorPtr<S> dropout(const TensorPtr<S>& x, double rate, RngStream& rng, bool enabled) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!enabled || rate == 0.0) {
        std::vector<S> out = x->values;
        auto t = detail::make_result<S>(x->dims, std::move(out), {x}, "dropout");
        if (t->requires_grad) {
            t->backward_fn = [x](TensorT<S>& self) {
                x->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
            };
        }
        return t;
    }
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<S>>(x->values.size());
    for (std::size_t i = 0; i < mask->size(); ++i)
        (*mask)[i] = rng.uniform() < rate ? S(0) : keep_scale;
    std::vector<S> out(x->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->values[i] * (*mask)[i];
    auto t = detail::make_result<S>(x->dims, std::move(out), {x}, "dropout");
    if (t->requires_grad) {
        t->backward_fn = [x, mask](TensorT<S>& self) {
            x->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                x->grad[i] += self.grad[i] * (*mask)[i];
        };
    }
    return t;
}

// ---- convolution -----------------------------------------------------------

template <class S>
TensorPtr<S> conv2d(const TensorPtr<S>& input, const TensorPtr<S>& kernel,
                    const TensorPtr<S>& bias, Padding padding) {
    detail::require_nchw(input, "conv2d input");
    if (kernel->dims.size() != 4)
        detail::shape_error("conv2d kernel: expected [Cout,Cin,kH,kW], got " + kernel->shape_str());
    const int N = input->dim(0), Cin = input->dim(1), H = input->dim(2), W = input->dim(3);
    const int Cout = kernel->dim(0), kCin = kernel->dim(1), kH = kernel->dim(2), kW = kernel->dim(3);
    if (Cin != kCin)
        detail::shape_error("conv2d: input channels " + input->shape_str() +
                            " do not match kernel " + kernel->shape_str());
    if (bias->dims != std::vector<int>{Cout})
        detail::shape_error("conv2d: bias " + bias->shape_str() + " must be [Cout]");
    int padH = 0, padW = 0;
    if (padding == Padding::Same) {
        if (kH % 2 == 0 || kW % 2 == 0)
            detail::shape_error("conv2d: same-padding requires odd kernel dims");
        padH = kH / 2;
        padW = kW / 2;
    }
    const int Ho = H + 2 * padH - kH + 1;
    const int Wo = W + 2 * padW - kW + 1;
    if (Ho <= 0 || Wo <= 0)
        detail::shape_error("conv2d: kernel larger than input for valid padding");
    const int K = Cin * kH * kW;
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;

    std::vector<S> out(static_cast<std::size_t>(N) * Cout * P);
    std::vector<S> col(static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        detail::im2col(input->values.data() + static_cast<std::size_t>(n) * Cin * H * W, Cin, H, W,
                       kH, kW, padH, padW, Ho, Wo, col.data());
        S* on = out.data() + static_cast<std::size_t>(n) * Cout * P;
        for (int c = 0; c < Cout; ++c)
            std::fill_n(on + static_cast<std::size_t>(c) * P, P, bias->values[static_cast<std::size_t>(c)]);
        detail::gemm_acc(Cout, K, static_cast<int>(P), kernel->values.data(), col.data(), on);
    }
    auto t = detail::make_result<S>({N, Cout, Ho, Wo}, std::move(out), {input, kernel, bias}, "conv2d");
    if (t->requires_grad) {
        t->backward_fn = [input, kernel, bias, N, Cin, H, W, Cout, kH, kW, padH, padW, Ho, Wo, K,
                          P](TensorT<S>& self) {
            std::vector<S> col(static_cast<std::size_t>(K) * P);
            std::vector<S> dcol(static_cast<std::size_t>(K) * P);
            if (input->requires_grad) input->ensure_grad();
            if (kernel->requires_grad) kernel->ensure_grad();
            if (bias->requires_grad) bias->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const S* gy = self.grad.data() + static_cast<std::size_t>(n) * Cout * P;
                if (bias->requires_grad) {
                    for (int c = 0; c < Cout; ++c) {
                        double acc = 0.0;
                        for (std::int64_t p = 0; p < P; ++p)
                            acc += static_cast<double>(gy[static_cast<std::size_t>(c) * P + p]);
                        bias->grad[static_cast<std::size_t>(c)] += static_cast<S>(acc);
                    }
                }
                if (kernel->requires_grad || input->requires_grad) {
                    detail::im2col(input->values.data() + static_cast<std::size_t>(n) * Cin * H * W,
                                   Cin, H, W, kH, kW, padH, padW, Ho, Wo, col.data());
                }
                if (kernel->requires_grad) {
                    detail::gemm_nt_acc(Cout, static_cast<int>(P), K, gy, col.data(),
                                        kernel->grad.data());
                }
                if (input->requires_grad) {
                    std::fill(dcol.begin(), dcol.end(), S(0));
                    detail::gemm_tn_acc(K, Cout, static_cast<int>(P), kernel->values.data(), gy,
                                        dcol.data());
                    detail::col2im_acc(dcol.data(), Cin, H, W, kH, kW, padH, padW, Ho, Wo,
                                       input->grad.data() + static_cast<std::size_t>(n) * Cin * H * W);
                }
            }
        };
    }
    return t;
}

// ---- backward --------------------------------------------------------------

// Topologically ordered record of the ops reachable from one output node.
template <class S>
struct ComputationGraph {
    std::vector<TensorT<S>*> order;  // inputs precede consumers

    static ComputationGraph build(const TensorPtr<S>& root) {
        ComputationGraph g;
        std::vector<std::pair<TensorT<S>*, std::size_t>> stack;
        std::vector<TensorT<S>*> visited;
        auto seen = [&visited](TensorT<S>* t) {
            return std::find(visited.begin(), visited.end(), t) != visited.end();
        };
        if (!root->requires_grad) return g;
        stack.emplace_back(root.get(), 0);
        visited.push_back(root.get());
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                TensorT<S>* p = node->parents[idx++].get();
                if (p->requires_grad && !seen(p)) {
                    visited.push_back(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                g.order.push_back(node);
                stack.pop_back();
            }
        }
        return g;
    }
};

// Reverse-mode sweep from a scalar loss node. Populates .grad on every
// tracked tensor reachable from it.
template <class S>
void backward(const TensorPtr<S>& loss) {
    if (loss->size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->requires_grad) return;
    auto g = ComputationGraph<S>::build(loss);
    for (TensorT<S>* t : g.order) t->ensure_grad();
    loss->grad[0] = S(1);
    for (auto it = g.order.rbegin(); it != g.order.rend(); ++it) {
        TensorT<S>* t = *it;
        if (t->backward_fn) t->backward_fn(*t);
    }
}

// ---- Adam ------------------------------------------------------------------

template <class S>
struct AdamStateT {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;  // one buffer per parameter
    std::vector<std::vector<double>> v;

    void init(const std::vector<TensorPtr<S>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p->values.size(), 0.0);
            v.emplace_back(p->values.size(), 0.0);
        }
        step = 0;
    }
};

template <class S>
void adam_step(const std::vector<TensorPtr<S>>& params, AdamStateT<S>& state) {
    if (state.m.size() != params.size()) throw std::invalid_argument("adam: state not initialized");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (p.grad.size() != p.values.size())
            throw std::invalid_argument("adam: parameter " + std::to_string(i) + " has no gradient");
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.values.size(); ++j) {
            const double g = static_cast<double>(p.grad[j]);
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            p.values[j] = static_cast<S>(static_cast<double>(p.values[j]) -
                                         state.lr * mh / (std::sqrt(vh) + state.eps));
        }
    }
}

using Tensor = TensorT<float>;
using TensorRef = TensorPtr<float>;
using AdamState = AdamStateT<float>;

}  // namespace bfcdn
