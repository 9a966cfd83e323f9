#pragma once

#include "socmpc/ad/tensor.hpp"

#include <limits>

namespace socmpc::ad {

// ---------------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
    return detail::result_like(a.shape(), std::move(v), {a.handle(), b.handle()}, [](Node& n) {
        for (int s = 0; s < 2; ++s) {
            Node& p = *n.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
    return detail::result_like(a.shape(), std::move(v), {a.handle(), b.handle()}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
    return detail::result_like(a.shape(), std::move(v), {a.handle(), b.handle()}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] /= bv[i];
    return detail::result_like(a.shape(), std::move(v), {a.handle(), b.handle()}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                pb.grad[i] -= n.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
        }
    });
}

/// Multiply by a compile-time constant; the constant gets no gradient.
inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.values());
    for (double& x : v) x *= c;
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    });
}

/// Row-broadcast add: a is (..., m, k), b is (k). The only broadcasting rule
/// in this engine; everything else requires explicit reshape.
inline Tensor add_rowwise(const Tensor& a, const Tensor& b) {
    if (b.rank() != 1 || a.rank() < 1 || a.shape().back() != b.shape()[0])
        throw TensorError("add_rowwise: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                          detail::shape_str(b.shape()));
    const int64_t k = b.shape()[0];
    std::vector<double> v(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i % k];
    return detail::result_like(a.shape(), std::move(v), {a.handle(), b.handle()}, [k](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i % k] += n.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

inline Tensor exp(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = std::exp(x);
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * n.value[i];
    });
}

inline Tensor log(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = std::log(x);
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] / p.value[i];
    });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = std::tanh(x);
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    });
}

/// Exact GELU: x * Phi(x) with Phi the standard normal CDF.
inline Tensor gelu(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double x = p.value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            p.grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

/// Elementwise smooth L1 with beta = 1: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
inline Tensor smooth_l1(const Tensor& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x = std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5;
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double x = p.value[i];
            p.grad[i] += n.grad[i] * (std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0));
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.values()) s += x;  // fixed row-major order for determinism
    return detail::result_like({1}, {s}, {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (double x : a.values()) s += x;
    return detail::result_like({1}, {s * inv}, {a.handle()}, [inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (detail::numel(shape) != a.size())
        throw TensorError("reshape: cannot view " + detail::shape_str(a.shape()) + " as " +
                          detail::shape_str(shape));
    std::vector<double> v(a.values());
    return detail::result_like(std::move(shape), std::move(v), {a.handle()}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw TensorError("transpose: expected rank 2, got " + detail::shape_str(a.shape()));
    const int r = a.shape()[0], c = a.shape()[1];
    std::vector<double> v(static_cast<size_t>(a.size()));
    const auto& av = a.values();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) v[static_cast<size_t>(j) * r + i] = av[static_cast<size_t>(i) * c + j];
    return detail::result_like({c, r}, std::move(v), {a.handle()}, [r, c](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                p.grad[static_cast<size_t>(i) * c + j] += n.grad[static_cast<size_t>(j) * r + i];
    });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw TensorError("concat: no inputs");
    std::vector<int> shape = parts[0].shape();
    int64_t outer, extent0, inner;
    detail::axis_split(shape, axis, outer, extent0, inner);
    int64_t total_extent = 0;
    for (const Tensor& p : parts) {
        std::vector<int> s = p.shape();
        if (static_cast<int>(s.size()) != static_cast<int>(shape.size()))
            throw TensorError("concat: rank mismatch");
        for (int i = 0; i < static_cast<int>(s.size()); ++i)
            if (i != axis && s[i] != shape[i])
                throw TensorError("concat: shape mismatch " + detail::shape_str(shape) + " vs " +
                                  detail::shape_str(s));
        total_extent += s[axis];
    }
    shape[axis] = static_cast<int>(total_extent);
    std::vector<double> v(static_cast<size_t>(outer * total_extent * inner));
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (const Tensor& p : parts) {
        offsets.push_back(off);
        const int64_t e = p.shape()[axis];
        const auto& pv = p.values();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pv.begin() + o * e * inner, pv.begin() + (o + 1) * e * inner,
                      v.begin() + (o * total_extent + off) * inner);
        off += e;
    }
    std::vector<std::shared_ptr<Node>> parents;
    for (const Tensor& p : parts) parents.push_back(p.handle());
    return detail::result_like(std::move(shape), std::move(v), std::move(parents),
                               [outer, inner, total_extent, offsets](Node& n) {
                                   for (size_t s = 0; s < n.parents.size(); ++s) {
                                       Node& p = *n.parents[s];
                                       if (!p.requires_grad) continue;
                                       p.ensure_grad();
                                       const int64_t e = static_cast<int64_t>(p.value.size()) / (outer * inner);
                                       for (int64_t o = 0; o < outer; ++o)
                                           for (int64_t i = 0; i < e * inner; ++i)
                                               p.grad[o * e * inner + i] +=
                                                   n.grad[(o * total_extent + offsets[s]) * inner + i];
                                   }
                               });
}

inline Tensor slice(const Tensor& a, int axis, int start, int len) {
    int64_t outer, extent, inner;
    detail::axis_split(a.shape(), axis, outer, extent, inner);
    if (start < 0 || len <= 0 || start + len > extent)
        throw TensorError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                          ") out of bounds for shape " + detail::shape_str(a.shape()));
    std::vector<int> shape = a.shape();
    shape[axis] = len;
    std::vector<double> v(static_cast<size_t>(outer * len * inner));
    const auto& av = a.values();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(av.begin() + (o * extent + start) * inner, av.begin() + (o * extent + start + len) * inner,
                  v.begin() + o * len * inner);
    return detail::result_like(std::move(shape), std::move(v), {a.handle()},
                               [outer, extent, inner, start, len](Node& n) {
                                   Node& p = *n.parents[0];
                                   if (!p.requires_grad) return;
                                   p.ensure_grad();
                                   for (int64_t o = 0; o < outer; ++o)
                                       for (int64_t i = 0; i < len * inner; ++i)
                                           p.grad[(o * extent + start) * inner + i] += n.grad[o * len * inner + i];
                               });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw TensorError("matmul: incompatible shapes " + detail::shape_str(a.shape()) + " and " +
                          detail::shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], n_cols = b.shape()[1];
    std::vector<double> v(static_cast<size_t>(m) * n_cols, 0.0);
    {
        const double* A = a.values().data();
        const double* B = b.values().data();
        double* C = v.data();
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                const double aip = A[static_cast<size_t>(i) * k + p];
                const double* Brow = B + static_cast<size_t>(p) * n_cols;
                double* Crow = C + static_cast<size_t>(i) * n_cols;
                for (int j = 0; j < n_cols; ++j) Crow[j] += aip * Brow[j];
            }
    }
    return detail::result_like({m, n_cols}, std::move(v), {a.handle(), b.handle()}, [m, k, n_cols](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const double* G = n.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();  // dA = G * B^T
            const double* B = pb.value.data();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* Grow = G + static_cast<size_t>(i) * n_cols;
                    const double* Brow = B + static_cast<size_t>(p) * n_cols;
                    for (int j = 0; j < n_cols; ++j) acc += Grow[j] * Brow[j];
                    pa.grad[static_cast<size_t>(i) * k + p] += acc;
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();  // dB = A^T * G
            const double* A = pa.value.data();
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    const double aip = A[static_cast<size_t>(i) * k + p];
                    const double* Grow = G + static_cast<size_t>(i) * n_cols;
                    double* Brow = pb.grad.data() + static_cast<size_t>(p) * n_cols;
                    for (int j = 0; j < n_cols; ++j) Brow[j] += aip * Grow[j];
                }
        }
    });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& a, int axis) {
    int64_t outer, extent, inner;
    detail::axis_split(a.shape(), axis, outer, extent, inner);
    std::vector<double> v(a.values());
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t e = 0; e < extent; ++e) mx = std::max(mx, v[(o * extent + e) * inner + in]);
            double z = 0.0;
            for (int64_t e = 0; e < extent; ++e) {
                double& x = v[(o * extent + e) * inner + in];
                x = std::exp(x - mx);
                z += x;
            }
            for (int64_t e = 0; e < extent; ++e) v[(o * extent + e) * inner + in] /= z;
        }
    return detail::result_like(a.shape(), std::move(v), {a.handle()}, [outer, extent, inner](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
                double dot = 0.0;
                for (int64_t e = 0; e < extent; ++e) {
                    const int64_t i = (o * extent + e) * inner + in;
                    dot += n.grad[i] * n.value[i];
                }
                for (int64_t e = 0; e < extent; ++e) {
                    const int64_t i = (o * extent + e) * inner + in;
                    p.grad[i] += n.value[i] * (n.grad[i] - dot);
                }
            }
    });
}

/// Normalizes over the last axis to zero mean, unit variance (no affine part;
/// compose with mul/add_rowwise for gain and bias).
inline Tensor layer_norm(const Tensor& a, double eps = 1e-10) {
    if (a.rank() < 1) throw TensorError("layer_norm: rank must be >= 1");
    const int axis = a.rank() - 1;
    int64_t outer, extent, inner;
    detail::axis_split(a.shape(), axis, outer, extent, inner);
    std::vector<double> v(a.values());
    std::vector<double> inv_std(static_cast<size_t>(outer));
    for (int64_t o = 0; o < outer; ++o) {
        double m = 0.0;
        for (int64_t e = 0; e < extent; ++e) m += v[o * extent + e];
        m /= static_cast<double>(extent);
        double var = 0.0;
        for (int64_t e = 0; e < extent; ++e) {
            const double d = v[o * extent + e] - m;
            var += d * d;
        }
        var /= static_cast<double>(extent);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(o)] = is;
        for (int64_t e = 0; e < extent; ++e) v[o * extent + e] = (v[o * extent + e] - m) * is;
    }
    return detail::result_like(a.shape(), std::move(v), {a.handle()},
                               [outer, extent, inv_std](Node& n) {
                                   Node& p = *n.parents[0];
                                   if (!p.requires_grad) return;
                                   p.ensure_grad();
                                   for (int64_t o = 0; o < outer; ++o) {
                                       double gm = 0.0, gy = 0.0;
                                       for (int64_t e = 0; e < extent; ++e) {
                                           gm += n.grad[o * extent + e];
                                           gy += n.grad[o * extent + e] * n.value[o * extent + e];
                                       }
                                       gm /= static_cast<double>(extent);
                                       gy /= static_cast<double>(extent);
                                       const double is = inv_std[static_cast<size_t>(o)];
                                       for (int64_t e = 0; e < extent; ++e)
                                           p.grad[o * extent + e] +=
                                               is * (n.grad[o * extent + e] - gm - n.value[o * extent + e] * gy);
                                   }
                               });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

/// Scaled dot-product attention: softmax(Q K^T / sqrt(d)) V.
/// Q: T_q x d, K: T_k x d, V: T_k x d_v. Differentiable end to end.
inline Tensor attention(const Tensor& Q, const Tensor& K, const Tensor& V) {
    if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
        throw TensorError("attention: Q, K, V must be rank 2");
    if (Q.shape()[1] != K.shape()[1])
        throw TensorError("attention: Q/K feature dim mismatch " + detail::shape_str(Q.shape()) + " vs " +
                          detail::shape_str(K.shape()));
    if (K.shape()[0] != V.shape()[0])
        throw TensorError("attention: K/V length mismatch " + detail::shape_str(K.shape()) + " vs " +
                          detail::shape_str(V.shape()));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(Q.shape()[1]));
    Tensor logits = scale(matmul(Q, transpose(K)), inv_sqrt_d);
    return matmul(softmax(logits, 1), V);
}

// convenience operators
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

}  // namespace socmpc::ad
