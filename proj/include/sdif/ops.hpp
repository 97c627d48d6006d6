#pragma once

#include "sdif/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sdif {

namespace detail {

inline bool wants_grad(const Node& self, std::size_t input) { return self.inputs[input]->requires_grad; }
inline std::vector<double>& grad_of(const Node& self, std::size_t input) { return self.inputs[input]->ensure_grad(); }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, "add", [](detail::Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (!detail::wants_grad(self, k)) continue;
            auto& g = detail::grad_of(self, k);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, "sub", [](detail::Node& self) {
        const double sign[2] = {1.0, -1.0};
        for (std::size_t k = 0; k < 2; ++k) {
            if (!detail::wants_grad(self, k)) continue;
            auto& g = detail::grad_of(self, k);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
        }
    });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, "mul", [](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (detail::wants_grad(self, 0)) {
            auto& g = detail::grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (detail::wants_grad(self, 1)) {
            auto& g = detail::grad_of(self, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= s;
    return detail::make_result(a.shape(), std::move(out), {a}, "scale", [s](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

/// x[..., n] + b[n], broadcast over all leading axes.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    if (x.rank() == 0 || b.rank() != 1 || b.dim(0) != x.shape().back()) {
        throw DimensionError("add_bias: cannot broadcast " + shape_str(b.shape()) + " over " + shape_str(x.shape()));
    }
    const std::size_t n = b.dim(0);
    std::vector<double> out(x.values().begin(), x.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return detail::make_result(x.shape(), std::move(out), {x, b}, "add_bias", [n](detail::Node& self) {
        if (detail::wants_grad(self, 0)) {
            auto& g = detail::grad_of(self, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (detail::wants_grad(self, 1)) {
            auto& g = detail::grad_of(self, 1);
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
        }
    });
}

inline Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    return detail::make_result(x.shape(), std::move(out), {x}, "gelu", [](detail::Node& self) {
        const auto& xv = self.inputs[0]->value;
        auto& g = detail::grad_of(self, 0);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv[i] * xv[i]);
            g[i] += self.grad[i] * (cdf + xv[i] * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    return detail::make_result(std::move(shape), std::move(out), {x}, "reshape", [](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return detail::make_result({n, m}, std::move(out), {a}, "transpose", [m, n](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    });
}

namespace detail {

// Splits a shape around `axis` into (outer, extent, inner) block counts.
struct AxisBlocks {
    std::size_t outer = 1, extent = 0, inner = 1;
};

inline AxisBlocks axis_blocks(const Shape& shape, std::size_t axis) {
    AxisBlocks b;
    for (std::size_t i = 0; i < axis; ++i) b.outer *= shape[i];
    b.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) b.inner *= shape[i];
    return b;
}

}  // namespace detail

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no parts");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
        if (!ok) throw DimensionError("concat: side extents differ, " + shape_str(ref) + " vs " + shape_str(s));
        out_shape[axis] += s[axis];
    }
    if (parts.size() == 1) return parts.front();

    const auto ob = detail::axis_blocks(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t width = p.dim(axis) * ob.inner;
        auto pv = p.values();
        for (std::size_t o = 0; o < ob.outer; ++o) {
            std::copy_n(pv.begin() + o * width, width, out.begin() + o * ob.extent * ob.inner + offset);
        }
        offset += width;
    }
    return detail::make_result(out_shape, std::move(out), parts, "concat",
                               [ob, offsets = std::move(offsets)](detail::Node& self) {
                                   for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                       if (!detail::wants_grad(self, k)) continue;
                                       auto& g = detail::grad_of(self, k);
                                       const std::size_t width = g.size() / ob.outer;
                                       for (std::size_t o = 0; o < ob.outer; ++o) {
                                           const double* src = self.grad.data() + o * ob.extent * ob.inner + offsets[k];
                                           double* dst = g.data() + o * width;
                                           for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                                       }
                                   }
                               });
}

/// Elements [start, start + length) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || start + length > x.dim(axis)) {
        throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") on axis " + std::to_string(axis) + " exceeds " + shape_str(x.shape()));
    }
    const auto b = detail::axis_blocks(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    const std::size_t width = length * b.inner;
    std::vector<double> out(b.outer * width);
    auto xv = x.values();
    for (std::size_t o = 0; o < b.outer; ++o) {
        std::copy_n(xv.begin() + o * b.extent * b.inner + start * b.inner, width, out.begin() + o * width);
    }
    return detail::make_result(std::move(out_shape), std::move(out), {x}, "slice",
                               [b, start, width](detail::Node& self) {
                                   auto& g = detail::grad_of(self, 0);
                                   for (std::size_t o = 0; o < b.outer; ++o) {
                                       double* dst = g.data() + o * b.extent * b.inner + start * b.inner;
                                       const double* src = self.grad.data() + o * width;
                                       for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                                   }
                               });
}

/// Rows of `table` [V x d] selected by `ids`, giving [n x d].
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    detail::require_rank(table, 2, "gather_rows");
    const std::size_t rows = table.dim(0), d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    auto tv = table.values();
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= rows) throw DimensionError("gather_rows: id " + std::to_string(ids[r]) + " >= " + std::to_string(rows));
        std::copy_n(tv.begin() + ids[r] * d, d, out.begin() + r * d);
    }
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return detail::make_result({ids.size(), d}, std::move(out), {table}, "gather_rows",
                               [idx = std::move(idx), d](detail::Node& self) {
                                   auto& g = detail::grad_of(self, 0);
                                   for (std::size_t r = 0; r < idx.size(); ++r)
                                       for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
                               });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    return detail::make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        const auto& go = self.grad;
        if (detail::wants_grad(self, 0)) {
            auto& ga = detail::grad_of(self, 0);  // go * b^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
                    ga[i * k + p] += s;
                }
        }
        if (detail::wants_grad(self, 1)) {
            auto& gb = detail::grad_of(self, 1);  // a^T * go
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
                }
        }
    });
}

/// x W + b over the last axis of x; leading axes are treated as a batch.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() == 0 || w.rank() != 2 || b.rank() != 1 || x.shape().back() != w.dim(0) || b.dim(0) != w.dim(1)) {
        throw DimensionError("affine: incompatible shapes x" + shape_str(x.shape()) + " W" + shape_str(w.shape()) +
                             " b" + shape_str(b.shape()));
    }
    const std::size_t in = w.dim(0), out_dim = w.dim(1);
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < x.rank(); ++i) rows *= x.dim(i);
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    std::vector<double> out(shape_numel(out_shape));
    auto xv = x.values(), wv = w.values(), bv = b.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.data() + r * out_dim;
        std::copy(bv.begin(), bv.end(), o);
        for (std::size_t p = 0; p < in; ++p) {
            const double xp = xv[r * in + p];
            const double* wrow = wv.data() + p * out_dim;
            for (std::size_t j = 0; j < out_dim; ++j) o[j] += xp * wrow[j];
        }
    }
    return detail::make_result(std::move(out_shape), std::move(out), {x, w, b}, "affine",
                               [rows, in, out_dim](detail::Node& self) {
                                   const auto& xv = self.inputs[0]->value;
                                   const auto& wv = self.inputs[1]->value;
                                   const auto& go = self.grad;
                                   if (detail::wants_grad(self, 0)) {
                                       auto& gx = detail::grad_of(self, 0);
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t p = 0; p < in; ++p) {
                                               double s = 0.0;
                                               const double* wrow = wv.data() + p * out_dim;
                                               const double* grow = go.data() + r * out_dim;
                                               for (std::size_t j = 0; j < out_dim; ++j) s += grow[j] * wrow[j];
                                               gx[r * in + p] += s;
                                           }
                                   }
                                   if (detail::wants_grad(self, 1)) {
                                       auto& gw = detail::grad_of(self, 1);
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t p = 0; p < in; ++p) {
                                               const double xp = xv[r * in + p];
                                               double* gwrow = gw.data() + p * out_dim;
                                               const double* grow = go.data() + r * out_dim;
                                               for (std::size_t j = 0; j < out_dim; ++j) gwrow[j] += xp * grow[j];
                                           }
                                   }
                                   if (detail::wants_grad(self, 2)) {
                                       auto& gb = detail::grad_of(self, 2);
                                       for (std::size_t i = 0; i < go.size(); ++i) gb[i % out_dim] += go[i];
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Normalisation

/// Softmax over the last axis, stabilised by per-row max subtraction.
inline Tensor softmax(const Tensor& x) {
    if (x.rank() == 0) throw DimensionError("softmax: scalar input");
    const std::size_t n = x.shape().back();
    const std::size_t rows = n == 0 ? 0 : x.numel() / n;
    std::vector<double> out(x.numel());
    auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= total;
    }
    return detail::make_result(x.shape(), std::move(out), {x}, "softmax", [rows, n](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * n;
            const double* go = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += go[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (go[j] - dot);
        }
    });
}

/// Per-row standardisation over the last axis followed by gain and bias.
inline Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    if (x.rank() == 0 || gain.shape() != Shape{x.shape().back()} || bias.shape() != Shape{x.shape().back()}) {
        throw DimensionError("layernorm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                             " do not match " + shape_str(x.shape()));
    }
    const std::size_t d = x.shape().back();
    if (d == 0) throw DimensionError("layernorm: zero-width rows");
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
    auto xv = x.values(), gv = gain.values(), bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mean) * inv_std[r];
            out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
        }
    }
    return detail::make_result(
        x.shape(), std::move(out), {x, gain, bias}, "layernorm",
        [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
            const auto& gv = self.inputs[1]->value;
            const auto& go = self.grad;
            if (detail::wants_grad(self, 0)) {
                auto& gx = detail::grad_of(self, 0);
                const double dd = static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = go[r * d + j] * gv[j];
                        sum_g += gh;
                        sum_gx += gh * xhat[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = go[r * d + j] * gv[j];
                        gx[r * d + j] += inv_std[r] / dd * (dd * gh - sum_g - xhat[r * d + j] * sum_gx);
                    }
                }
            }
            if (detail::wants_grad(self, 1)) {
                auto& gg = detail::grad_of(self, 1);
                for (std::size_t i = 0; i < go.size(); ++i) gg[i % d] += go[i] * xhat[i];
            }
            if (detail::wants_grad(self, 2)) {
                auto& gb = detail::grad_of(self, 2);
                for (std::size_t i = 0; i < go.size(); ++i) gb[i % d] += go[i];
            }
        });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return detail::make_result({}, {total}, {x}, "sum", [](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        for (auto& v : g) v += self.grad[0];
    });
}

inline Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw DegenerateInputError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// Mean of the rows of x [L x d] whose mask bit is set.
inline Tensor masked_mean(const Tensor& x, std::span<const std::uint8_t> mask) {
    detail::require_rank(x, 2, "masked_mean");
    const std::size_t rows = x.dim(0), d = x.dim(1);
    if (mask.size() != rows) {
        throw DimensionError("masked_mean: mask length " + std::to_string(mask.size()) + " vs " +
                             std::to_string(rows) + " rows");
    }
    const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    if (count == 0) throw DegenerateInputError("masked_mean: mask has no valid positions");
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> out(d, 0.0);
    auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        for (std::size_t j = 0; j < d; ++j) out[j] += xv[r * d + j];
    }
    for (auto& v : out) v *= inv;
    std::vector<std::uint8_t> keep(mask.begin(), mask.end());
    return detail::make_result({d}, std::move(out), {x}, "masked_mean",
                               [keep = std::move(keep), d, inv](detail::Node& self) {
                                   auto& g = detail::grad_of(self, 0);
                                   for (std::size_t r = 0; r < keep.size(); ++r) {
                                       if (!keep[r]) continue;
                                       for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[j] * inv;
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Regularisation

/// Inverted dropout. Identity when not training or rate is zero.
inline Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64* rng) {
    if (!training || rate <= 0.0) return x;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    if (!rng) throw std::invalid_argument("dropout: training mode requires an rng");
    std::bernoulli_distribution keep(1.0 - rate);
    const double s = 1.0 / (1.0 - rate);
    std::vector<double> factor(x.numel());
    for (auto& f : factor) f = keep(*rng) ? s : 0.0;
    std::vector<double> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
    return detail::make_result(x.shape(), std::move(out), {x}, "dropout",
                               [factor = std::move(factor)](detail::Node& self) {
                                   auto& g = detail::grad_of(self, 0);
                                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor[i];
                               });
}

}  // namespace sdif
