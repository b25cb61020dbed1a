#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "alf/tensor.hpp"

namespace alf {

// Square kernel, symmetric zero padding. Output extents must divide exactly;
// silent truncation is never performed.
struct ConvGeometry {
    std::int64_t kernel = 1;
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    void validate() const {
        if (kernel < 1) throw ShapeError("ConvGeometry: kernel must be >= 1");
        if (stride < 1) throw ShapeError("ConvGeometry: stride must be >= 1");
        if (pad < 0) throw ShapeError("ConvGeometry: padding must be >= 0");
    }

    std::int64_t out_extent(std::int64_t in, const char* axis) const {
        const std::int64_t span = in + 2 * pad - kernel;
        if (span < 0) {
            throw ShapeError(std::string("conv geometry: kernel exceeds padded input on axis ") +
                             axis);
        }
        if (span % stride != 0) {
            throw ShapeError(std::string("conv geometry: non-exact output extent on axis ") + axis +
                             " (in=" + std::to_string(in) + ", k=" + std::to_string(kernel) +
                             ", s=" + std::to_string(stride) + ", p=" + std::to_string(pad) + ")");
        }
        return span / stride + 1;
    }

    bool operator==(const ConvGeometry&) const = default;
};

enum class Activation : std::uint8_t { Identity = 0, Relu = 1 };

inline const char* activation_name(Activation a) {
    return a == Activation::Identity ? "identity" : "relu";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    throw ConfigError("unknown activation kind '" + s + "'");
}

namespace detail {

template <typename T>
void check_conv_args(const Tensor4T<T>& input, const Tensor4T<T>& weights,
                     const ConvGeometry& geom) {
    geom.validate();
    if (weights.dim(0) != geom.kernel || weights.dim(1) != geom.kernel) {
        throw ShapeError("conv2d: weight kernel dims " + Tensor4T<T>::dims_str(weights.dims()) +
                         " do not match geometry kernel " + std::to_string(geom.kernel));
    }
    if (weights.dim(2) != input.dim(3)) {
        throw ShapeError("conv2d: input channels " + std::to_string(input.dim(3)) +
                         " do not match weight input channels " + std::to_string(weights.dim(2)));
    }
}

}  // namespace detail

// Reference convolution, the ground-truth oracle for every other conv path.
// out[n,y,x,o] = sum_{u,v,c} in_padded[n, y*s+u, x*s+v, c] * w[u,v,c,o].
// Accumulates in 64-bit, stores in the tensor's own precision.
template <typename T>
Tensor4T<T> conv2d_naive(const Tensor4T<T>& input, const Tensor4T<T>& weights,
                         const ConvGeometry& geom) {
    detail::check_conv_args(input, weights, geom);
    const std::int64_t n = input.dim(0), hi = input.dim(1), wi = input.dim(2), ci = input.dim(3);
    const std::int64_t k = geom.kernel, s = geom.stride, p = geom.pad;
    const std::int64_t ho = geom.out_extent(hi, "H");
    const std::int64_t wo = geom.out_extent(wi, "W");
    const std::int64_t co = weights.dim(3);

    Tensor4T<T> out({n, ho, wo, co}, Layout::NHWC);
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t y = 0; y < ho; ++y) {
            for (std::int64_t x = 0; x < wo; ++x) {
                for (std::int64_t o = 0; o < co; ++o) {
                    double acc = 0.0;
                    for (std::int64_t u = 0; u < k; ++u) {
                        const std::int64_t iy = y * s + u - p;
                        if (iy < 0 || iy >= hi) continue;
                        for (std::int64_t v = 0; v < k; ++v) {
                            const std::int64_t ix = x * s + v - p;
                            if (ix < 0 || ix >= wi) continue;
                            for (std::int64_t c = 0; c < ci; ++c) {
                                acc += static_cast<double>(input(b, iy, ix, c)) *
                                       static_cast<double>(weights(u, v, c, o));
                            }
                        }
                    }
                    out(b, y, x, o) = static_cast<T>(acc);
                }
            }
        }
    }
    out.check_finite("conv2d_naive");
    return out;
}

namespace detail {

// Patch matrix in double: rows index (n,y,x) output positions, columns index
// (u,v,c) in the same row-major order the KKIO weight bank flattens to.
template <typename T>
std::vector<double> im2col(const Tensor4T<T>& input, const ConvGeometry& geom, std::int64_t ho,
                           std::int64_t wo) {
    const std::int64_t n = input.dim(0), hi = input.dim(1), wi = input.dim(2), ci = input.dim(3);
    const std::int64_t k = geom.kernel, s = geom.stride, p = geom.pad;
    const std::int64_t cols = k * k * ci;
    std::vector<double> col(static_cast<std::size_t>(n * ho * wo * cols), 0.0);

    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t y = 0; y < ho; ++y) {
            for (std::int64_t x = 0; x < wo; ++x) {
                double* row = col.data() + static_cast<std::size_t>(((b * ho + y) * wo + x) * cols);
                for (std::int64_t u = 0; u < k; ++u) {
                    const std::int64_t iy = y * s + u - p;
                    if (iy < 0 || iy >= hi) continue;
                    for (std::int64_t v = 0; v < k; ++v) {
                        const std::int64_t ix = x * s + v - p;
                        if (ix < 0 || ix >= wi) continue;
                        const T* src = input.raw() + input.index(b, iy, ix, 0);
                        double* dst = row + (u * k + v) * ci;
                        for (std::int64_t c = 0; c < ci; ++c) dst[c] = static_cast<double>(src[c]);
                    }
                }
            }
        }
    }
    return col;
}

}  // namespace detail

// im2col + GEMM path. Same accumulation width as the oracle, so the two agree
// to float rounding; the contract tested against conv2d_naive is 1e-5.
template <typename T>
Tensor4T<T> conv2d_fast(const Tensor4T<T>& input, const Tensor4T<T>& weights,
                        const ConvGeometry& geom) {
    detail::check_conv_args(input, weights, geom);
    const std::int64_t n = input.dim(0), hi = input.dim(1), wi = input.dim(2), ci = input.dim(3);
    const std::int64_t ho = geom.out_extent(hi, "H");
    const std::int64_t wo = geom.out_extent(wi, "W");
    const std::int64_t co = weights.dim(3);
    const std::int64_t rows = n * ho * wo;
    const std::int64_t cols = geom.kernel * geom.kernel * ci;

    Tensor4T<T> out({n, ho, wo, co}, Layout::NHWC);
    if (rows == 0 || co == 0) return out;

    const std::vector<double> col = detail::im2col(input, geom, ho, wo);
    std::vector<double> wmat(static_cast<std::size_t>(cols * co));
    for (std::int64_t i = 0; i < cols * co; ++i) wmat[static_cast<std::size_t>(i)] =
        static_cast<double>(weights.raw()[i]);

#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* crow = col.data() + static_cast<std::size_t>(r * cols);
        std::vector<double> acc(static_cast<std::size_t>(co), 0.0);
        for (std::int64_t kk = 0; kk < cols; ++kk) {
            const double a = crow[kk];
            const double* wrow = wmat.data() + static_cast<std::size_t>(kk * co);
            for (std::int64_t o = 0; o < co; ++o) acc[static_cast<std::size_t>(o)] += a * wrow[o];
        }
        T* orow = out.raw() + r * co;
        for (std::int64_t o = 0; o < co; ++o) orow[o] = static_cast<T>(acc[static_cast<std::size_t>(o)]);
    }
    out.check_finite("conv2d_fast");
    return out;
}

// Point-wise (1x1) convolution: out[n,y,x,o] = sum_c in[n,y,x,c] * w[0,0,c,o].
template <typename T>
Tensor4T<T> pointwise_conv(const Tensor4T<T>& input, const Tensor4T<T>& weights) {
    if (weights.dim(0) != 1 || weights.dim(1) != 1) {
        throw ShapeError("pointwise_conv: weights must be 1x1, got " +
                         Tensor4T<T>::dims_str(weights.dims()));
    }
    if (weights.dim(2) != input.dim(3)) {
        throw ShapeError("pointwise_conv: channel mismatch, input has " +
                         std::to_string(input.dim(3)) + ", weights expect " +
                         std::to_string(weights.dim(2)));
    }
    const std::int64_t rows = input.dim(0) * input.dim(1) * input.dim(2);
    const std::int64_t cc = input.dim(3);
    const std::int64_t co = weights.dim(3);

    Tensor4T<T> out({input.dim(0), input.dim(1), input.dim(2), co}, Layout::NHWC);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* in_row = input.raw() + r * cc;
        T* out_row = out.raw() + r * co;
        for (std::int64_t o = 0; o < co; ++o) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < cc; ++c) {
                acc += static_cast<double>(in_row[c]) * static_cast<double>(weights(0, 0, c, o));
            }
            out_row[o] = static_cast<T>(acc);
        }
    }
    out.check_finite("pointwise_conv");
    return out;
}

template <typename T>
Tensor4T<T> activation(const Tensor4T<T>& input, Activation kind) {
    if (kind == Activation::Identity) return input;
    Tensor4T<T> out = input;
    for (auto& v : out.data()) v = std::max(T(0), v);
    out.check_finite("activation");
    return out;
}

// Backward helpers for the tape. Gather form: every output element is owned by
// exactly one iteration, accumulation order is fixed.
template <typename T>
void conv2d_backward(const Tensor4T<T>& input, const Tensor4T<T>& weights, const ConvGeometry& geom,
                     const Tensor4T<T>& grad_out, Tensor4T<T>& grad_input,
                     Tensor4T<T>& grad_weights) {
    const std::int64_t n = input.dim(0), hi = input.dim(1), wi = input.dim(2), ci = input.dim(3);
    const std::int64_t k = geom.kernel, s = geom.stride, p = geom.pad;
    const std::int64_t ho = grad_out.dim(1), wo = grad_out.dim(2), co = grad_out.dim(3);

    // d loss / d input, summed over every kernel placement that touched it.
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t iy = 0; iy < hi; ++iy) {
            for (std::int64_t ix = 0; ix < wi; ++ix) {
                for (std::int64_t c = 0; c < ci; ++c) {
                    double acc = 0.0;
                    for (std::int64_t u = 0; u < k; ++u) {
                        const std::int64_t ty = iy + p - u;
                        if (ty < 0 || ty % s != 0) continue;
                        const std::int64_t y = ty / s;
                        if (y >= ho) continue;
                        for (std::int64_t v = 0; v < k; ++v) {
                            const std::int64_t tx = ix + p - v;
                            if (tx < 0 || tx % s != 0) continue;
                            const std::int64_t x = tx / s;
                            if (x >= wo) continue;
                            for (std::int64_t o = 0; o < co; ++o) {
                                acc += static_cast<double>(grad_out(b, y, x, o)) *
                                       static_cast<double>(weights(u, v, c, o));
                            }
                        }
                    }
                    grad_input(b, iy, ix, c) += static_cast<T>(acc);
                }
            }
        }
    }

    // d loss / d weights, forward sum transposed.
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t u = 0; u < k; ++u) {
        for (std::int64_t v = 0; v < k; ++v) {
            for (std::int64_t c = 0; c < ci; ++c) {
                for (std::int64_t o = 0; o < co; ++o) {
                    double acc = 0.0;
                    for (std::int64_t b = 0; b < n; ++b) {
                        for (std::int64_t y = 0; y < ho; ++y) {
                            const std::int64_t iy = y * s + u - p;
                            if (iy < 0 || iy >= hi) continue;
                            for (std::int64_t x = 0; x < wo; ++x) {
                                const std::int64_t ix = x * s + v - p;
                                if (ix < 0 || ix >= wi) continue;
                                acc += static_cast<double>(input(b, iy, ix, c)) *
                                       static_cast<double>(grad_out(b, y, x, o));
                            }
                        }
                    }
                    grad_weights(u, v, c, o) += static_cast<T>(acc);
                }
            }
        }
    }
}

}  // namespace alf
