#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "alf/error.hpp"

namespace alf {

// Layout tags. Activations are NHWC (batch, height, width, channel); weight
// banks are KKIO (kernel row, kernel col, input channel, output channel).
// Either way the flat storage is row-major over (d0,d1,d2,d3).
enum class Layout : std::uint8_t { NHWC = 0, KKIO = 1 };

inline const char* layout_name(Layout l) {
    return l == Layout::NHWC ? "NHWC" : "KKIO";
}

// Dense rank-4 tensor. Value type is float in the artifact path; the double
// instantiation backs the 64-bit oracles and gradient-check replays.
template <typename T>
class Tensor4T {
public:
    using Dims = std::array<std::int64_t, 4>;

    Tensor4T() = default;

    Tensor4T(Dims dims, Layout layout) : dims_(dims), layout_(layout) {
        for (auto d : dims_) {
            if (d < 0) throw ShapeError("Tensor4: negative dimension in " + dims_str(dims_));
        }
        data_.assign(static_cast<std::size_t>(count(dims_)), T(0));
    }

    static Tensor4T zeros(Dims dims, Layout layout) { return Tensor4T(dims, layout); }

    static Tensor4T from(Dims dims, Layout layout, std::initializer_list<T> values) {
        Tensor4T t(dims, layout);
        if (static_cast<std::int64_t>(values.size()) != t.size()) {
            throw ShapeError("Tensor4: initializer size does not match " + dims_str(dims));
        }
        std::size_t i = 0;
        for (T v : values) t.data_[i++] = v;
        return t;
    }

    static Tensor4T scalar(T v) {
        Tensor4T t({1, 1, 1, 1}, Layout::NHWC);
        t.data_[0] = v;
        return t;
    }

    const Dims& dims() const { return dims_; }
    std::int64_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    Layout layout() const { return layout_; }
    void set_layout(Layout l) { layout_ = l; }

    std::span<T> data() { return std::span<T>(data_); }
    std::span<const T> data() const { return std::span<const T>(data_); }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }

    std::int64_t index(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
        return ((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3;
    }

    T& operator()(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) {
        return data_[static_cast<std::size_t>(index(i0, i1, i2, i3))];
    }
    const T& operator()(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
        return data_[static_cast<std::size_t>(index(i0, i1, i2, i3))];
    }

    bool same_dims(const Tensor4T& other) const { return dims_ == other.dims_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    // Tensor ops promise finite outputs; this is the reporting point.
    void check_finite(const char* what) const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(static_cast<double>(data_[i]))) {
                std::ostringstream os;
                os << what << ": non-finite value at flat index " << i << " in tensor "
                   << dims_str(dims_);
                throw NumericError(os.str());
            }
        }
    }

    template <typename U>
    Tensor4T<U> to() const {
        Tensor4T<U> out(dims_, layout_);
        for (std::int64_t i = 0; i < size(); ++i) {
            out.raw()[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    // Same data, different tag. Used when a weight bank is contracted as if it
    // were an activation map (filter encoding/decoding).
    Tensor4T relabeled(Layout l) const {
        Tensor4T t = *this;
        t.layout_ = l;
        return t;
    }

    Tensor4T reshaped(Dims nd) const {
        if (count(nd) != size()) {
            throw ShapeError("reshape: element count mismatch " + dims_str(dims_) + " -> " +
                             dims_str(nd));
        }
        Tensor4T t = *this;
        t.dims_ = nd;
        return t;
    }

    static std::int64_t count(const Dims& d) { return d[0] * d[1] * d[2] * d[3]; }

    static std::string dims_str(const Dims& d) {
        std::ostringstream os;
        os << "[" << d[0] << "," << d[1] << "," << d[2] << "," << d[3] << "]";
        return os.str();
    }

private:
    Dims dims_{0, 0, 0, 0};
    Layout layout_ = Layout::NHWC;
    std::vector<T> data_;
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

template <typename T, typename Rng>
void fill_normal(Tensor4T<T>& t, Rng& rng, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

template <typename T, typename Rng>
void fill_uniform(Tensor4T<T>& t, Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

}  // namespace alf
