#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense rank-4 array (batch, channel, height, width), row-major.
template <typename T>
struct Tensor {
    Shape4 shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape4 s, T fill = T(0)) : shape(s), data(s.numel(), fill) {}
    Tensor(Shape4 s, std::vector<T> values) : shape(s), data(std::move(values)) {
        if (data.size() != shape.numel())
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape.str());
    }

    std::size_t numel() const { return data.size(); }
    bool empty() const { return data.empty(); }

    std::size_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
    }
    T& at(int n, int c, int h, int w) { return data[index(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data[index(n, c, h, w)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
void require_finite(const Tensor<T>& t, const char* context) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("non-finite value after ") + context);
}

}  // namespace sanet
