#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace adanas {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are the only
// shapes the engine ever needs.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;

    static Tensor scalar(double x) {
        Tensor t;
        t.v.assign(1, x);
        return t;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.shape = std::move(s);
        t.v.assign(static_cast<std::size_t>(count(t.shape)), 0.0);
        return t;
    }

    static Tensor from(std::vector<int> s, std::vector<double> vals) {
        Tensor t;
        t.shape = std::move(s);
        t.v = std::move(vals);
        if (t.v.size() != static_cast<std::size_t>(count(t.shape)))
            throw std::invalid_argument("tensor: value count does not match shape");
        return t;
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int ndim() const { return static_cast<int>(shape.size()); }
    int numel() const { return static_cast<int>(v.size()); }
    int rows() const { return ndim() == 2 ? shape[0] : (ndim() == 0 ? 1 : shape[0]); }
    int cols() const { return ndim() == 2 ? shape[1] : 1; }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }
    double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline void check_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw std::runtime_error("non-finite values in " + what);
}

inline std::string shape_str(const Tensor& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape[i]);
    }
    return s + ")";
}

}  // namespace adanas
