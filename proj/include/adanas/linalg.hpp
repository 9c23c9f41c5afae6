#pragma once

#include <cmath>
#include <stdexcept>

#include "adanas/tensor.hpp"

namespace adanas {

// C = A @ B
inline Tensor mat_mul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("mat_mul: inner dimensions differ");
    Tensor c = Tensor::zeros({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c.at(i, j) += aik * b.at(k, j);
        }
    return c;
}

// C = A @ B^T
inline Tensor mat_mul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("mat_mul_nt: inner dimensions differ");
    Tensor c = Tensor::zeros({a.rows(), b.rows()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(j, k);
            c.at(i, j) = s;
        }
    return c;
}

// C = A^T @ B
inline Tensor mat_mul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("mat_mul_tn: inner dimensions differ");
    Tensor c = Tensor::zeros({a.cols(), b.cols()});
    for (int k = 0; k < a.rows(); ++k)
        for (int i = 0; i < a.cols(); ++i) {
            double aki = a.at(k, i);
            if (aki == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c.at(i, j) += aki * b.at(k, j);
        }
    return c;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double sq_dist_rows(const Tensor& a, int i, int j) {
    double s = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
        double d = a.at(i, c) - a.at(j, c);
        s += d * d;
    }
    return s;
}

}  // namespace adanas
