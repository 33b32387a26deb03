#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gcdance/common.hpp"
#include "gcdance/rng.hpp"

namespace gcdance {

// Dense row-major array of doubles, rank 0..3. Rank 0 is a scalar (size 1).
// This is the value type of the autograd engine and of all motion/feature
// matrices; 32-bit floats appear only in file formats.
class Tensor {
public:
    Tensor() : rank_(0), dims_{1, 1, 1}, data_(1, 0.0) {}

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }
    static Tensor zeros(std::vector<std::int64_t> dims) { return Tensor(std::move(dims), 0.0); }
    static Tensor full(std::vector<std::int64_t> dims, double v) { return Tensor(std::move(dims), v); }

    static Tensor from(std::vector<std::int64_t> dims, std::vector<double> values) {
        Tensor t(dims, 0.0);
        require(static_cast<std::int64_t>(values.size()) == t.size(), errc::data,
                "tensor: value count does not match shape");
        t.data_ = std::move(values);
        return t;
    }

    static Tensor randn(Rng& rng, std::vector<std::int64_t> dims, double stddev = 1.0) {
        Tensor t(std::move(dims), 0.0);
        for (double& v : t.data_) v = rng.normal(0.0, stddev);
        return t;
    }

    int rank() const { return rank_; }
    std::int64_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    std::vector<std::int64_t> dims() const {
        std::vector<std::int64_t> d;
        for (int i = 0; i < rank_; ++i) d.push_back(dims_[static_cast<std::size_t>(i)]);
        return d;
    }

    bool same_shape(const Tensor& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[static_cast<std::size_t>(i)];
        os << ']';
        return os.str();
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dims_[1] + j)]; }
    double at(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * dims_[1] + j)]; }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
    }

    double item() const {
        require(size() == 1, errc::numeric, "tensor: item() on non-scalar " + shape_str());
        return data_[0];
    }

    // Number of trailing rank-2 matrices ([rows x cols] below) stacked in the
    // tensor: 1 for rank <= 2, dim(0) for rank 3.
    std::int64_t batch() const { return rank_ == 3 ? dims_[0] : 1; }
    std::int64_t rows() const { return rank_ == 3 ? dims_[1] : (rank_ >= 1 ? dims_[0] : 1); }
    std::int64_t cols() const {
        if (rank_ == 3) return dims_[2];
        if (rank_ == 2) return dims_[1];
        return rank_ == 1 ? dims_[0] : 1;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

private:
    Tensor(std::vector<std::int64_t> dims, double v) {
        require(dims.size() <= 3, errc::data, "tensor: rank > 3 unsupported");
        rank_ = static_cast<int>(dims.size());
        dims_ = {1, 1, 1};
        std::int64_t n = 1;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            require(dims[i] > 0, errc::data, "tensor: non-positive dimension");
            dims_[i] = dims[i];
            n *= dims[i];
        }
        data_.assign(static_cast<std::size_t>(n), v);
    }

    int rank_;
    std::array<std::int64_t, 3> dims_;
    std::vector<double> data_;
};

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMat>;
using EigenConstMap = Eigen::Map<const EigenRowMat>;

// C[m x n] = A[m x k] * B[k x n] on raw row-major buffers (accumulating form
// below). Backed by Eigen's GEMM; single-threaded and deterministic.
inline void matmul_buffers(const double* a, const double* b, double* c, std::int64_t m,
                           std::int64_t k, std::int64_t n, bool accumulate = false) {
    EigenConstMap ma(a, m, k), mb(b, k, n);
    EigenMap mc(c, m, n);
    if (accumulate)
        mc.noalias() += ma * mb;
    else
        mc.noalias() = ma * mb;
}

inline void matmul_transA_buffers(const double* a, const double* b, double* c, std::int64_t m,
                                  std::int64_t k, std::int64_t n, bool accumulate = false) {
    // C[m x n] = A^T * B with A stored [k x m]
    EigenConstMap ma(a, k, m), mb(b, k, n);
    EigenMap mc(c, m, n);
    if (accumulate)
        mc.noalias() += ma.transpose() * mb;
    else
        mc.noalias() = ma.transpose() * mb;
}

inline void matmul_transB_buffers(const double* a, const double* b, double* c, std::int64_t m,
                                  std::int64_t k, std::int64_t n, bool accumulate = false) {
    // C[m x n] = A * B^T with B stored [n x k]
    EigenConstMap ma(a, m, k), mb(b, n, k);
    EigenMap mc(c, m, n);
    if (accumulate)
        mc.noalias() += ma * mb.transpose();
    else
        mc.noalias() = ma * mb.transpose();
}

}  // namespace gcdance
