#pragma once

// Dense row-major tensors and the handful of deterministic kernels everything
// else is built from. Single precision is the compute type; the same
// templates instantiate in double for verification-grade checks.
//
// Every operation here validates that its output is finite. A NaN or Inf is a
// bug upstream and throws immediately instead of propagating.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace styleset {

template <class T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), data_(checked_numel(dims_), T(0)) {}

    TensorT(std::vector<std::size_t> dims, std::vector<T> values)
        : dims_(std::move(dims)), data_(std::move(values)) {
        if (checked_numel(dims_) != data_.size()) {
            throw std::invalid_argument("TensorT: dims/data size mismatch");
        }
    }

    static TensorT matrix(std::size_t rows, std::size_t cols,
                          std::initializer_list<T> values) {
        return TensorT({rows, cols}, std::vector<T>(values));
    }

    static TensorT identity(std::size_t n) {
        TensorT out({n, n});
        for (std::size_t i = 0; i < n; ++i) out.data_[i * n + i] = T(1);
        return out;
    }

    std::size_t rank() const { return dims_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { require_rank2(); return dims_[0]; }
    std::size_t cols() const { require_rank2(); return dims_[1]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& operator()(std::size_t r, std::size_t c) {
        require_rank2();
        return data_[r * dims_[1] + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const {
        require_rank2();
        return data_[r * dims_[1] + c];
    }

    bool same_shape(const TensorT& other) const { return dims_ == other.dims_; }

    // Exact elementwise equality; used by the bitwise reproducibility tests.
    bool bit_equal(const TensorT& other) const {
        return dims_ == other.dims_ && data_ == other.data_;
    }

    void check_finite(const char* op) const {
        for (const T& v : data_) {
            if (!std::isfinite(v)) {
                throw std::runtime_error(std::string(op) +
                                         ": non-finite value produced");
            }
        }
    }

    template <class U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(dims_, std::move(out));
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& dims) {
        std::size_t n = 1;
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("TensorT: zero extent");
            n *= d;
        }
        return dims.empty() ? 0 : n;
    }

    void require_rank2() const {
        if (dims_.size() != 2) throw std::invalid_argument("TensorT: expected rank-2");
    }

    std::vector<std::size_t> dims_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Standard matrix product. Each output element accumulates the inner index in
// ascending order, so the floating-point result is the same on every run and
// thread count.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: dimension mismatch");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    TensorT<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T* out_row = out.data() + i * n;
        const T* a_row = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T aik = a_row[p];
            if (aik == T(0)) continue;
            const T* b_row = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
        }
    }
    out.check_finite("matmul");
    return out;
}

template <class T>
TensorT<T> transpose(const TensorT<T>& a) {
    const std::size_t m = a.rows(), n = a.cols();
    TensorT<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
    return out;
}

// Row-wise softmax with max subtraction. Rows sum to 1 even for ±1000-scale
// logits; non-finite input is rejected.
template <class T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax_rows: expected rank-2");
    logits.check_finite("softmax_rows(input)");
    const std::size_t m = logits.rows(), n = logits.cols();
    TensorT<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* in_row = logits.data() + i * n;
        T* out_row = out.data() + i * n;
        T mx = in_row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in_row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            out_row[j] = std::exp(in_row[j] - mx);
            sum += out_row[j];
        }
        for (std::size_t j = 0; j < n; ++j) out_row[j] /= sum;
    }
    out.check_finite("softmax_rows");
    return out;
}

template <class T>
struct ColumnStatsT {
    std::vector<T> mean;
    std::vector<T> stddev;  // population (divide by m)
};

// Per-column mean and population standard deviation across rows. Two-pass
// with double accumulators so float results stay accurate.
template <class T>
ColumnStatsT<T> column_stats(const TensorT<T>& x) {
    if (x.rank() != 2) throw std::invalid_argument("column_stats: expected rank-2");
    const std::size_t m = x.rows(), n = x.cols();
    ColumnStatsT<T> stats;
    stats.mean.assign(n, T(0));
    stats.stddev.assign(n, T(0));
    std::vector<double> acc(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += static_cast<double>(row[j]);
    }
    for (std::size_t j = 0; j < n; ++j) stats.mean[j] = static_cast<T>(acc[j] / double(m));
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(row[j]) - static_cast<double>(stats.mean[j]);
            acc[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        stats.stddev[j] = static_cast<T>(std::sqrt(acc[j] / double(m)));
    }
    return stats;
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
    TensorT<T> out(a.dims());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    out.check_finite("add");
    return out;
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch");
    TensorT<T> out(a.dims());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    out.check_finite("sub");
    return out;
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    TensorT<T> out(a.dims());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    out.check_finite("scale");
    return out;
}

// y += alpha * x
template <class T>
void axpy(T alpha, const TensorT<T>& x, TensorT<T>& y) {
    if (!x.same_shape(y)) throw std::invalid_argument("axpy: shape mismatch");
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] += alpha * x[i];
}

template <class T>
T max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    T mx = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
    return mx;
}

template <class T>
double l2_norm(const TensorT<T>& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += double(a[i]) * double(a[i]);
    return std::sqrt(s);
}

template <class T>
double rel_l2_error(const TensorT<T>& got, const TensorT<T>& want) {
    if (!got.same_shape(want)) throw std::invalid_argument("rel_l2_error: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.numel(); ++i) {
        const double d = double(got[i]) - double(want[i]);
        num += d * d;
        den += double(want[i]) * double(want[i]);
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

}  // namespace styleset
