#pragma once

// Dense row-major tensors plus the small set of kernels the model needs.
// Every kernel comes as a forward/backward pair: the backward takes the
// upstream gradient and returns (or accumulates) the input gradients.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "m3net/errors.hpp"

namespace m3net {

template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape_) : shape(std::move(shape_)) {
        data.assign(numel_of(shape), T(0));
    }

    Tensor(std::vector<std::size_t> shape_, std::vector<T> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (numel_of(shape) != data.size())
            throw ShapeError("tensor: shape " + shape_str() + " does not match " +
                             std::to_string(data.size()) + " elements");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    static Tensor zeros(std::vector<std::size_t> shape_) { return Tensor(std::move(shape_)); }

    static Tensor full(std::vector<std::size_t> shape_, T v) {
        Tensor t(std::move(shape_));
        for (T& x : t.data) x = v;
        return t;
    }

    // 2-D literal, mostly for tests: Tensor<double>::of({{1,2},{3,4}}).
    static Tensor of(std::initializer_list<std::initializer_list<T>> rows_) {
        std::size_t r = rows_.size();
        std::size_t c = r == 0 ? 0 : rows_.begin()->size();
        Tensor t({r, c});
        std::size_t i = 0;
        for (const auto& row : rows_) {
            if (row.size() != c) throw ShapeError("tensor literal: ragged rows");
            for (T v : row) t.data[i++] = v;
        }
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    T at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        return shape.empty() ? "scalar" : os.str();
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* who) {
    require(t.rank() == 2, std::string(who) + ": expected a matrix, got rank " +
                               std::to_string(t.rank()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul

// c[m x n] = a[m x k] * b[k x n]. Accumulation runs over k in increasing
// order for each output element, matching the plain triple-loop definition.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                         b.shape_str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor<T> c({m, n});
    const T* __restrict pa = a.data.data();
    const T* __restrict pb = b.data.data();
    T* __restrict pc = c.data.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = pa[i * k + p];
            const T* __restrict brow = pb + p * n;
            T* __restrict crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_matrix(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor<T> t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

// a * b^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    return matmul(a, transpose(b));
}

// a^T * b
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    return matmul(transpose(a), b);
}

// Given c = a*b and upstream dc: da = dc*b^T, db = a^T*dc.
template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc,
                     Tensor<T>& da, Tensor<T>& db) {
    if (dc.rank() != 2 || dc.rows() != a.rows() || dc.cols() != b.cols())
        throw ShapeError("matmul_backward: upstream gradient is " + dc.shape_str() +
                         ", expected " + std::to_string(a.rows()) + "x" +
                         std::to_string(b.cols()));
    da = matmul_nt(dc, b);
    db = matmul_tn(a, dc);
}

// ---------------------------------------------------------------------------
// softmax over rows

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    detail::require_matrix(x, "softmax_rows");
    const std::size_t n = x.rows(), k = x.cols();
    Tensor<T> y({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        T mx = x.at(i, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(i, j));
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) {
            T e = std::exp(x.at(i, j) - mx);
            y.at(i, j) = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < k; ++j) y.at(i, j) *= inv;
    }
    return y;
}

// dx_i = y_i * (dy_i - sum_j dy_ij * y_ij), rows independent.
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    if (!y.same_shape(dy))
        throw ShapeError("softmax_rows_backward: " + y.shape_str() + " vs " + dy.shape_str());
    const std::size_t n = y.rows(), k = y.cols();
    Tensor<T> dx({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += dy.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < k; ++j) dx.at(i, j) = y.at(i, j) * (dy.at(i, j) - dot);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// elementwise ops; the only broadcast supported is a column over the last axis

namespace detail {

template <typename T>
bool col_broadcasts_over(const Tensor<T>& col, const Tensor<T>& m) {
    return col.rank() == 2 && m.rank() == 2 && col.cols() == 1 && col.rows() == m.rows();
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] += b.data[i];
    return c;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("sub: " + a.shape_str() + " vs " + b.shape_str());
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] -= b.data[i];
    return c;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.same_shape(b)) {
        Tensor<T> c = a;
        for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] *= b.data[i];
        return c;
    }
    if (detail::col_broadcasts_over(a, b)) {
        Tensor<T> c = b;
        for (std::size_t i = 0; i < b.rows(); ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) c.at(i, j) = a.at(i, 0) * b.at(i, j);
        return c;
    }
    if (detail::col_broadcasts_over(b, a)) return mul(b, a);
    throw ShapeError("mul: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
}

// Backward of c = col (.) m where col is rows x 1:
//   dcol_i = sum_j dc_ij * m_ij,  dm = col (.) dc
template <typename T>
void mul_colbcast_backward(const Tensor<T>& col, const Tensor<T>& m, const Tensor<T>& dc,
                           Tensor<T>& dcol, Tensor<T>& dm) {
    if (!detail::col_broadcasts_over(col, m) || !dc.same_shape(m))
        throw ShapeError("mul_colbcast_backward: incompatible shapes " + col.shape_str() +
                         ", " + m.shape_str() + ", " + dc.shape_str());
    dcol = Tensor<T>({col.rows(), 1});
    for (std::size_t i = 0; i < m.rows(); ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < m.cols(); ++j) s += dc.at(i, j) * m.at(i, j);
        dcol.at(i, 0) = s;
    }
    dm = mul(col, dc);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> c = a;
    for (T& v : c.data) v *= s;
    return c;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

// Subgradient 0 at exactly 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    if (!x.same_shape(dy))
        throw ShapeError("relu_backward: " + x.shape_str() + " vs " + dy.shape_str());
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.numel(); ++i)
        if (!(x.data[i] > T(0))) dx.data[i] = T(0);
    return dx;
}

// dst += src
template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    if (!dst.same_shape(src))
        throw ShapeError("add_into: " + dst.shape_str() + " vs " + src.shape_str());
    for (std::size_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}

// ---------------------------------------------------------------------------
// concatenation along the last (feature) axis

template <typename T>
Tensor<T> concat_cols(const std::vector<const Tensor<T>*>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t n = parts[0]->rows();
    std::size_t total = 0;
    for (const Tensor<T>* p : parts) {
        detail::require_matrix(*p, "concat_cols");
        if (p->rows() != n)
            throw ShapeError("concat_cols: leading dimension mismatch, " +
                             parts[0]->shape_str() + " vs " + p->shape_str());
        total += p->cols();
    }
    Tensor<T> out({n, total});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t off = 0;
        for (const Tensor<T>* p : parts) {
            const std::size_t w = p->cols();
            for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p->at(i, j);
            off += w;
        }
    }
    return out;
}

// Slices the upstream gradient back into per-part gradients.
template <typename T>
std::vector<Tensor<T>> concat_cols_backward(const Tensor<T>& dy,
                                            const std::vector<std::size_t>& widths) {
    detail::require_matrix(dy, "concat_cols_backward");
    std::size_t total = 0;
    for (std::size_t w : widths) total += w;
    if (total != dy.cols())
        throw ShapeError("concat_cols_backward: widths sum to " + std::to_string(total) +
                         ", gradient has " + std::to_string(dy.cols()) + " columns");
    std::vector<Tensor<T>> parts;
    parts.reserve(widths.size());
    std::size_t off = 0;
    for (std::size_t w : widths) {
        Tensor<T> g({dy.rows(), w});
        for (std::size_t i = 0; i < dy.rows(); ++i)
            for (std::size_t j = 0; j < w; ++j) g.at(i, j) = dy.at(i, off + j);
        parts.push_back(std::move(g));
        off += w;
    }
    return parts;
}

// Column sums of a matrix (bias gradients).
template <typename T>
Tensor<T> colsum(const Tensor<T>& m) {
    detail::require_matrix(m, "colsum");
    Tensor<T> s({std::size_t(1), m.cols()});
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s.at(0, j) += m.at(i, j);
    return s;
}

// Adds a 1 x n bias row to every row of m.
template <typename T>
Tensor<T> add_bias_rows(const Tensor<T>& m, const Tensor<T>& bias) {
    detail::require_matrix(m, "add_bias_rows");
    if (bias.rank() != 2 || bias.rows() != 1 || bias.cols() != m.cols())
        throw ShapeError("add_bias_rows: bias " + bias.shape_str() + " against " +
                         m.shape_str());
    Tensor<T> c = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) c.at(i, j) += bias.at(0, j);
    return c;
}

}  // namespace m3net
