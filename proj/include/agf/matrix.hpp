#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace agf {

// Dense row-major matrix of doubles. The whole laboratory runs in double
// precision; verification leaves no headroom for float.
struct Dense2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Dense2() = default;
    Dense2(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    static Dense2 identity(int n);
    bool same_shape(const Dense2& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

Dense2 matmul(const Dense2& a, const Dense2& b);
// a * b^T and a^T * b; used throughout the backward passes.
Dense2 matmul_nt(const Dense2& a, const Dense2& b);
Dense2 matmul_tn(const Dense2& a, const Dense2& b);

// Gradients of c = a*b given upstream d(loss)/dc. Accumulates into ga/gb,
// which must already have the right shapes.
void matmul_backward(const Dense2& a, const Dense2& b, const Dense2& gout, Dense2& ga, Dense2& gb);
// Same for c = a*b^T.
void matmul_backward_nt(const Dense2& a, const Dense2& b, const Dense2& gout, Dense2& ga,
                        Dense2& gb);

// Row-wise softmax, stabilized by row-max subtraction.
Dense2 softmax_rows(const Dense2& x);
// Backward given the forward output s and upstream grad g:
// dx_ij = s_ij * (g_ij - sum_k g_ik s_ik).
Dense2 softmax_rows_backward(const Dense2& softmax_out, const Dense2& gout);

struct LayerNormCache {
    std::vector<double> mean;     // per row
    std::vector<double> inv_std;  // per row, 1/sqrt(var + eps)
};

Dense2 layer_norm(const Dense2& x, std::span<const double> gain, std::span<const double> bias,
                  double eps, LayerNormCache* cache = nullptr);

// dgain/dbias accumulate; dx is returned.
Dense2 layer_norm_backward(const Dense2& x, const Dense2& gout, std::span<const double> gain,
                           const LayerNormCache& cache, std::span<double> dgain,
                           std::span<double> dbias);

}  // namespace agf
