#include "agf/matrix.hpp"

#include <cmath>
#include <string>

#include "agf/error.hpp"

namespace agf {

Dense2 Dense2::identity(int n) {
    Dense2 m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

bool Dense2::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

static void check_nonempty(const Dense2& m, const char* name) {
    if (m.rows <= 0 || m.cols <= 0)
        throw ShapeError(std::string(name) + ": zero-length axis");
}

Dense2 matmul(const Dense2& a, const Dense2& b) {
    check_nonempty(a, "matmul lhs");
    check_nonempty(b, "matmul rhs");
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows));
    Dense2 c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Dense2 matmul_nt(const Dense2& a, const Dense2& b) {
    check_nonempty(a, "matmul_nt lhs");
    check_nonempty(b, "matmul_nt rhs");
    if (a.cols != b.cols)
        throw ShapeError("matmul_nt: inner dimensions " + std::to_string(a.cols) + " vs " +
                         std::to_string(b.cols));
    Dense2 c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            crow[j] = s;
        }
    }
    return c;
}

Dense2 matmul_tn(const Dense2& a, const Dense2& b) {
    check_nonempty(a, "matmul_tn lhs");
    check_nonempty(b, "matmul_tn rhs");
    if (a.rows != b.rows)
        throw ShapeError("matmul_tn: inner dimensions " + std::to_string(a.rows) + " vs " +
                         std::to_string(b.rows));
    Dense2 c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            double* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

void matmul_backward(const Dense2& a, const Dense2& b, const Dense2& gout, Dense2& ga, Dense2& gb) {
    if (gout.rows != a.rows || gout.cols != b.cols)
        throw ShapeError("matmul_backward: upstream shape mismatch");
    if (!ga.same_shape(a) || !gb.same_shape(b))
        throw ShapeError("matmul_backward: gradient shape mismatch");
    // ga += gout * b^T
    for (int i = 0; i < a.rows; ++i) {
        const double* grow = gout.row(i);
        double* garow = ga.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double* brow = b.row(k);
            double s = 0.0;
            for (int j = 0; j < b.cols; ++j) s += grow[j] * brow[j];
            garow[k] += s;
        }
    }
    // gb += a^T * gout
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* grow = gout.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            double* gbrow = gb.row(k);
            for (int j = 0; j < b.cols; ++j) gbrow[j] += aik * grow[j];
        }
    }
}

void matmul_backward_nt(const Dense2& a, const Dense2& b, const Dense2& gout, Dense2& ga,
                        Dense2& gb) {
    if (gout.rows != a.rows || gout.cols != b.rows)
        throw ShapeError("matmul_backward_nt: upstream shape mismatch");
    if (!ga.same_shape(a) || !gb.same_shape(b))
        throw ShapeError("matmul_backward_nt: gradient shape mismatch");
    // c = a * b^T: ga += gout * b, gb += gout^T * a
    for (int i = 0; i < a.rows; ++i) {
        const double* grow = gout.row(i);
        double* garow = ga.row(i);
        for (int n = 0; n < b.rows; ++n) {
            const double g = grow[n];
            if (g == 0.0) continue;
            const double* brow = b.row(n);
            double* gbrow = gb.row(n);
            const double* arow = a.row(i);
            for (int j = 0; j < a.cols; ++j) {
                garow[j] += g * brow[j];
                gbrow[j] += g * arow[j];
            }
        }
    }
}

Dense2 softmax_rows(const Dense2& x) {
    Dense2 out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double* orow = out.row(i);
        double mx = xr[0];
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            orow[j] = std::exp(xr[j] - mx);
            sum += orow[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < x.cols; ++j) orow[j] *= inv;
    }
    return out;
}

Dense2 softmax_rows_backward(const Dense2& s, const Dense2& gout) {
    if (!s.same_shape(gout)) throw ShapeError("softmax_rows_backward: shape mismatch");
    Dense2 dx(s.rows, s.cols);
    for (int i = 0; i < s.rows; ++i) {
        const double* sr = s.row(i);
        const double* gr = gout.row(i);
        double dot = 0.0;
        for (int j = 0; j < s.cols; ++j) dot += gr[j] * sr[j];
        double* dr = dx.row(i);
        for (int j = 0; j < s.cols; ++j) dr[j] = sr[j] * (gr[j] - dot);
    }
    return dx;
}

Dense2 layer_norm(const Dense2& x, std::span<const double> gain, std::span<const double> bias,
                  double eps, LayerNormCache* cache) {
    if (static_cast<int>(gain.size()) != x.cols || static_cast<int>(bias.size()) != x.cols)
        throw ShapeError("layer_norm: gain/bias length must match cols");
    Dense2 out(x.rows, x.cols);
    if (cache) {
        cache->mean.assign(x.rows, 0.0);
        cache->inv_std.assign(x.rows, 0.0);
    }
    const double n = x.cols;
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += xr[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= n;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        if (cache) {
            cache->mean[i] = mean;
            cache->inv_std[i] = inv_std;
        }
        double* orow = out.row(i);
        for (int j = 0; j < x.cols; ++j)
            orow[j] = gain[j] * (xr[j] - mean) * inv_std + bias[j];
    }
    return out;
}

Dense2 layer_norm_backward(const Dense2& x, const Dense2& gout, std::span<const double> gain,
                           const LayerNormCache& cache, std::span<double> dgain,
                           std::span<double> dbias) {
    if (!x.same_shape(gout)) throw ShapeError("layer_norm_backward: shape mismatch");
    Dense2 dx(x.rows, x.cols);
    const double n = x.cols;
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        const double* gr = gout.row(i);
        const double mean = cache.mean[i];
        const double inv_std = cache.inv_std[i];
        // dxhat, then the two reduction terms of the standard formula.
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double xhat = (xr[j] - mean) * inv_std;
            const double dxhat = gr[j] * gain[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgain[j] += gr[j] * xhat;
            dbias[j] += gr[j];
        }
        double* dr = dx.row(i);
        for (int j = 0; j < x.cols; ++j) {
            const double xhat = (xr[j] - mean) * inv_std;
            const double dxhat = gr[j] * gain[j];
            dr[j] = inv_std * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
        }
    }
    return dx;
}

}  // namespace agf
