#include "agf/powerlaw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "agf/error.hpp"

namespace agf {

namespace {

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
    double rmse = 0.0;
};

Line ols(std::span<const double> u, std::span<const double> v) {
    const size_t n = u.size();
    double mu = 0.0, mv = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= n;
    mv /= n;
    double suu = 0.0, suv = 0.0;
    for (size_t i = 0; i < n; ++i) {
        suu += (u[i] - mu) * (u[i] - mu);
        suv += (u[i] - mu) * (v[i] - mv);
    }
    if (suu <= 0.0) throw FitError("regression needs at least two distinct abscissae");
    Line l;
    l.slope = suv / suu;
    l.intercept = mv - l.slope * mu;
    double se = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double r = v[i] - (l.intercept + l.slope * u[i]);
        se += r * r;
    }
    l.rmse = std::sqrt(se / n);
    return l;
}

}  // namespace

double golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol,
                          int max_iter) {
    if (!(hi > lo)) throw DomainError("golden section needs lo < hi");
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

DuaneFit fit_duane(std::span<const double> t, std::span<const double> mtbf) {
    if (t.size() != mtbf.size()) throw ShapeError("time/mtbf length mismatch");
    if (t.size() < 2) throw FitError("need at least 2 points");
    std::vector<double> lt(t.size()), lm(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] <= 0.0 || mtbf[i] <= 0.0) throw DomainError("times and mtbf must be positive");
        lt[i] = std::log(t[i]);
        lm[i] = std::log(mtbf[i]);
    }
    Line l = ols(lt, lm);
    DuaneFit fit;
    fit.m = l.slope;
    fit.a = std::exp(-l.intercept);
    fit.rmse_loglog = l.rmse;
    return fit;
}

double asymptotic_profile_rmse(std::span<const double> scores, double L) {
    const size_t n = scores.size();
    std::vector<double> lt(n), lg(n);
    for (size_t i = 0; i < n; ++i) {
        double gap = L - scores[i];
        if (gap <= 0.0) return std::numeric_limits<double>::infinity();
        lt[i] = std::log(static_cast<double>(i + 1));
        lg[i] = std::log(gap);
    }
    Line l = ols(lt, lg);
    double a = std::exp(l.intercept), m = -l.slope;
    double se = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double pred = L - a * std::pow(static_cast<double>(i + 1), -m);
        se += (pred - scores[i]) * (pred - scores[i]);
    }
    return std::sqrt(se / n);
}

AsymptoticFit fit_asymptotic_power(std::span<const double> scores) {
    if (scores.size() < 4) throw FitError("need at least 4 epoch scores");
    double lo_score = scores.front(), hi_score = scores.front();
    for (double s : scores) {
        lo_score = std::min(lo_score, s);
        hi_score = std::max(hi_score, s);
    }
    if (hi_score == lo_score) throw FitError("constant scores admit no ceiling fit");
    if (scores.back() <= scores.front())
        throw FitError("scores must trend upward toward a ceiling");

    const double lo = hi_score + 1e-9;
    const double hi = hi_score + 10.0;
    auto objective = [&](double L) { return asymptotic_profile_rmse(scores, L); };
    double L = golden_section_min(objective, lo, hi, 1e-10);

    const size_t n = scores.size();
    std::vector<double> lt(n), lg(n);
    for (size_t i = 0; i < n; ++i) {
        lt[i] = std::log(static_cast<double>(i + 1));
        lg[i] = std::log(L - scores[i]);
    }
    Line l = ols(lt, lg);
    AsymptoticFit fit;
    fit.L = L;
    fit.a = std::exp(l.intercept);
    fit.m = -l.slope;
    fit.rmse = asymptotic_profile_rmse(scores, L);
    return fit;
}

ExpFit fit_exponential(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("x/y length mismatch");
    if (x.size() < 2) throw FitError("need at least 2 points");
    std::vector<double> ly(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] <= 0.0) throw DomainError("exponential fit needs positive values");
        ly[i] = std::log(y[i]);
    }
    Line l = ols(x, ly);
    ExpFit fit;
    fit.A = std::exp(l.intercept);
    fit.lambda = -l.slope;
    fit.rmse = l.rmse;
    return fit;
}

namespace {

double power_profile_rmse(std::span<const double> x, std::span<const double> y, double r,
                          PowerFit* out) {
    std::vector<double> u(x.size()), ly(y.size());
    for (size_t i = 0; i < x.size(); ++i) {
        u[i] = std::log1p(x[i] / r);
        ly[i] = std::log(y[i]);
    }
    Line l = ols(u, ly);
    if (out) {
        out->A = std::exp(l.intercept);
        out->r = r;
        out->k = -l.slope;
        out->rmse = l.rmse;
    }
    return l.rmse;
}

}  // namespace

PowerFit fit_power_decay(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("x/y length mismatch");
    if (x.size() < 3) throw FitError("need at least 3 points");
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0.0) throw DomainError("power fit needs non-negative abscissae");
        if (y[i] <= 0.0) throw DomainError("power fit needs positive values");
    }
    auto objective = [&](double lr) { return power_profile_rmse(x, y, std::exp(lr), nullptr); };
    double lr = golden_section_min(objective, std::log(1e-3), std::log(1e6), 1e-10);
    PowerFit fit;
    power_profile_rmse(x, y, std::exp(lr), &fit);
    return fit;
}

DecayComparison compare_power_exp(std::span<const double> x, std::span<const double> y) {
    if (x.size() < 5) throw FitError("need at least 5 points to compare families");
    DecayComparison cmp;
    cmp.power = fit_power_decay(x, y);
    cmp.exp = fit_exponential(x, y);
    cmp.preferred =
        cmp.power.rmse < cmp.exp.rmse ? DecayFamily::power : DecayFamily::exponential;
    return cmp;
}

double deep_smoothing_ratio(double d, double k, long long i) {
    if (d <= 0.0 || k <= 0.0 || i <= 0) throw DomainError("deep smoothing needs d>0, k>0, i>0");
    double di = d + static_cast<double>(i);
    return std::pow(di / (di + 1.0), k);
}

}  // namespace agf
