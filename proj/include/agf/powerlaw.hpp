#pragma once

#include <functional>
#include <span>

namespace agf {

struct DuaneFit {
    double a = 0.0;  // ln(mtbf) = -ln a + m ln t
    double m = 0.0;
    double rmse_loglog = 0.0;
};

struct AsymptoticFit {
    double L = 0.0;  // score(t) = L - a * t^(-m)
    double a = 0.0;
    double m = 0.0;
    double rmse = 0.0;  // in score space
};

struct PowerFit {
    double A = 0.0;  // y = A * (1 + x/r)^(-k)
    double r = 0.0;
    double k = 0.0;
    double rmse = 0.0;  // in log space
};

struct ExpFit {
    double A = 0.0;  // y = A * exp(-lambda x)
    double lambda = 0.0;
    double rmse = 0.0;  // in log space
};

enum class DecayFamily { power, exponential };

struct DecayComparison {
    PowerFit power;
    ExpFit exp;
    DecayFamily preferred = DecayFamily::power;
};

// Derivative-free 1-D minimizer on [lo, hi]; assumes a single basin.
double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol, int max_iter = 200);

// Log-log OLS. Errors: non-positive data, fewer than 2 distinct t.
DuaneFit fit_duane(std::span<const double> t, std::span<const double> mtbf);

// Fits score(t) = L - a * t^(-m) to scores at t = 1..n. The ceiling L is
// profiled by golden section; each candidate L gets a log-linear inner fit of
// ln(L - score) on ln t, and the candidate is judged by the residual in score
// space (the quantity the ceiling claim is about).
AsymptoticFit fit_asymptotic_power(std::span<const double> scores);
// Score-space RMSE of the inner fit at a fixed ceiling; exposed so the
// profile search can be audited.
double asymptotic_profile_rmse(std::span<const double> scores, double L);

ExpFit fit_exponential(std::span<const double> x, std::span<const double> y);
// Profiles r, inner log-linear fit for A and k.
PowerFit fit_power_decay(std::span<const double> x, std::span<const double> y);

DecayComparison compare_power_exp(std::span<const double> x, std::span<const double> y);

// Decay ratio of the power-law survival sequence S(i) = (d+i)^(-k):
// K(i) = S(i+1)/S(i) = ((d+i)/(d+i+1))^k. Strictly increasing in i.
double deep_smoothing_ratio(double d, double k, long long i);

}  // namespace agf
