#include "agf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "agf/error.hpp"

namespace agf {

GradCheckReport finite_diff_gradcheck(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& theta,
                                      const std::vector<double>& analytic_grad, double h) {
    if (theta.size() != analytic_grad.size())
        throw ShapeError("finite_diff_gradcheck: grad length must match parameter length");
    if (!(h > 0.0)) throw DomainError("finite_diff_gradcheck: step must be positive");

    GradCheckReport report;
    std::vector<double> probe = theta;
    for (size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + h;
        const double fp = f(probe);
        probe[i] = theta[i] - h;
        const double fm = f(probe);
        probe[i] = theta[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw DomainError("finite_diff_gradcheck: non-finite function evaluation");
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = analytic_grad[i];
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(analytic - numeric) / denom;
        if (rel > report.max_rel_err || report.worst_index < 0) {
            report.max_rel_err = rel;
            report.worst_index = static_cast<int>(i);
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    return report;
}

}  // namespace agf
