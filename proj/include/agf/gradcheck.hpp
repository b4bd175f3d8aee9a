#pragma once

#include <functional>
#include <vector>

namespace agf {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int worst_index = -1;
    double analytic = 0.0;  // analytic gradient at the worst coordinate
    double numeric = 0.0;   // central-difference estimate at the worst coordinate
};

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h against a supplied
// analytic gradient. Relative error uses max(|analytic|, |numeric|, 1e-8)
// as denominator. Throws DomainError if f evaluates to a non-finite value.
GradCheckReport finite_diff_gradcheck(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& theta,
                                      const std::vector<double>& analytic_grad, double h = 1e-5);

}  // namespace agf
