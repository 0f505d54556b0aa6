#include "casenet/gradcheck.hpp"

#include <cmath>
#include <string>

#include "casenet/errors.hpp"

namespace casenet {

double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    if (analytic.size() != numeric.size())
        throw ContractError("max_rel_error: gradient sizes differ");
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        if (std::isnan(a) || std::isnan(n))
            throw NumericError("max_rel_error: NaN at element " + std::to_string(i));
        const double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
        worst = std::max(worst, std::fabs(a - n) / denom);
    }
    return worst;
}

double finite_diff_check(const ScalarFn& f, Tensor& x, double eps) {
    if (!x.requires_grad || !x.grad)
        throw ContractError("finite_diff_check: x must have requires_grad");
    for (double v : *x.data)
        if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite input");

    x.zero_grad();
    {
        Graph g;
        Tensor y = f(g, x);
        if (!y.is_scalar()) throw ContractError("finite_diff_check: f must return a scalar");
        g.backward(y);
    }
    const std::vector<double> analytic = *x.grad;

    std::vector<double> numeric(analytic.size());
    for (size_t i = 0; i < numeric.size(); ++i) {
        const double saved = (*x.data)[i];
        double yp, ym;
        {
            Graph g;
            g.recording = false;
            (*x.data)[i] = saved + eps;
            yp = f(g, x).item();
        }
        {
            Graph g;
            g.recording = false;
            (*x.data)[i] = saved - eps;
            ym = f(g, x).item();
        }
        (*x.data)[i] = saved;
        if (std::isnan(yp) || std::isnan(ym))
            throw NumericError("finite_diff_check: NaN probing element " + std::to_string(i));
        numeric[i] = (yp - ym) / (2.0 * eps);
    }
    return max_rel_error(analytic, numeric);
}

}  // namespace casenet
