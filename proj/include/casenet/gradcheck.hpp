#pragma once
#include <functional>
#include <vector>

#include "casenet/graph.hpp"
#include "casenet/tensor.hpp"

namespace casenet {

/// A deterministic scalar-valued function of one tensor, built on a graph.
using ScalarFn = std::function<Tensor(Graph&, const Tensor&)>;

/// Max over elements of |a - n| / max(|a|, |n|, 1e-8).
double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// Central-difference check of backward() through f at x. Probes every element
/// of x, so keep x small. Throws NumericError (with the element index) when a
/// NaN shows up on either route.
double finite_diff_check(const ScalarFn& f, Tensor& x, double eps = 1e-5);

}  // namespace casenet
