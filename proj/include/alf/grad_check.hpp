#pragma once

#include <functional>
#include <string>
#include <vector>

#include "alf/tape.hpp"
#include "alf/tensor.hpp"

namespace alf {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::int64_t worst_index = -1;
    double analytic = 0.0;   // analytic gradient at the worst element
    double numeric = 0.0;    // central-difference estimate there
};

struct GradCheckReport {
    double tol = 0.0;
    double max_rel_err = 0.0;
    bool pass = false;
    std::vector<GradCheckEntry> entries;

    std::string summary() const;
};

// Scalar replay of the function under test; must be deterministic.
using ValueFn = std::function<double(const std::vector<Tensor4d>&)>;
// Analytic gradients, one tensor per parameter, same shapes as the parameters.
using GradsFn = std::function<std::vector<Tensor4d>(const std::vector<Tensor4d>&)>;

// Central differences against the supplied analytic gradients. The step is
// eps scaled per parameter element (eps * max(1,|theta|)); the error is
// |a - fd| / max(1, |a|, |fd|).
GradCheckReport grad_check_fn(const ValueFn& value, const GradsFn& grads,
                              const std::vector<Tensor4d>& params, double eps, double tol,
                              std::vector<std::string> names = {});

// Convenience wrapper: the builder appends the function to a fresh 64-bit tape
// given leaf nodes for the parameters and returns the scalar loss node. Both
// the replayed values and the analytic gradients come from that builder.
using TapeBuilder =
    std::function<TapeD::NodeId(TapeD& tape, const std::vector<TapeD::NodeId>& param_nodes)>;

GradCheckReport grad_check(const TapeBuilder& build, const std::vector<Tensor4d>& params,
                           double eps, double tol, std::vector<std::string> names = {});

}  // namespace alf
