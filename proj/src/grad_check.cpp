#include "alf/grad_check.hpp"

#include <cmath>
#include <sstream>

namespace alf {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tol;
    for (const auto& e : entries) {
        os << "\n  " << e.name << ": max_rel_err=" << e.max_rel_err << " at index "
           << e.worst_index << " (analytic=" << e.analytic << ", numeric=" << e.numeric << ")";
    }
    return os.str();
}

GradCheckReport grad_check_fn(const ValueFn& value, const GradsFn& grads,
                              const std::vector<Tensor4d>& params, double eps, double tol,
                              std::vector<std::string> names) {
    GradCheckReport report;
    report.tol = tol;

    const std::vector<Tensor4d> analytic = grads(params);
    if (analytic.size() != params.size()) {
        throw Error("grad_check: gradient count does not match parameter count");
    }

    std::vector<Tensor4d> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        GradCheckEntry entry;
        entry.name = pi < names.size() ? names[pi] : "param" + std::to_string(pi);
        if (!analytic[pi].same_dims(params[pi])) {
            throw Error("grad_check: gradient shape mismatch for " + entry.name);
        }
        for (std::int64_t i = 0; i < params[pi].size(); ++i) {
            const double theta = work[pi].raw()[i];
            const double h = eps * std::max(1.0, std::abs(theta));
            work[pi].raw()[i] = theta + h;
            const double fp = value(work);
            work[pi].raw()[i] = theta - h;
            const double fm = value(work);
            work[pi].raw()[i] = theta;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[pi].raw()[i];
            const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            if (err > entry.max_rel_err) {
                entry.max_rel_err = err;
                entry.worst_index = i;
                entry.analytic = an;
                entry.numeric = fd;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

GradCheckReport grad_check(const TapeBuilder& build, const std::vector<Tensor4d>& params,
                           double eps, double tol, std::vector<std::string> names) {
    auto run = [&build](const std::vector<Tensor4d>& p, bool want_grads) {
        TapeD tape;
        std::vector<TapeD::NodeId> ids;
        ids.reserve(p.size());
        for (const Tensor4d& t : p) ids.push_back(tape.leaf(t, true));
        const TapeD::NodeId loss = build(tape, ids);
        std::pair<double, std::vector<Tensor4d>> out;
        out.first = tape.value(loss).raw()[0];
        if (want_grads) {
            tape.backward(loss);
            for (TapeD::NodeId id : ids) out.second.push_back(tape.grad(id));
        }
        return out;
    };
    ValueFn value = [&run](const std::vector<Tensor4d>& p) { return run(p, false).first; };
    GradsFn grads = [&run](const std::vector<Tensor4d>& p) { return run(p, true).second; };
    return grad_check_fn(value, grads, params, eps, tol, std::move(names));
}

}  // namespace alf
