#include "alf/cost_model.hpp"

#include <cstdio>
#include <sstream>

namespace alf {

CostReport make_cost_report(std::vector<LayerCostEntry> layers) {
    CostReport r;
    r.layers = std::move(layers);
    r.total.id = "total";
    for (const auto& e : r.layers) {
        r.total.params_std += e.params_std;
        r.total.params_alf += e.params_alf;
        r.total.ops_std += e.ops_std;
        r.total.ops_alf += e.ops_alf;
    }
    if (r.total.params_alf > 0) {
        r.total.gain_params = Ratio::of(r.total.params_std, r.total.params_alf);
    }
    if (r.total.ops_alf > 0) {
        r.total.gain_ops = Ratio::of(r.total.ops_std, r.total.ops_alf);
    }
    r.total.uneconomical = r.total.gain_params < Ratio{1, 1};
    return r;
}

namespace {

std::string fmt_ratio(const Ratio& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", r.value());
    return buf;
}

void append_row(std::ostringstream& out, const LayerCostEntry& e) {
    out << e.id << ',' << e.ci << ',' << e.co << ',' << e.k << ',' << e.ho << ',' << e.wo << ','
        << e.c_code_eff << ',' << e.params_std << ',' << e.params_alf << ',' << e.ops_std << ','
        << e.ops_alf << ',' << fmt_ratio(e.gain_params) << ',' << fmt_ratio(e.gain_ops) << ','
        << e.c_code_max << '\n';
}

}  // namespace

std::string to_csv(const CostReport& report) {
    std::ostringstream out;
    out << "layer,ci,co,k,ho,wo,c_code_eff,params_std,params_alf,ops_std,ops_alf,"
           "gain_params,gain_ops,c_code_max\n";
    for (const auto& e : report.layers) append_row(out, e);
    append_row(out, report.total);
    return out.str();
}

}  // namespace alf
