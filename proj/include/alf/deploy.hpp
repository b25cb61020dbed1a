#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "alf/cost_model.hpp"
#include "alf/dataset.hpp"
#include "alf/model.hpp"

namespace alf {

// Inference-only layers: no masks, no reference bank, no encoder.
struct DeployedConv {
    Tensor4 w;     // [K,K,Ci,Co]
    Tensor4 bias;  // size 0 when absent
    Activation act = Activation::Relu;
    ConvGeometry geom;
};

struct DeployedAlf {
    Tensor4 w_code;  // [K,K,Ci,C_code_eff]
    Tensor4 w_exp;   // [1,1,C_code_eff,Co]
    Activation act_inter = Activation::Identity;
    Activation act = Activation::Relu;
    ConvGeometry geom;
    bool uneconomical = false;  // C_code_eff >= code_max(Ci,Co,K)
};

struct DeployedLinear {
    Tensor4 w;     // [1,1,features,classes]
    Tensor4 bias;  // [1,1,1,classes]
};

struct DeployedModel {
    static constexpr std::uint32_t kVersion = 1;
    std::vector<std::variant<DeployedConv, DeployedAlf, DeployedLinear>> layers;

    std::int64_t input_channels() const;
    std::int64_t classes() const;
};

// Keeps exactly the mask's surviving code channels, in order.
DeployedAlf compact(const ALFBlock& block);

DeployedModel compact_model(const Model& model);

Tensor4 deployed_forward(const DeployedModel& dm, const Tensor4& input);

double evaluate(const DeployedModel& dm, const Dataset& ds);

// Cost accounting of the factorized layers at their surviving widths, using
// the arch's derived output extents.
CostReport model_cost_report(const Model& model);

// ALF1 container. Byte-deterministic; see README for the exact layout.
std::string export_container(const DeployedModel& dm);
DeployedModel import_container(const std::string& bytes);

void save_container(const DeployedModel& dm, const std::string& path);
DeployedModel load_container(const std::string& path);

}  // namespace alf
