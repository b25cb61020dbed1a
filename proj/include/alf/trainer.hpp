#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alf/dataset.hpp"
#include "alf/factorizer.hpp"
#include "alf/model.hpp"

namespace alf {

enum class Optimizer : std::uint8_t { Sgd = 0, SgdMomentum = 1 };

struct TrainingConfig {
    std::int64_t epochs = 10;
    std::int64_t batch_size = 64;
    double lr = 0.05;
    Optimizer optimizer = Optimizer::SgdMomentum;
    double momentum = 0.9;
    double lambda_rec = 1.0;
    std::int64_t m = 8;
    double pr = 0.85;
    unsigned seed = 1;
    Activation sigma_inter = Activation::Identity;  // applied when the arch is built
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    double lr_decay = 1.0;   // per-epoch multiplier

    void validate() const;
};

struct EpochRecord {
    std::int64_t epoch = 0;  // 1-based
    double task_loss = 0.0;
    double rec_loss = 0.0;
    double accuracy = 0.0;
    double model_gain = 1.0;  // parameter gain over the factorized layers
    std::vector<std::int64_t> masked_per_layer;
    std::vector<double> gain_per_layer;
};

struct Metrics {
    std::vector<EpochRecord> rows;
};

// Columns: epoch,task_loss,rec_loss,accuracy,masked_count,gain.
// masked_count totals the masked channels across alf layers; gain is the
// model-level parameter gain over the factorized layers.
std::string to_csv(const Metrics& metrics);

struct StepLosses {
    double task = 0.0;
    double rec = 0.0;
    double total = 0.0;
};

struct TrainerState {
    std::vector<Tensor4> momentum;             // parallel to the graph's parameter order
    std::vector<FactorizerState> factorizers;  // parallel to the model's alf layers
    double lr = 0.0;

    static TrainerState init(const Model& model, const TrainingConfig& cfg);
};

// Mean softmax cross-entropy, evaluated in 64-bit.
double task_loss(const Tensor4& logits, const std::vector<std::int32_t>& labels);

// Parameter gain of the factorized layers at their current active widths;
// 1.0 when the model has none.
double alf_param_gain(const Model& model);

// One optimizer step on one batch, then the factorizer schedule. A non-finite
// loss aborts with a diagnostic before any parameter is touched.
StepLosses train_step(Model& model, const Tensor4& batch,
                      const std::vector<std::int32_t>& labels, const TrainingConfig& cfg,
                      TrainerState& state);

// Top-1 accuracy with the training-mode (masked, uncompacted) forward.
double evaluate(const Model& model, const Dataset& ds);

Metrics train_loop(Model& model, const Dataset& train, const Dataset& test,
                   const TrainingConfig& cfg);

}  // namespace alf
