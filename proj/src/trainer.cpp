#include "alf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "alf/cost_model.hpp"
#include "alf/log.hpp"

namespace alf {

void TrainingConfig::validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
    if (lambda_rec < 0.0) throw ConfigError("train: lambda_rec must be >= 0");
    if (m < 1) throw ConfigError("train: m must be >= 1");
    if (pr < 0.0 || pr >= 1.0) throw ConfigError("train: pr must be in [0,1)");
    if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
    if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("train: lr_decay must be in (0,1]");
}

std::string to_csv(const Metrics& metrics) {
    std::ostringstream out;
    out << "epoch,task_loss,rec_loss,accuracy,masked_count,gain\n";
    char buf[160];
    for (const EpochRecord& r : metrics.rows) {
        std::int64_t masked = 0;
        for (auto v : r.masked_per_layer) masked += v;
        std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%lld,%.6f\n",
                      static_cast<long long>(r.epoch), r.task_loss, r.rec_loss, r.accuracy,
                      static_cast<long long>(masked), r.model_gain);
        out << buf;
    }
    return out.str();
}

double task_loss(const Tensor4& logits, const std::vector<std::int32_t>& labels) {
    const std::int64_t n = logits.dim(0), c = logits.dim(3);
    if (static_cast<std::int64_t>(labels.size()) != n) {
        throw ShapeError("task_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " logit rows");
    }
    double total = 0.0;
    for (std::int64_t b = 0; b < n; ++b) {
        const std::int32_t y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= c) {
            throw ShapeError("task_loss: label " + std::to_string(y) + " out of range [0, " +
                             std::to_string(c) + ")");
        }
        const float* row = logits.raw() + b * c;
        double mx = row[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (std::int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        total += std::log(denom) - (static_cast<double>(row[y]) - mx);
    }
    return total / static_cast<double>(n);
}

double alf_param_gain(const Model& model) {
    std::int64_t std_params = 0, alf_params = 0;
    for (const auto& layer : model.layers) {
        if (const auto* block = std::get_if<ALFBlock>(&layer)) {
            const std::int64_t k = block->kernel(), ci = block->ci(), co = block->co();
            const std::int64_t ce = block->active_count();
            std_params += k * k * ci * co;
            alf_params += k * k * ci * ce + ce * co;
        }
    }
    if (alf_params == 0) return 1.0;
    return static_cast<double>(std_params) / static_cast<double>(alf_params);
}

TrainerState TrainerState::init(const Model& model, const TrainingConfig& cfg) {
    cfg.validate();
    TrainerState st;
    st.lr = cfg.lr;
    for (const auto& layer : model.layers) {
        if (std::holds_alternative<ALFBlock>(layer)) {
            FactorizerState f;
            f.m = cfg.m;
            f.pr = cfg.pr;
            st.factorizers.push_back(f);
        }
    }
    return st;
}

StepLosses train_step(Model& model, const Tensor4& batch,
                      const std::vector<std::int32_t>& labels, const TrainingConfig& cfg,
                      TrainerState& state) {
    cfg.validate();
    Tape tape;
    TrainGraph<float> g = build_train_graph(tape, model, batch, labels, cfg.lambda_rec);

    StepLosses losses;
    losses.task = tape.value(g.task_loss).raw()[0];
    losses.rec = g.rec_sum < 0 ? 0.0 : tape.value(g.rec_sum).raw()[0];
    losses.total = tape.value(g.total).raw()[0];
    if (!std::isfinite(losses.total)) {
        throw NumericError("train_step: non-finite loss (task=" + std::to_string(losses.task) +
                           ", rec=" + std::to_string(losses.rec) + "), aborting");
    }

    tape.backward(g.total);

    double scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [node, ptr] : g.params) {
            (void)ptr;
            for (float v : tape.grad(node).data()) sq += static_cast<double>(v) * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
    }

    if (state.momentum.empty()) {
        for (const auto& [node, ptr] : g.params) {
            (void)node;
            state.momentum.push_back(Tensor4::zeros(ptr->dims(), ptr->layout()));
        }
    }
    if (state.momentum.size() != g.params.size()) {
        throw Error("train_step: optimizer state does not match the parameter list");
    }

    const auto lr = static_cast<float>(state.lr);
    for (std::size_t i = 0; i < g.params.size(); ++i) {
        auto& [node, ptr] = g.params[i];
        const Tensor4& grad = tape.grad(node);
        float* p = ptr->raw();
        const float* gr = grad.raw();
        if (cfg.optimizer == Optimizer::SgdMomentum && cfg.momentum > 0.0) {
            float* buf = state.momentum[i].raw();
            const auto mu = static_cast<float>(cfg.momentum);
            for (std::int64_t j = 0; j < ptr->size(); ++j) {
                buf[j] = mu * buf[j] + static_cast<float>(scale) * gr[j];
                p[j] -= lr * buf[j];
            }
        } else {
            for (std::int64_t j = 0; j < ptr->size(); ++j) {
                p[j] -= lr * static_cast<float>(scale) * gr[j];
            }
        }
    }

    std::size_t f = 0;
    for (auto& layer : model.layers) {
        if (auto* block = std::get_if<ALFBlock>(&layer)) {
            step_schedule(state.factorizers[f++], *block);
        }
    }
    return losses;
}

double evaluate(const Model& model, const Dataset& ds) {
    const std::int64_t n = ds.size();
    if (n == 0) return 0.0;
    const std::int64_t h = ds.images.dim(1), w = ds.images.dim(2), c = ds.images.dim(3);
    const std::int64_t sample = h * w * c;
    const std::int64_t chunk = 256;

    std::int64_t correct = 0;
    for (std::int64_t at = 0; at < n; at += chunk) {
        const std::int64_t bn = std::min(chunk, n - at);
        Tensor4 batch({bn, h, w, c}, Layout::NHWC);
        std::copy_n(ds.images.raw() + at * sample, bn * sample, batch.raw());
        Tensor4 logits = model_logits(model, batch);
        const std::int64_t classes = logits.dim(3);
        for (std::int64_t b = 0; b < bn; ++b) {
            const float* row = logits.raw() + b * classes;
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < classes; ++j) {
                if (row[j] > row[best]) best = j;
            }
            correct += (best == ds.labels[static_cast<std::size_t>(at + b)]);
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

Metrics train_loop(Model& model, const Dataset& train, const Dataset& test,
                   const TrainingConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) throw ConfigError("train_loop: empty training set");

    Metrics metrics;
    if (cfg.epochs == 0) return metrics;

    TrainerState state = TrainerState::init(model, cfg);
    std::mt19937 shuffle_rng(cfg.seed);
    const std::int64_t n = train.size();
    const std::int64_t h = train.images.dim(1), w = train.images.dim(2),
                       c = train.images.dim(3);
    const std::int64_t sample = h * w * c;

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double task_sum = 0.0, rec_sum = 0.0;
        std::int64_t steps = 0;

        for (std::int64_t at = 0; at < n; at += cfg.batch_size) {
            const std::int64_t bn = std::min(cfg.batch_size, n - at);
            Tensor4 batch({bn, h, w, c}, Layout::NHWC);
            std::vector<std::int32_t> labels(static_cast<std::size_t>(bn));
            for (std::int64_t b = 0; b < bn; ++b) {
                const std::int64_t src = order[static_cast<std::size_t>(at + b)];
                std::copy_n(train.images.raw() + src * sample, sample, batch.raw() + b * sample);
                labels[static_cast<std::size_t>(b)] = train.labels[static_cast<std::size_t>(src)];
            }
            StepLosses losses = train_step(model, batch, labels, cfg, state);
            task_sum += losses.task;
            rec_sum += losses.rec;
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.task_loss = task_sum / static_cast<double>(steps);
        rec.rec_loss = rec_sum / static_cast<double>(steps);
        rec.accuracy = evaluate(model, test);
        rec.model_gain = alf_param_gain(model);
        for (const auto& layer : model.layers) {
            if (const auto* block = std::get_if<ALFBlock>(&layer)) {
                rec.masked_per_layer.push_back(block->masked_count());
                rec.gain_per_layer.push_back(
                    gain_ratio(block->ci(), block->co(), block->kernel(), block->active_count())
                        .value());
                const std::int64_t cm =
                    code_max(block->ci(), block->co(), block->kernel());
                if (block->active_count() >= cm) {
                    log_info("trainer",
                             "alf layer with %lld active channels is at or above code_max %lld "
                             "(no saving yet)",
                             static_cast<long long>(block->active_count()),
                             static_cast<long long>(cm));
                }
            }
        }
        metrics.rows.push_back(std::move(rec));
        log_info("trainer", "epoch %lld: task=%.4f rec=%.4f acc=%.4f",
                 static_cast<long long>(epoch), metrics.rows.back().task_loss,
                 metrics.rows.back().rec_loss, metrics.rows.back().accuracy);
        state.lr *= cfg.lr_decay;
    }
    return metrics;
}

}  // namespace alf
