#include "alf/config.hpp"

#include <json.hpp>

#include "alf/binio.hpp"

namespace alf {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("config: unknown key '" + where + item.key() + "'");
        }
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::int64_t get_int(const json& obj, const std::string& where, const char* key,
                     std::int64_t fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) return fallback;
    if (!v->is_number_integer()) {
        throw ConfigError("config: '" + where + key + "' must be an integer");
    }
    return v->get<std::int64_t>();
}

double get_num(const json& obj, const std::string& where, const char* key, double fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) return fallback;
    if (!v->is_number()) {
        throw ConfigError("config: '" + where + key + "' must be a number");
    }
    return v->get<double>();
}

bool get_bool(const json& obj, const std::string& where, const char* key, bool fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) {
        throw ConfigError("config: '" + where + key + "' must be a boolean");
    }
    return v->get<bool>();
}

std::string get_str(const json& obj, const std::string& where, const char* key,
                    const std::string& fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) {
        throw ConfigError("config: '" + where + key + "' must be a string");
    }
    return v->get<std::string>();
}

Activation parse_act(const std::string& name, const std::string& where) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    throw ConfigError("config: '" + where + "' must be \"identity\" or \"relu\", got \"" + name +
                      "\"");
}

ArchSpec parse_arch(const json& a) {
    if (!a.is_object()) throw ConfigError("config: 'arch' must be an object");
    require_keys(a, "arch.", {"input", "classes", "layers"});

    ArchSpec arch;
    const json* input = find(a, "input");
    if (input == nullptr || !input->is_object()) {
        throw ConfigError("config: 'arch.input' object is required");
    }
    require_keys(*input, "arch.input.", {"h", "w", "c"});
    arch.in_h = get_int(*input, "arch.input.", "h", 0);
    arch.in_w = get_int(*input, "arch.input.", "w", 0);
    arch.in_c = get_int(*input, "arch.input.", "c", 0);
    arch.classes = get_int(a, "arch.", "classes", 0);

    const json* layers = find(a, "layers");
    if (layers == nullptr || !layers->is_array()) {
        throw ConfigError("config: 'arch.layers' array is required");
    }
    std::size_t index = 0;
    for (const json& l : *layers) {
        const std::string where = "arch.layers[" + std::to_string(index++) + "].";
        if (!l.is_object()) throw ConfigError("config: layer entries must be objects");
        require_keys(l, where,
                     {"kind", "id", "co", "k", "stride", "pad", "act", "act_inter", "bias", "ci"});

        LayerSpec s;
        const std::string kind = get_str(l, where, "kind", "");
        if (kind == "conv") {
            s.kind = LayerKind::Conv;
        } else if (kind == "alf") {
            s.kind = LayerKind::Alf;
        } else {
            throw ConfigError("config: '" + where + "kind' must be \"conv\" or \"alf\"");
        }
        s.id = get_str(l, where, "id", "");
        s.co = get_int(l, where, "co", 0);
        s.k = get_int(l, where, "k", 1);
        s.stride = get_int(l, where, "stride", 1);
        s.pad = get_int(l, where, "pad", 0);
        s.act = parse_act(get_str(l, where, "act", "relu"), where + "act");
        s.act_inter = parse_act(get_str(l, where, "act_inter", "identity"), where + "act_inter");
        s.bias = get_bool(l, where, "bias", false);
        s.ci = get_int(l, where, "ci", -1);
        arch.layers.push_back(std::move(s));
    }
    return arch;
}

TrainingConfig parse_train(const json& t) {
    if (!t.is_object()) throw ConfigError("config: 'train' must be an object");
    require_keys(t, "train.",
                 {"epochs", "batch_size", "lr", "optimizer", "momentum", "lambda_rec", "m", "pr",
                  "seed", "grad_clip", "lr_decay"});

    TrainingConfig cfg;
    cfg.epochs = get_int(t, "train.", "epochs", cfg.epochs);
    cfg.batch_size = get_int(t, "train.", "batch_size", cfg.batch_size);
    cfg.lr = get_num(t, "train.", "lr", cfg.lr);
    const std::string opt = get_str(t, "train.", "optimizer", "sgd_momentum");
    if (opt == "sgd") {
        cfg.optimizer = Optimizer::Sgd;
    } else if (opt == "sgd_momentum") {
        cfg.optimizer = Optimizer::SgdMomentum;
    } else {
        throw ConfigError("config: 'train.optimizer' must be \"sgd\" or \"sgd_momentum\"");
    }
    cfg.momentum = get_num(t, "train.", "momentum", cfg.momentum);
    cfg.lambda_rec = get_num(t, "train.", "lambda_rec", cfg.lambda_rec);
    cfg.m = get_int(t, "train.", "m", cfg.m);
    cfg.pr = get_num(t, "train.", "pr", cfg.pr);
    const std::int64_t seed = get_int(t, "train.", "seed", cfg.seed);
    if (seed < 0) throw ConfigError("config: 'train.seed' must be >= 0");
    cfg.seed = static_cast<unsigned>(seed);
    cfg.grad_clip = get_num(t, "train.", "grad_clip", cfg.grad_clip);
    cfg.lr_decay = get_num(t, "train.", "lr_decay", cfg.lr_decay);
    return cfg;
}

DatasetConfig parse_dataset(const json& d) {
    if (!d.is_object()) throw ConfigError("config: 'dataset' must be an object");
    require_keys(d, "dataset.",
                 {"kind", "path", "seed", "n_train", "n_test", "rank", "classes", "min_margin"});

    DatasetConfig cfg;
    cfg.kind = get_str(d, "dataset.", "kind", cfg.kind);
    cfg.path = get_str(d, "dataset.", "path", cfg.path);
    const std::int64_t seed = get_int(d, "dataset.", "seed", cfg.seed);
    if (seed < 0) throw ConfigError("config: 'dataset.seed' must be >= 0");
    cfg.seed = static_cast<unsigned>(seed);
    cfg.n_train = get_int(d, "dataset.", "n_train", cfg.n_train);
    cfg.n_test = get_int(d, "dataset.", "n_test", cfg.n_test);
    cfg.rank = get_int(d, "dataset.", "rank", cfg.rank);
    cfg.classes = get_int(d, "dataset.", "classes", cfg.classes);
    cfg.min_margin = get_num(d, "dataset.", "min_margin", cfg.min_margin);
    return cfg;
}

}  // namespace

void DatasetConfig::validate() const {
    if (kind != "synthetic" && kind != "cifar10") {
        throw ConfigError("config: 'dataset.kind' must be \"synthetic\" or \"cifar10\", got \"" +
                          kind + "\"");
    }
    if (kind == "cifar10" && path.empty()) {
        throw ConfigError("config: 'dataset.path' is required for cifar10");
    }
    if (n_train < 1 || n_test < 1) {
        throw ConfigError("config: dataset sizes must be >= 1");
    }
    if (rank < 1) throw ConfigError("config: 'dataset.rank' must be >= 1");
    if (classes < 2) throw ConfigError("config: 'dataset.classes' must be >= 2");
    if (min_margin < 0.0) throw ConfigError("config: 'dataset.min_margin' must be >= 0");
}

RunConfig parse_run_config(const std::string& text) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config: not valid JSON");
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    require_keys(root, "", {"out_dir", "arch", "train", "dataset"});

    RunConfig cfg;
    cfg.out_dir = get_str(root, "", "out_dir", cfg.out_dir);

    const json* arch = find(root, "arch");
    if (arch == nullptr) throw ConfigError("config: 'arch' object is required");
    cfg.arch = parse_arch(*arch);
    cfg.arch.validate_and_derive();

    if (const json* t = find(root, "train")) cfg.train = parse_train(*t);
    if (const json* d = find(root, "dataset")) cfg.dataset = parse_dataset(*d);
    validate_run_config(cfg);
    return cfg;
}

void validate_run_config(const RunConfig& cfg) {
    cfg.train.validate();
    cfg.dataset.validate();
    if (cfg.dataset.kind == "cifar10" && cfg.arch.classes != 10) {
        throw ConfigError("config: cifar10 has 10 classes but the arch declares " +
                          std::to_string(cfg.arch.classes));
    }
    if (cfg.dataset.kind == "synthetic" && cfg.dataset.classes != cfg.arch.classes) {
        throw ConfigError("config: dataset declares " + std::to_string(cfg.dataset.classes) +
                          " classes but the arch declares " + std::to_string(cfg.arch.classes));
    }
    const std::int64_t in_c = cfg.arch.in_c, in_h = cfg.arch.in_h, in_w = cfg.arch.in_w;
    if (cfg.dataset.kind == "synthetic" && (in_h != 8 || in_w != 8 || in_c != 1)) {
        throw ConfigError("config: the synthetic dataset emits 8x8x1 inputs; arch input is " +
                          std::to_string(in_h) + "x" + std::to_string(in_w) + "x" +
                          std::to_string(in_c));
    }
    if (cfg.dataset.kind == "cifar10" && (in_h != 32 || in_w != 32 || in_c != 3)) {
        throw ConfigError("config: cifar10 emits 32x32x3 inputs; arch input is " +
                          std::to_string(in_h) + "x" + std::to_string(in_w) + "x" +
                          std::to_string(in_c));
    }
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_file(path));
}

Dataset load_dataset(const DatasetConfig& cfg, bool train_split) {
    cfg.validate();
    if (cfg.kind == "cifar10") {
        return load_cifar10(cfg.path, train_split ? Split::Train : Split::Test);
    }
    // Test samples come from a shifted data seed so the splits are disjoint
    // draws labeled by the same teacher.
    const unsigned data_seed = train_split ? cfg.seed : cfg.seed + 0x5bd1e995u;
    return synth_teacher(cfg.seed, train_split ? cfg.n_train : cfg.n_test, cfg.rank, cfg.classes,
                         cfg.min_margin, data_seed);
}

}  // namespace alf
