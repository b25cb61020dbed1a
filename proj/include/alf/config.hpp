#pragma once

#include <cstdint>
#include <string>

#include "alf/dataset.hpp"
#include "alf/model.hpp"
#include "alf/trainer.hpp"

namespace alf {

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" or "cifar10"
    std::string path;                // cifar10 file or directory
    unsigned seed = 1;
    std::int64_t n_train = 4096;
    std::int64_t n_test = 1024;
    std::int64_t rank = 4;      // teacher filter-bank rank
    std::int64_t classes = 4;   // synthetic only; cifar10 is always 10
    double min_margin = 0.0;    // teacher score margin filter

    void validate() const;
};

struct RunConfig {
    std::string out_dir = "out";
    ArchSpec arch;
    TrainingConfig train;
    DatasetConfig dataset;
};

// Strict JSON: unknown keys and wrong value types are ConfigErrors naming the
// offending path. The arch is derived (channel chain, geometry) before this
// returns, so a bad config never reaches tensor code.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Cross-field checks shared by the parser and by flag overrides: training and
// dataset ranges plus dataset/arch agreement on classes and input shape.
void validate_run_config(const RunConfig& cfg);

Dataset load_dataset(const DatasetConfig& cfg, bool train_split);

}  // namespace alf
