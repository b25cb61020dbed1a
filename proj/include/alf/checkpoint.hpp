#pragma once

#include <string>

#include "alf/model.hpp"

namespace alf {

// Training-state checkpoint (masks and autoencoder weights included), the
// hand-off between `train` and `compress`/`export`. Distinct from the ALF1
// inference container.
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace alf
