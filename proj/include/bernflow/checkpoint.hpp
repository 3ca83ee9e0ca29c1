#pragma once

#include <memory>
#include <span>
#include <string>

#include "bernflow/data.hpp"
#include "bernflow/flow.hpp"

namespace bernflow {

inline constexpr int kCheckpointVersion = 1;

// A restored model plus the scaler it was trained under. Exactly one of
// dl / ltm is set, per `kind`.
struct Checkpoint {
  std::string kind;  // "dl_mlt" or "ltm"
  Scaler scaler;
  std::unique_ptr<TransformationModel> dl;
  std::unique_ptr<LtmModel> ltm;

  const BernsteinBasis& basis() const { return dl ? dl->basis() : ltm->basis(); }
  std::size_t input_dim() const { return dl ? dl->input_dim() : ltm->input_dim(); }
  TransformParams params_for(std::span<const double> x_scaled) const {
    return dl ? dl->params_for(x_scaled) : ltm->params_for(x_scaled);
  }
};

void save_checkpoint(const std::string& path, const TransformationModel& model,
                     const Scaler& scaler);
void save_checkpoint(const std::string& path, const LtmModel& model,
                     const Scaler& scaler);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bernflow
