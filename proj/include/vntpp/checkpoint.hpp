#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vntpp/baselines.hpp"
#include "vntpp/model.hpp"
#include "vntpp/tensor.hpp"

namespace vntpp {

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Versioned JSON checkpoint: parameter name -> shape + flat data, plus the
// model config, the training-set reference gap and (optionally) optimizer
// state for exact resume.
void save_vntpp_checkpoint(const std::string& path, const VntppModel& model, double ref_gap,
                           int epoch = 0, const ad::Adam* adam = nullptr);
void save_hawkes_checkpoint(const std::string& path, const HawkesFit& fit, double ref_gap);

struct LoadedCheckpoint {
  std::string kind;  // "vntpp" | "hawkes"
  std::unique_ptr<VntppModel> model;
  HawkesFit fit;
  double ref_gap = 1.0;
  int epoch = 0;
  std::vector<double> adam_state;  // empty when the checkpoint carries none
  int num_types() const;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace vntpp
