#include "vntpp/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vntpp/common.hpp"

namespace vntpp {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "vntpp-checkpoint-v1";

json encoder_config_json(const EncoderConfig& e) {
  return {{"D", e.hidden_dim},   {"H", e.num_heads}, {"d_k", e.head_dim},
          {"n_layers", e.num_layers}, {"dropout", e.dropout}, {"d_ff", e.ffn_dim}};
}

EncoderConfig encoder_config_from(const json& j) {
  EncoderConfig e;
  e.hidden_dim = j.value("D", e.hidden_dim);
  e.num_heads = j.value("H", e.num_heads);
  e.head_dim = j.value("d_k", e.head_dim);
  e.num_layers = j.value("n_layers", e.num_layers);
  e.dropout = j.value("dropout", e.dropout);
  e.ffn_dim = j.value("d_ff", e.ffn_dim);
  return e;
}

json model_config_json(const ModelConfig& cfg) {
  return {{"K", cfg.num_types},
          {"variant", variant_name(cfg.variant)},
          {"J", cfg.latent_dim},
          {"encoder", encoder_config_json(cfg.encoder)},
          {"lognormal_gap", cfg.lognormal_gap},
          {"seed", cfg.seed}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig cfg;
  cfg.num_types = j.at("K").get<int>();
  cfg.variant = variant_from_name(j.value("variant", "linear"));
  cfg.latent_dim = j.value("J", cfg.latent_dim);
  if (j.contains("encoder")) cfg.encoder = encoder_config_from(j["encoder"]);
  cfg.lognormal_gap = j.value("lognormal_gap", false);
  cfg.seed = j.value("seed", static_cast<std::uint64_t>(1));
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) raise(ErrorCode::Io, "write failed: " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::Parse, "malformed JSON in " + path);
  return j;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return model_config_json(cfg).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::Parse, "malformed model config JSON");
  return model_config_from(j);
}

void save_vntpp_checkpoint(const std::string& path, const VntppModel& model, double ref_gap,
                           int epoch, const ad::Adam* adam) {
  json j;
  j["format"] = kFormatTag;
  j["kind"] = "vntpp";
  j["model"] = model_config_json(model.config());
  j["ref_gap"] = ref_gap;
  j["epoch"] = epoch;
  json params = json::object();
  for (const auto& [name, tensor] : model.params().items())
    params[name] = {{"shape", tensor.shape()}, {"data", tensor.values()}};
  j["params"] = std::move(params);
  if (adam != nullptr) {
    j["optimizer"] = {{"state", adam->serialize_state()},
                      {"lr", adam->config().lr},
                      {"beta1", adam->config().beta1},
                      {"beta2", adam->config().beta2},
                      {"eps", adam->config().eps}};
  }
  write_file(path, j.dump());
}

void save_hawkes_checkpoint(const std::string& path, const HawkesFit& fit, double ref_gap) {
  json j;
  j["format"] = kFormatTag;
  j["kind"] = "hawkes";
  j["ref_gap"] = ref_gap;
  j["spec"] = json::parse(fit.spec.to_json());
  j["fit_meta"] = {{"train_loglik", fit.train_loglik},
                   {"converged", fit.converged},
                   {"iterations", fit.iterations}};
  write_file(path, j.dump());
}

int LoadedCheckpoint::num_types() const {
  return kind == "vntpp" ? model->config().num_types : fit.spec.num_types;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  json j = read_json_file(path);
  if (j.value("format", "") != kFormatTag)
    raise(ErrorCode::Validation, "unrecognized checkpoint format in " + path);
  LoadedCheckpoint out;
  out.kind = j.value("kind", "");
  out.ref_gap = j.value("ref_gap", 1.0);
  out.epoch = j.value("epoch", 0);
  if (out.kind == "vntpp") {
    out.model = std::make_unique<VntppModel>(model_config_from(j.at("model")));
    const auto& params = j.at("params");
    for (const auto& [name, tensor] : out.model->params().items()) {
      if (!params.contains(name))
        raise(ErrorCode::Validation, "checkpoint missing parameter " + name);
      auto data = params.at(name).at("data").get<std::vector<double>>();
      if (data.size() != tensor.numel())
        raise(ErrorCode::Validation, "checkpoint size mismatch for " + name);
      ad::Tensor handle = tensor;  // shared storage
      handle.values() = std::move(data);
    }
    if (j.contains("optimizer"))
      out.adam_state = j["optimizer"].at("state").get<std::vector<double>>();
  } else if (out.kind == "hawkes") {
    out.fit.spec = HawkesSpec::from_json(j.at("spec").dump());
    const auto& meta = j.at("fit_meta");
    out.fit.train_loglik = meta.value("train_loglik", 0.0);
    out.fit.converged = meta.value("converged", false);
    out.fit.iterations = meta.value("iterations", 0);
  } else {
    raise(ErrorCode::Validation, "unknown checkpoint kind: " + out.kind);
  }
  return out;
}

}  // namespace vntpp
