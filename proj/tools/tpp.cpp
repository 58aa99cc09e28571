// tpp: command-line front end for the vntpp shared library. All real work
// happens behind the C API; this binary parses flags, merges config files
// with overrides and reports results.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vntpp/vntpp_c.h"

using nlohmann::json;

namespace {

int exit_code_for(vntpp_status s) {
  switch (s) {
    case VNTPP_OK:
      return 0;
    case VNTPP_ERR_INVALID_ARG:
    case VNTPP_ERR_PARSE:
    case VNTPP_ERR_VALIDATION:
    case VNTPP_ERR_IO:
      return 1;
    default:
      return 2;  // numeric / internal failure
  }
}

int fail(vntpp_status s) {
  std::cerr << "error: " << vntpp_last_error() << "\n";
  return exit_code_for(s);
}

void print_and_free(char* text) {
  if (text == nullptr) return;
  std::cout << text << "\n";
  vntpp_string_free(text);
}

// VNTPP_OUT_ROOT reroots relative output directories.
std::string resolve_out(const std::string& out) {
  const char* root = std::getenv("VNTPP_OUT_ROOT");
  if (root == nullptr || out.empty() || out.front() == '/') return out;
  return std::string(root) + "/" + out;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config " << path << "\n";
    std::exit(1);
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    std::cerr << "error: malformed JSON config " << path << "\n";
    std::exit(1);
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal point process toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = hardware)");

  // generate
  auto* gen = app.add_subcommand("generate", "simulate a dataset from a Hawkes spec");
  std::string gen_spec, gen_out;
  long gen_n = 0;
  double gen_horizon = 0.0;
  unsigned long long gen_seed = 1;
  gen->add_option("--spec", gen_spec, "Hawkes spec JSON")->required();
  gen->add_option("--n", gen_n, "number of sequences")->required();
  gen->add_option("--horizon", gen_horizon, "observation horizon (default: spec's)");
  gen->add_option("--seed", gen_seed, "simulation seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model variant");
  std::string tr_config, tr_out, tr_resume;
  std::string tr_dataset, tr_variant;
  int tr_epochs = -1, tr_batch = -1, tr_mc = -1, tr_latent = -1;
  double tr_lr = -1.0;
  long long tr_seed = -1;
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint_last.json to resume from");
  tr->add_option("--dataset", tr_dataset, "override: dataset path");
  tr->add_option("--variant", tr_variant, "override: linear|exponential|hp-ek|hp-gk");
  tr->add_option("--epochs", tr_epochs, "override: training epochs");
  tr->add_option("--batch-size", tr_batch, "override: batch size");
  tr->add_option("--lr", tr_lr, "override: learning rate");
  tr->add_option("--mc-samples", tr_mc, "override: MC samples per interval");
  tr->add_option("--latent-dim", tr_latent, "override: latent dimension J");
  tr->add_option("--seed", tr_seed, "override: training seed");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "metrics over a dataset");
  std::string ev_ckpt, ev_data, ev_truth, ev_out, ev_scheme = "right_riemann";
  int ev_points = 1000;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--dataset", ev_data)->required();
  ev->add_option("--truth-spec", ev_truth, "generating spec for intensity error");
  ev->add_option("--out", ev_out, "optional output directory");
  ev->add_option("--n-points", ev_points, "integration grid points");
  ev->add_option("--scheme", ev_scheme, "right_riemann|trapezoid");

  // predict
  auto* pr = app.add_subcommand("predict", "per-position next-event predictions");
  std::string pr_ckpt, pr_data, pr_out, pr_scheme = "right_riemann";
  int pr_points = 1000;
  pr->add_option("--checkpoint", pr_ckpt)->required();
  pr->add_option("--dataset", pr_data)->required();
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--n-points", pr_points);
  pr->add_option("--scheme", pr_scheme);

  // analyze
  auto* an = app.add_subcommand("analyze", "latent SVD, intensity traces, goodness of fit");
  std::string an_ckpt, an_data, an_mode, an_truth, an_out;
  int an_seq = 0;
  an->add_option("--checkpoint", an_ckpt)->required();
  an->add_option("--dataset", an_data)->required();
  an->add_option("--mode", an_mode, "svd|trace|gof")->required();
  an->add_option("--truth-spec", an_truth);
  an->add_option("--out", an_out)->required();
  an->add_option("--seq-index", an_seq, "sequence for trace mode");

  CLI11_PARSE(app, argc, argv);

  if (threads > 0) vntpp_set_threads(threads);

  char* text = nullptr;
  if (gen->parsed()) {
    const vntpp_status s = vntpp_generate(gen_spec.c_str(), gen_n, gen_horizon, gen_seed,
                                          resolve_out(gen_out).c_str(), &text);
    if (s != VNTPP_OK) return fail(s);
    print_and_free(text);
  } else if (tr->parsed()) {
    json cfg = load_config_file(tr_config);
    if (!tr_dataset.empty()) cfg["dataset"] = tr_dataset;
    if (!tr_variant.empty()) cfg["variant"] = tr_variant;
    if (tr_epochs >= 0) cfg["train"]["epochs"] = tr_epochs;
    if (tr_batch >= 0) cfg["train"]["batch_size"] = tr_batch;
    if (tr_lr >= 0.0) cfg["train"]["learning_rate"] = tr_lr;
    if (tr_mc >= 0) cfg["train"]["mc_samples"] = tr_mc;
    if (tr_latent >= 0) cfg["model"]["J"] = tr_latent;
    if (tr_seed >= 0) cfg["train"]["seed"] = tr_seed;
    const std::string merged = cfg.dump();
    const vntpp_status s = vntpp_train(merged.c_str(), resolve_out(tr_out).c_str(),
                                       tr_resume.empty() ? nullptr : tr_resume.c_str(), &text);
    if (s != VNTPP_OK) return fail(s);
    print_and_free(text);
  } else if (ev->parsed()) {
    const vntpp_status s = vntpp_evaluate(ev_ckpt.c_str(), ev_data.c_str(),
                                          ev_truth.empty() ? nullptr : ev_truth.c_str(),
                                          ev_out.empty() ? nullptr : resolve_out(ev_out).c_str(),
                                          ev_points, ev_scheme.c_str(), &text);
    if (s != VNTPP_OK) return fail(s);
    print_and_free(text);
  } else if (pr->parsed()) {
    const vntpp_status s = vntpp_predict(pr_ckpt.c_str(), pr_data.c_str(),
                                         resolve_out(pr_out).c_str(), pr_points,
                                         pr_scheme.c_str(), &text);
    if (s != VNTPP_OK) return fail(s);
    print_and_free(text);
  } else if (an->parsed()) {
    const vntpp_status s = vntpp_analyze(an_ckpt.c_str(), an_data.c_str(), an_mode.c_str(),
                                         an_truth.empty() ? nullptr : an_truth.c_str(),
                                         resolve_out(an_out).c_str(), an_seq, &text);
    if (s != VNTPP_OK) return fail(s);
    print_and_free(text);
  }
  return 0;
}
