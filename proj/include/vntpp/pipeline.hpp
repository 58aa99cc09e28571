#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vntpp/checkpoint.hpp"
#include "vntpp/data.hpp"
#include "vntpp/eval.hpp"
#include "vntpp/predict.hpp"

namespace vntpp {

// Operator-level commands behind the C API and the CLI. Every command
// writes its resolved config and a manifest (artifact -> sha256) into the
// output directory and returns a JSON summary string.

std::string run_generate(const std::string& spec_path, long n_sequences, double horizon,
                         std::uint64_t seed, const std::string& out_dir);

// config: JSON text (see README); resume_path: checkpoint_last.json of an
// interrupted run, or empty.
std::string run_train(const std::string& config_json, const std::string& out_dir,
                      const std::string& resume_path = "");

std::string run_evaluate(const std::string& checkpoint_path, const std::string& dataset_path,
                         const std::string& truth_spec_path, const std::string& out_dir,
                         int n_points = 1000, Scheme scheme = Scheme::RightRiemann);

std::string run_predict(const std::string& checkpoint_path, const std::string& dataset_path,
                        const std::string& out_dir, int n_points = 1000,
                        Scheme scheme = Scheme::RightRiemann);

// mode: "svd" | "trace" | "gof"; truth_spec_path optional for trace.
std::string run_analyze(const std::string& checkpoint_path, const std::string& dataset_path,
                        const std::string& mode, const std::string& truth_spec_path,
                        const std::string& out_dir, int seq_index = 0);

// Shared by evaluate/predict: one prediction per event position.
std::vector<LabeledPrediction> predict_dataset(const LoadedCheckpoint& ckpt, const Dataset& data,
                                               int n_points, Scheme scheme,
                                               std::vector<std::pair<int, int>>* position_ids = nullptr);

std::string sha256_hex(const std::string& bytes);

}  // namespace vntpp
