#include "vntpp/vntpp_c.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "vntpp/checkpoint.hpp"
#include "vntpp/common.hpp"
#include "vntpp/data.hpp"
#include "vntpp/hawkes.hpp"
#include "vntpp/pipeline.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using nlohmann::json;

struct vntpp_dataset {
  vntpp::Dataset d;
};
struct vntpp_hawkes_spec {
  vntpp::HawkesSpec spec;
};
struct vntpp_model {
  vntpp::LoadedCheckpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

vntpp_status status_of(const vntpp::Error& e) {
  using vntpp::ErrorCode;
  switch (e.code()) {
    case ErrorCode::Parse:
      return VNTPP_ERR_PARSE;
    case ErrorCode::Validation:
    case ErrorCode::DegenerateSplit:
    case ErrorCode::UnsupportedKernel:
    case ErrorCode::UnsupportedDataset:
    case ErrorCode::TimeOrder:
    case ErrorCode::IndexOutOfRange:
      return VNTPP_ERR_VALIDATION;
    case ErrorCode::Io:
      return VNTPP_ERR_IO;
    case ErrorCode::NonFinite:
    case ErrorCode::Shape:
    case ErrorCode::NotScalar:
    case ErrorCode::Explosion:
      return VNTPP_ERR_NUMERIC;
    case ErrorCode::InvalidArgument:
      return VNTPP_ERR_INVALID_ARG;
  }
  return VNTPP_ERR_INTERNAL;
}

template <typename Fn>
vntpp_status guarded(Fn&& fn) {
  try {
    fn();
    return VNTPP_OK;
  } catch (const vntpp::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VNTPP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return VNTPP_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

vntpp_status require(bool ok, const char* msg) {
  if (ok) return VNTPP_OK;
  g_last_error = msg;
  return VNTPP_ERR_INVALID_ARG;
}

}  // namespace

extern "C" {

const char* vntpp_version(void) { return "0.1.0"; }
int vntpp_c_api_version(void) { return VNTPP_C_API_VERSION; }
const char* vntpp_last_error(void) { return g_last_error.c_str(); }
void vntpp_string_free(char* s) { delete[] s; }

vntpp_status vntpp_set_threads(int n) {
  return guarded([&] {
    vntpp::set_max_threads(n);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
  });
}

vntpp_status vntpp_hawkes_spec_load(const char* path, vntpp_hawkes_spec** out) {
  if (auto s = require(path && out, "null argument")) return s;
  return guarded([&] { *out = new vntpp_hawkes_spec{vntpp::HawkesSpec::load(path)}; });
}

vntpp_status vntpp_hawkes_spec_parse(const char* json_text, vntpp_hawkes_spec** out) {
  if (auto s = require(json_text && out, "null argument")) return s;
  return guarded([&] { *out = new vntpp_hawkes_spec{vntpp::HawkesSpec::from_json(json_text)}; });
}

vntpp_status vntpp_hawkes_spec_to_json(const vntpp_hawkes_spec* spec, char** json_out) {
  if (auto s = require(spec && json_out, "null argument")) return s;
  return guarded([&] { *json_out = dup_string(spec->spec.to_json()); });
}

void vntpp_hawkes_spec_free(vntpp_hawkes_spec* spec) { delete spec; }

vntpp_status vntpp_simulate_dataset(const vntpp_hawkes_spec* spec, long n_sequences,
                                    double horizon, unsigned long long seed,
                                    vntpp_dataset** out) {
  if (auto s = require(spec && out, "null argument")) return s;
  return guarded([&] {
    *out = new vntpp_dataset{vntpp::simulate_dataset(
        spec->spec, static_cast<std::size_t>(n_sequences), horizon, seed)};
  });
}

vntpp_status vntpp_dataset_load(const char* path, vntpp_dataset** out) {
  if (auto s = require(path && out, "null argument")) return s;
  return guarded([&] { *out = new vntpp_dataset{vntpp::load_dataset(path)}; });
}

vntpp_status vntpp_dataset_save(const vntpp_dataset* d, const char* path) {
  if (auto s = require(d && path, "null argument")) return s;
  return guarded([&] { vntpp::save_dataset(d->d, path); });
}

vntpp_status vntpp_dataset_info(const vntpp_dataset* d, long* n_sequences, int* num_types,
                                double* mean_length) {
  if (auto s = require(d != nullptr, "null dataset")) return s;
  return guarded([&] {
    if (n_sequences) *n_sequences = static_cast<long>(d->d.size());
    if (num_types) *num_types = d->d.num_types;
    if (mean_length) *mean_length = d->d.mean_length();
  });
}

vntpp_status vntpp_dataset_split(const vntpp_dataset* d, double train_frac, double val_frac,
                                 double test_frac, unsigned long long seed,
                                 vntpp_dataset** train_out, vntpp_dataset** val_out,
                                 vntpp_dataset** test_out) {
  if (auto s = require(d && train_out && val_out && test_out, "null argument")) return s;
  return guarded([&] {
    auto [tr, va, te] = vntpp::split(d->d, train_frac, val_frac, test_frac, seed);
    *train_out = new vntpp_dataset{std::move(tr)};
    *val_out = new vntpp_dataset{std::move(va)};
    *test_out = new vntpp_dataset{std::move(te)};
  });
}

void vntpp_dataset_free(vntpp_dataset* d) { delete d; }

vntpp_status vntpp_generate(const char* spec_path, long n_sequences, double horizon,
                            unsigned long long seed, const char* out_dir, char** summary_json) {
  if (auto s = require(spec_path && out_dir, "null argument")) return s;
  return guarded([&] {
    std::string summary = vntpp::run_generate(spec_path, n_sequences, horizon, seed, out_dir);
    if (summary_json) *summary_json = dup_string(summary);
  });
}

vntpp_status vntpp_train(const char* config_json, const char* out_dir, const char* resume_path,
                         char** summary_json) {
  if (auto s = require(config_json && out_dir, "null argument")) return s;
  return guarded([&] {
    std::string summary =
        vntpp::run_train(config_json, out_dir, resume_path ? resume_path : "");
    if (summary_json) *summary_json = dup_string(summary);
  });
}

vntpp_status vntpp_evaluate(const char* checkpoint_path, const char* dataset_path,
                            const char* truth_spec_path, const char* out_dir, int n_points,
                            const char* scheme, char** metrics_json) {
  if (auto s = require(checkpoint_path && dataset_path, "null argument")) return s;
  return guarded([&] {
    std::string text = vntpp::run_evaluate(
        checkpoint_path, dataset_path, truth_spec_path ? truth_spec_path : "",
        out_dir ? out_dir : "", n_points > 0 ? n_points : 1000,
        vntpp::scheme_from_name(scheme ? scheme : "right_riemann"));
    if (metrics_json) *metrics_json = dup_string(text);
  });
}

vntpp_status vntpp_predict(const char* checkpoint_path, const char* dataset_path,
                           const char* out_dir, int n_points, const char* scheme,
                           char** summary_json) {
  if (auto s = require(checkpoint_path && dataset_path && out_dir, "null argument")) return s;
  return guarded([&] {
    std::string text = vntpp::run_predict(checkpoint_path, dataset_path, out_dir,
                                          n_points > 0 ? n_points : 1000,
                                          vntpp::scheme_from_name(scheme ? scheme : "right_riemann"));
    if (summary_json) *summary_json = dup_string(text);
  });
}

vntpp_status vntpp_analyze(const char* checkpoint_path, const char* dataset_path,
                           const char* mode, const char* truth_spec_path, const char* out_dir,
                           int seq_index, char** summary_json) {
  if (auto s = require(checkpoint_path && dataset_path && mode && out_dir, "null argument"))
    return s;
  return guarded([&] {
    std::string text = vntpp::run_analyze(checkpoint_path, dataset_path, mode,
                                          truth_spec_path ? truth_spec_path : "", out_dir,
                                          seq_index);
    if (summary_json) *summary_json = dup_string(text);
  });
}

vntpp_status vntpp_model_load(const char* checkpoint_path, vntpp_model** out) {
  if (auto s = require(checkpoint_path && out, "null argument")) return s;
  return guarded([&] {
    auto* m = new vntpp_model{vntpp::load_checkpoint(checkpoint_path)};
    *out = m;
  });
}

void vntpp_model_free(vntpp_model* m) { delete m; }

vntpp_status vntpp_model_kind(const vntpp_model* m, char** kind_out) {
  if (auto s = require(m && kind_out, "null argument")) return s;
  return guarded([&] { *kind_out = dup_string(m->ckpt.kind); });
}

vntpp_status vntpp_model_predict_next(const vntpp_model* m, const int* types,
                                      const double* times, long n, int n_points,
                                      const char* scheme, char** prediction_json) {
  if (auto s = require(m && prediction_json && (n == 0 || (types && times)), "null argument"))
    return s;
  return guarded([&] {
    vntpp::EventSequence seq;
    for (long i = 0; i < n; ++i) seq.events.push_back({types[i], times[i]});
    seq.horizon = n > 0 ? times[n - 1] : 0.0;
    const double t_last = n > 0 ? times[n - 1] : 0.0;
    const vntpp::Scheme sch = vntpp::scheme_from_name(scheme ? scheme : "right_riemann");
    const int np = n_points > 0 ? n_points : 1000;
    vntpp::PredictionResult res;
    if (m->ckpt.kind == "vntpp") {
      const auto latents = m->ckpt.model->eval_latents(seq, true);
      res = vntpp::predict_next(
          vntpp::neural_intensity(*m->ckpt.model, latents.mu_z.back(), t_last),
          m->ckpt.model->config().num_types, t_last, m->ckpt.ref_gap, np, sch);
    } else {
      res = vntpp::hawkes_predict(m->ckpt.fit, seq.events, t_last, m->ckpt.ref_gap, np, sch);
    }
    json j{{"expected_time", res.expected_time},
           {"type_probs", res.type_probs},
           {"predicted_type", res.predicted_type},
           {"pdf_mass", res.pdf_mass},
           {"low_mass", res.low_mass}};
    *prediction_json = dup_string(j.dump());
  });
}

}  // extern "C"
