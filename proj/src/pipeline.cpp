#include "vntpp/pipeline.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vntpp/common.hpp"
#include "vntpp/objective.hpp"

namespace vntpp {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- SHA-256 (FIPS 180-4), for the artifact manifest ----

namespace {

struct Sha256 {
  std::array<std::uint32_t, 8> h{0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                                 0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
  std::array<std::uint8_t, 64> block{};
  std::size_t block_len = 0;
  std::uint64_t total_bits = 0;

  static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void compress() {
    static constexpr std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
        0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
        0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
        0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
        0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
        0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<std::uint32_t>(block[4 * i]) << 24) |
             (static_cast<std::uint32_t>(block[4 * i + 1]) << 16) |
             (static_cast<std::uint32_t>(block[4 * i + 2]) << 8) |
             static_cast<std::uint32_t>(block[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }

  void update(const std::uint8_t* data, std::size_t len) {
    total_bits += static_cast<std::uint64_t>(len) * 8;
    while (len > 0) {
      const std::size_t take = std::min(len, block.size() - block_len);
      std::memcpy(block.data() + block_len, data, take);
      block_len += take;
      data += take;
      len -= take;
      if (block_len == block.size()) {
        compress();
        block_len = 0;
      }
    }
  }

  std::string finish() {
    const std::uint64_t bits = total_bits;  // message length before padding
    const std::uint8_t pad = 0x80;
    update(&pad, 1);
    const std::uint8_t zero = 0;
    while (block_len != 56) update(&zero, 1);
    std::uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
    update(len_be, 8);
    std::ostringstream os;
    os << std::hex;
    for (std::uint32_t word : h)
      for (int i = 3; i >= 0; --i) {
        const unsigned byte = (word >> (8 * i)) & 0xffu;
        os << (byte >> 4) << (byte & 0xfu);
      }
    return os.str();
  }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 s;
  s.update(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
  return s.finish();
}

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) raise(ErrorCode::Io, "write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Collects artifacts written by a command and emits manifest.json last.
class OutDir {
public:
  explicit OutDir(const std::string& dir) : dir_(dir) {
    if (dir_.empty()) raise(ErrorCode::InvalidArgument, "output directory must be given");
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  void write(const std::string& name, const std::string& text) {
    write_file(path(name), text);
    json entry;
    entry["path"] = name;
    entry["sha256"] = sha256_hex(text);
    entry["bytes"] = text.size();
    artifacts_.push_back(std::move(entry));
  }

  // Records a file some other writer already produced in this directory.
  void add_existing(const std::string& name) {
    const std::string text = read_file(path(name));
    json entry;
    entry["path"] = name;
    entry["sha256"] = sha256_hex(text);
    entry["bytes"] = text.size();
    artifacts_.push_back(std::move(entry));
  }

  void finish() {
    json m;
    m["artifacts"] = artifacts_;
    write_file(path("manifest.json"), m.dump(2));
  }

private:
  std::string dir_;
  json artifacts_ = json::array();
};

json parse_json_text(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::Parse, std::string("malformed JSON: ") + what);
  return j;
}

Scheme scheme_from_config(const json& j, Scheme fallback) {
  if (!j.contains("predict")) return fallback;
  return scheme_from_name(j["predict"].value("scheme", scheme_name(fallback)));
}

}  // namespace

std::string run_generate(const std::string& spec_path, long n_sequences, double horizon,
                         std::uint64_t seed, const std::string& out_dir) {
  if (n_sequences < 1) raise(ErrorCode::InvalidArgument, "n_sequences must be >= 1");
  HawkesSpec spec = HawkesSpec::load(spec_path);
  double h = horizon > 0.0 ? horizon : spec.default_horizon;
  if (!(h > 0.0))
    raise(ErrorCode::InvalidArgument, "horizon must be positive (flag or spec \"horizon\")");

  Dataset d = simulate_dataset(spec, static_cast<std::size_t>(n_sequences), h, seed);
  OutDir out(out_dir);
  out.write("dataset.jsonl", dataset_to_jsonl(d));

  json resolved{{"command", "generate"}, {"spec", spec_path},      {"n_sequences", n_sequences},
                {"horizon", h},          {"seed", seed},           {"out", out_dir}};
  out.write("resolved_config.json", resolved.dump(2));
  out.finish();

  json summary{{"n_sequences", d.sequences.size()},
               {"K", d.num_types},
               {"mean_length", d.mean_length()},
               {"dataset", out.path("dataset.jsonl")}};
  return summary.dump(2);
}

namespace {

TrainConfig train_config_from(const json& j) {
  TrainConfig cfg;
  if (!j.contains("train")) return cfg;
  const json& t = j["train"];
  cfg.epochs = t.value("epochs", cfg.epochs);
  cfg.batch_size = t.value("batch_size", cfg.batch_size);
  cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
  cfg.mc_samples = t.value("mc_samples", cfg.mc_samples);
  cfg.grad_clip_norm = t.value("grad_clip_norm", cfg.grad_clip_norm);
  cfg.seed = t.value("seed", cfg.seed);
  cfg.check_nonfinite = t.value("check_nonfinite", cfg.check_nonfinite);
  return cfg;
}

json loss_json(const LossBreakdown& b) {
  return {{"recon", b.recon},         {"kl", b.kl},       {"event_ll", b.event_loglik},
          {"comp", b.compensator},    {"total", b.total}};
}

}  // namespace

std::string run_train(const std::string& config_json, const std::string& out_dir,
                      const std::string& resume_path) {
  json cfg = parse_json_text(config_json, "train config");
  const std::string variant = cfg.value("variant", "");
  if (variant.empty()) raise(ErrorCode::InvalidArgument, "config needs a \"variant\"");
  const std::string dataset_path = cfg.value("dataset", "");
  if (dataset_path.empty()) raise(ErrorCode::InvalidArgument, "config needs a \"dataset\" path");

  Dataset all = load_dataset(dataset_path);
  const json split_cfg = cfg.value("split", json::object());
  auto [train_set, val_set, test_set] =
      split(all, split_cfg.value("train", 0.8), split_cfg.value("val", 0.1),
            split_cfg.value("test", 0.1), split_cfg.value("seed", static_cast<std::uint64_t>(7)));
  const double ref_gap = train_set.mean_gap();

  OutDir out(out_dir);
  json resolved = cfg;
  resolved["command"] = "train";
  resolved["resolved_split_sizes"] = {train_set.size(), val_set.size(), test_set.size()};
  resolved["ref_gap"] = ref_gap;

  // The realized split rides along so evaluation sees exactly these files.
  out.write("split_train.jsonl", dataset_to_jsonl(train_set));
  out.write("split_val.jsonl", dataset_to_jsonl(val_set));
  out.write("split_test.jsonl", dataset_to_jsonl(test_set));

  json summary;
  if (variant == "hp-ek" || variant == "hp-gk") {
    FitOptions opts;
    opts.kernel = variant == "hp-ek" ? KernelFamily::Exponential : KernelFamily::Gaussian;
    const json fit_cfg = cfg.value("fit", json::object());
    opts.fit_beta = fit_cfg.value("fit_beta", true);
    opts.fixed_beta = fit_cfg.value("fixed_beta", 1.0);
    opts.max_iterations = fit_cfg.value("max_iterations", 500);
    opts.learning_rate = fit_cfg.value("learning_rate", 0.01);
    opts.mc_samples = fit_cfg.value("mc_samples", 20);
    opts.seed = fit_cfg.value("seed", static_cast<std::uint64_t>(1));
    HawkesFit fit = fit_hawkes(train_set, opts);
    save_hawkes_checkpoint(out.path("checkpoint.json"), fit, ref_gap);
    out.add_existing("checkpoint.json");
    out.write("fitted_spec.json", fit.spec.to_json());
    summary = {{"variant", variant},
               {"train_loglik", fit.train_loglik},
               {"converged", fit.converged},
               {"iterations", fit.iterations},
               {"checkpoint", out.path("checkpoint.json")}};
  } else {
    ModelConfig mc;
    mc.num_types = all.num_types;
    mc.variant = variant_from_name(variant);
    const json model_cfg = cfg.value("model", json::object());
    mc.latent_dim = model_cfg.value("J", 20);
    mc.lognormal_gap = model_cfg.value("lognormal_gap", false);
    mc.seed = model_cfg.value("seed", static_cast<std::uint64_t>(1));
    if (model_cfg.contains("encoder")) {
      const json& e = model_cfg["encoder"];
      mc.encoder.hidden_dim = e.value("D", mc.encoder.hidden_dim);
      mc.encoder.num_heads = e.value("H", mc.encoder.num_heads);
      mc.encoder.head_dim = e.value("d_k", mc.encoder.head_dim);
      mc.encoder.num_layers = e.value("n_layers", mc.encoder.num_layers);
      mc.encoder.dropout = e.value("dropout", mc.encoder.dropout);
      mc.encoder.ffn_dim = e.value("d_ff", mc.encoder.ffn_dim);
    }
    TrainConfig tc = train_config_from(cfg);

    VntppModel model(mc);
    ad::Adam adam(model.params().tensors(), {tc.learning_rate, 0.9, 0.999, 1e-8});
    int start_epoch = 0;
    if (!resume_path.empty()) {
      LoadedCheckpoint prev = load_checkpoint(resume_path);
      if (prev.kind != "vntpp") raise(ErrorCode::Validation, "resume checkpoint is not a vntpp model");
      model.params().restore_values(prev.model->params().snapshot_values());
      if (!prev.adam_state.empty()) adam.restore_state(prev.adam_state);
      start_epoch = prev.epoch;
    }

    std::ostringstream log;
    auto on_epoch = [&](const EpochLog& e) {
      json rec{{"epoch", e.epoch}, {"train", loss_json(e.train)}, {"val", loss_json(e.val)},
               {"wall_ms", e.wall_ms}};
      log << rec.dump() << "\n";
    };
    TrainResult result = train(model, train_set, val_set, tc, adam, start_epoch, on_epoch);

    // Final state first (resume point), then the best-val weights as the
    // primary checkpoint.
    save_vntpp_checkpoint(out.path("checkpoint_last.json"), model, ref_gap, tc.epochs, &adam);
    out.add_existing("checkpoint_last.json");
    if (!result.best_params.empty()) model.params().restore_values(result.best_params);
    save_vntpp_checkpoint(out.path("checkpoint.json"), model, ref_gap, result.best_epoch);
    out.add_existing("checkpoint.json");
    out.write("train_log.jsonl", log.str());
    summary = {{"variant", variant},
               {"best_epoch", result.best_epoch},
               {"best_val_total", result.best_val_total},
               {"epochs", tc.epochs},
               {"skipped_short_sequences", result.skipped_short_sequences},
               {"checkpoint", out.path("checkpoint.json")}};
  }
  out.write("resolved_config.json", resolved.dump(2));
  out.finish();
  return summary.dump(2);
}

std::vector<LabeledPrediction> predict_dataset(const LoadedCheckpoint& ckpt, const Dataset& data,
                                               int n_points, Scheme scheme,
                                               std::vector<std::pair<int, int>>* position_ids) {
  if (ckpt.num_types() != data.num_types)
    raise(ErrorCode::Validation, "checkpoint K=" + std::to_string(ckpt.num_types()) +
                                     " does not match dataset K=" + std::to_string(data.num_types));
  std::vector<LabeledPrediction> out;
  for (std::size_t s = 0; s < data.sequences.size(); ++s) {
    const EventSequence& seq = data.sequences[s];
    if (ckpt.kind == "vntpp") {
      const auto latents = ckpt.model->eval_latents(seq, false);
      for (std::size_t p = 0; p < seq.events.size(); ++p) {
        LabeledPrediction lp;
        lp.true_type = seq.events[p].type;
        lp.true_time = seq.events[p].time;
        lp.prediction = predict_next(neural_intensity(*ckpt.model, latents.mu_z[p], latents.t_last[p]),
                                     data.num_types, latents.t_last[p], ckpt.ref_gap, n_points, scheme);
        out.push_back(std::move(lp));
        if (position_ids) position_ids->emplace_back(static_cast<int>(s), static_cast<int>(p));
      }
    } else {
      std::vector<Event> history;
      for (std::size_t p = 0; p < seq.events.size(); ++p) {
        const double t_last = p == 0 ? 0.0 : seq.events[p - 1].time;
        LabeledPrediction lp;
        lp.true_type = seq.events[p].type;
        lp.true_time = seq.events[p].time;
        lp.prediction = hawkes_predict(ckpt.fit, history, t_last, ckpt.ref_gap, n_points, scheme);
        out.push_back(std::move(lp));
        if (position_ids) position_ids->emplace_back(static_cast<int>(s), static_cast<int>(p));
        history.push_back(seq.events[p]);
      }
    }
  }
  return out;
}

std::string run_evaluate(const std::string& checkpoint_path, const std::string& dataset_path,
                         const std::string& truth_spec_path, const std::string& out_dir,
                         int n_points, Scheme scheme) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset data = load_dataset(dataset_path);
  const auto predictions = predict_dataset(ckpt, data, n_points, scheme);
  MetricsReport rep = compute_metrics(predictions, data.num_types);
  if (!truth_spec_path.empty()) {
    HawkesSpec truth = HawkesSpec::load(truth_spec_path);
    SequenceIntensity learned =
        ckpt.kind == "vntpp"
            ? model_sequence_intensity(*ckpt.model)
            : SequenceIntensity([spec = ckpt.fit.spec](const EventSequence& seq) {
                std::vector<Event> events = seq.events;
                return IntensityFn([spec, events](double t) {
                  std::vector<Event> prefix;
                  for (const Event& e : events)
                    if (e.time <= t) prefix.push_back(e);
                  return true_intensity(spec, prefix, t);
                });
              });
    IntensityError err = intensity_error(learned, truth, data);
    rep.intensity_rmse = err.rmse;
    rep.intensity_mae = err.mae;
  }
  const std::string text = rep.to_json();
  if (!out_dir.empty()) {
    OutDir out(out_dir);
    out.write("metrics.json", text);
    json resolved{{"command", "evaluate"},      {"checkpoint", checkpoint_path},
                  {"dataset", dataset_path},    {"truth_spec", truth_spec_path},
                  {"n_points", n_points},       {"scheme", scheme_name(scheme)}};
    out.write("resolved_config.json", resolved.dump(2));
    out.finish();
  }
  return text;
}

std::string run_predict(const std::string& checkpoint_path, const std::string& dataset_path,
                        const std::string& out_dir, int n_points, Scheme scheme) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset data = load_dataset(dataset_path);
  std::vector<std::pair<int, int>> ids;
  const auto predictions = predict_dataset(ckpt, data, n_points, scheme, &ids);

  std::ostringstream lines;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    json rec{{"seq_id", ids[i].first},
             {"pos", ids[i].second},
             {"t_true", p.true_time},
             {"t_hat", p.prediction.expected_time},
             {"k_true", p.true_type},
             {"k_hat", p.prediction.predicted_type},
             {"type_probs", p.prediction.type_probs},
             {"pdf_mass", p.prediction.pdf_mass}};
    lines << rec.dump() << "\n";
  }
  OutDir out(out_dir);
  out.write("predictions.jsonl", lines.str());
  json resolved{{"command", "predict"},     {"checkpoint", checkpoint_path},
                {"dataset", dataset_path},  {"n_points", n_points},
                {"scheme", scheme_name(scheme)}};
  out.write("resolved_config.json", resolved.dump(2));
  out.finish();
  json summary{{"n_positions", predictions.size()}, {"out", out.path("predictions.jsonl")}};
  return summary.dump(2);
}

std::string run_analyze(const std::string& checkpoint_path, const std::string& dataset_path,
                        const std::string& mode, const std::string& truth_spec_path,
                        const std::string& out_dir, int seq_index) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset data = load_dataset(dataset_path);
  if (ckpt.num_types() != data.num_types)
    raise(ErrorCode::Validation, "checkpoint/dataset K mismatch");
  OutDir out(out_dir);
  json summary{{"mode", mode}};

  if (mode == "svd") {
    if (ckpt.kind != "vntpp")
      raise(ErrorCode::InvalidArgument, "svd analysis needs a vntpp checkpoint");
    SvdReport rep = latent_svd(*ckpt.model, data);
    out.write("svd.json", rep.to_json());
    out.write("projections.csv", rep.projections_csv());
    summary["singular_values"] = rep.singular_values;
  } else if (mode == "trace") {
    if (seq_index < 0 || seq_index >= static_cast<int>(data.sequences.size()))
      raise(ErrorCode::InvalidArgument, "sequence index out of range");
    const EventSequence& seq = data.sequences[static_cast<std::size_t>(seq_index)];
    const int resolution = 500;
    const bool with_truth = !truth_spec_path.empty();
    HawkesSpec truth;
    if (with_truth) truth = HawkesSpec::load(truth_spec_path);

    IntensityFn learned = ckpt.kind == "vntpp"
                              ? model_sequence_intensity(*ckpt.model)(seq)
                              : IntensityFn([&ckpt, &seq](double t) {
                                  std::vector<Event> prefix;
                                  for (const Event& e : seq.events)
                                    if (e.time <= t) prefix.push_back(e);
                                  return true_intensity(ckpt.fit.spec, prefix, t);
                                });
    std::ostringstream csv;
    csv << "t";
    for (int k = 0; k < data.num_types; ++k) csv << ",lambda_hat_" << k;
    if (with_truth)
      for (int k = 0; k < data.num_types; ++k) csv << ",lambda_true_" << k;
    csv << "\n";
    csv.precision(17);
    std::vector<Event> prefix;
    std::size_t next_ev = 0;
    for (int g = 0; g < resolution; ++g) {
      const double t = seq.horizon * static_cast<double>(g) / (resolution - 1);
      csv << t;
      const auto hat = learned(t);
      for (double v : hat) csv << "," << v;
      if (with_truth) {
        while (next_ev < seq.events.size() && seq.events[next_ev].time <= t)
          prefix.push_back(seq.events[next_ev++]);
        const auto tru = true_intensity(truth, prefix, t);
        for (double v : tru) csv << "," << v;
      }
      csv << "\n";
    }
    out.write("trace.csv", csv.str());
    summary["sequence"] = seq_index;
  } else if (mode == "gof") {
    KsResult ks = ckpt.kind == "vntpp" ? rescaling_gof(*ckpt.model, data)
                                       : rescaling_gof(ckpt.fit.spec, data);
    json rep{{"ks", ks.statistic}, {"p", ks.p_value}, {"n", ks.n}};
    out.write("gof.json", rep.dump(2));
    summary["ks"] = ks.statistic;
    summary["p"] = ks.p_value;
  } else {
    raise(ErrorCode::InvalidArgument, "unknown analyze mode: " + mode);
  }

  json resolved{{"command", "analyze"},    {"checkpoint", checkpoint_path},
                {"dataset", dataset_path}, {"mode", mode},
                {"truth_spec", truth_spec_path}, {"seq_index", seq_index}};
  out.write("resolved_config.json", resolved.dump(2));
  out.finish();
  return summary.dump(2);
}

}  // namespace vntpp
