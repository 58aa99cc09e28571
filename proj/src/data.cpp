#include "vntpp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vntpp/common.hpp"
#include "vntpp/rng.hpp"

namespace vntpp {

using nlohmann::json;

void EventSequence::validate(int num_types) const {
  if (events.empty()) raise(ErrorCode::Validation, "sequence must contain at least one event");
  double prev = -1.0;
  for (const Event& e : events) {
    if (!(e.time >= 0.0)) raise(ErrorCode::Validation, "negative or NaN timestamp");
    if (!(e.time > prev)) raise(ErrorCode::Validation, "timestamps must be strictly increasing");
    if (e.type < 0 || e.type >= num_types)
      raise(ErrorCode::Validation,
            "type id " + std::to_string(e.type) + " outside [0, " + std::to_string(num_types) + ")");
    prev = e.time;
  }
  if (events.back().time > horizon)
    raise(ErrorCode::Validation, "timestamp exceeds horizon T");
}

std::size_t Dataset::total_events() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

double Dataset::mean_length() const {
  if (sequences.empty()) return 0.0;
  return static_cast<double>(total_events()) / static_cast<double>(sequences.size());
}

double Dataset::mean_gap() const {
  double total_time = 0.0;
  std::size_t n = 0;
  for (const auto& s : sequences) {
    if (s.events.empty()) continue;
    total_time += s.events.back().time;
    n += s.size();
  }
  return n > 0 ? total_time / static_cast<double>(n) : 1.0;
}

void Dataset::validate() const {
  if (num_types < 1) raise(ErrorCode::Validation, "num_types must be >= 1");
  for (const auto& s : sequences) s.validate(num_types);
}

namespace {

EventSequence parse_line(const json& j, std::size_t line_no, int& max_type) {
  if (!j.is_object() || !j.contains("seq") || !j["seq"].is_array())
    raise(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected object with \"seq\" array");
  EventSequence s;
  for (const auto& je : j["seq"]) {
    if (!je.is_object() || !je.contains("k") || !je.contains("t"))
      raise(ErrorCode::Parse, "line " + std::to_string(line_no) + ": event must have \"k\" and \"t\"");
    Event e;
    e.type = je["k"].get<int>();
    e.time = je["t"].get<double>();
    max_type = std::max(max_type, e.type);
    s.events.push_back(e);
  }
  if (s.events.empty())
    raise(ErrorCode::Parse, "line " + std::to_string(line_no) + ": empty \"seq\"");
  s.horizon = j.contains("T") ? j["T"].get<double>() : s.events.back().time;
  return s;
}

}  // namespace

Dataset parse_dataset_jsonl(const std::string& text, const std::string& name) {
  Dataset d;
  d.name = name;
  int max_type = -1;
  int declared_k = 0;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(ErrorCode::Parse, "line " + std::to_string(line_no) + ": malformed JSON");
    if (j.contains("K")) declared_k = std::max(declared_k, j["K"].get<int>());
    d.sequences.push_back(parse_line(j, line_no, max_type));
  }
  if (d.sequences.empty()) raise(ErrorCode::Parse, "dataset is empty");
  d.num_types = std::max(max_type + 1, std::max(declared_k, 1));
  d.validate();
  return d;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string name = path;
  const auto slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  return parse_dataset_jsonl(buf.str(), name);
}

std::string dataset_to_jsonl(const Dataset& d) {
  std::ostringstream out;
  for (const auto& s : d.sequences) {
    json j;
    j["seq"] = json::array();
    for (const Event& e : s.events) j["seq"].push_back({{"k", e.type}, {"t", e.time}});
    j["T"] = s.horizon;
    j["K"] = d.num_types;
    out << j.dump() << "\n";
  }
  return out.str();
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot open " + path + " for writing");
  out << dataset_to_jsonl(d);
  if (!out) raise(ErrorCode::Io, "write failed: " + path);
}

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& d,
                                            double train_frac,
                                            double val_frac,
                                            double test_frac,
                                            std::uint64_t seed) {
  if (train_frac <= 0.0 || val_frac <= 0.0 || test_frac <= 0.0)
    raise(ErrorCode::InvalidArgument, "split fractions must be positive");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    raise(ErrorCode::InvalidArgument, "split fractions must sum to 1");

  const std::size_t n = d.sequences.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  CounterRng rng(seed, /*stream=*/5);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(idx[i - 1], idx[j]);
  }

  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    raise(ErrorCode::DegenerateSplit, "split would leave an empty part");

  auto take = [&](std::size_t from, std::size_t count, const char* suffix) {
    Dataset part;
    part.num_types = d.num_types;
    part.name = d.name + suffix;
    part.sequences.reserve(count);
    for (std::size_t i = 0; i < count; ++i) part.sequences.push_back(d.sequences[idx[from + i]]);
    return part;
  };
  return {take(0, n_train, ".train"), take(n_train, n_val, ".val"),
          take(n_train + n_val, n - n_train - n_val, ".test")};
}

Batch make_batch(const std::vector<const EventSequence*>& seqs, int num_types) {
  Batch b;
  b.rows = static_cast<int>(seqs.size());
  b.num_types = num_types;
  for (const auto* s : seqs) b.max_len = std::max(b.max_len, static_cast<int>(s->size()));
  const std::size_t total = static_cast<std::size_t>(b.rows) * b.max_len;
  b.types.assign(total, num_types);  // reserved padding id
  b.times.assign(total, 0.0);
  b.mask.assign(total, 0);
  for (int r = 0; r < b.rows; ++r) {
    const auto& ev = seqs[r]->events;
    for (std::size_t l = 0; l < ev.size(); ++l) {
      const std::size_t at = static_cast<std::size_t>(r) * b.max_len + l;
      b.types[at] = ev[l].type;
      b.times[at] = ev[l].time;
      b.mask[at] = 1;
    }
  }
  return b;
}

std::vector<Batch> batchify(const Dataset& d, int batch_size) {
  if (batch_size < 1) raise(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  std::vector<Batch> out;
  std::vector<const EventSequence*> group;
  for (const auto& s : d.sequences) {
    group.push_back(&s);
    if (static_cast<int>(group.size()) == batch_size) {
      out.push_back(make_batch(group, d.num_types));
      group.clear();
    }
  }
  if (!group.empty()) out.push_back(make_batch(group, d.num_types));
  return out;
}

}  // namespace vntpp
