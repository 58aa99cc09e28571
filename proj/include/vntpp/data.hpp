#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

namespace vntpp {

struct Event {
  int type = 0;
  double time = 0.0;
};

// Ordered marked events over an observation interval [0, horizon].
struct EventSequence {
  std::vector<Event> events;
  double horizon = 0.0;

  std::size_t size() const { return events.size(); }
  // Throws Validation on broken invariants (strictly increasing times,
  // times within [0, horizon], type ids in [0, num_types), length >= 1).
  void validate(int num_types) const;
};

struct Dataset {
  std::vector<EventSequence> sequences;
  int num_types = 1;
  std::string name;

  std::size_t size() const { return sequences.size(); }
  std::size_t total_events() const;
  double mean_length() const;
  // Mean inter-event gap over all sequences (including the gap from 0 to
  // the first event), used as the prediction-grid reference scale.
  double mean_gap() const;
  void validate() const;
};

// Padded minibatch. Masked-out positions carry the reserved padding type id
// (= num_types) and time 0; the masked region is a contiguous suffix per row.
struct Batch {
  int rows = 0;
  int max_len = 0;
  int num_types = 1;
  std::vector<int> types;      // rows x max_len
  std::vector<double> times;   // rows x max_len
  std::vector<uint8_t> mask;   // rows x max_len, 1 = real event

  int type_at(int b, int l) const { return types[static_cast<std::size_t>(b) * max_len + l]; }
  double time_at(int b, int l) const { return times[static_cast<std::size_t>(b) * max_len + l]; }
  bool is_real(int b, int l) const { return mask[static_cast<std::size_t>(b) * max_len + l] != 0; }
};

// JSONL, one sequence per line: {"seq":[{"k":int,"t":float},...],"T":float}.
// "T" is optional and defaults to the last timestamp. Throws Parse with the
// offending line number, or Validation on invariant violations.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& d, const std::string& path);

Dataset parse_dataset_jsonl(const std::string& text, const std::string& name);
std::string dataset_to_jsonl(const Dataset& d);

// Deterministic shuffle by seed, then partition by rounded fractions.
// Throws DegenerateSplit if any part would be empty.
std::tuple<Dataset, Dataset, Dataset> split(const Dataset& d,
                                            double train_frac,
                                            double val_frac,
                                            double test_frac,
                                            std::uint64_t seed);

std::vector<Batch> batchify(const Dataset& d, int batch_size);
Batch make_batch(const std::vector<const EventSequence*>& seqs, int num_types);

}  // namespace vntpp
