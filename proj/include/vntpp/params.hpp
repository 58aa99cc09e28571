#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vntpp/rng.hpp"
#include "vntpp/tensor.hpp"

namespace vntpp {

// Ordered name -> tensor registry; ordering fixes the optimizer-state and
// checkpoint layout.
class ParamStore {
public:
  ad::Tensor add(const std::string& name, ad::Tensor t);
  ad::Tensor* find(const std::string& name);
  const ad::Tensor* find(const std::string& name) const;

  const std::vector<std::pair<std::string, ad::Tensor>>& items() const { return items_; }
  std::vector<ad::Tensor> tensors() const;
  std::size_t total_size() const;
  void zero_grads();

  // Deep value copy keyed by name, for best-checkpoint snapshots.
  std::vector<std::vector<double>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<double>>& snap);

private:
  std::vector<std::pair<std::string, ad::Tensor>> items_;
};

ad::Tensor xavier_uniform(std::vector<int> shape, CounterRng& rng);
ad::Tensor normal_init(std::vector<int> shape, double stddev, CounterRng& rng);

}  // namespace vntpp
