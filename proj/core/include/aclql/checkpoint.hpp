#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "aclql/approximator.hpp"

namespace aclql {

/// Serialized parameters: {"version":1,"nets":{name:{"shape":[...],"values":[...]}},
/// "config_hash":...,"step":...}. A network with prefix "actor" contributes
/// entries "actor/l0.weight", "actor/l0.bias", ...
struct Checkpoint {
  struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
  };

  std::map<std::string, Tensor> nets;
  std::string config_hash;
  std::int64_t step = 0;

  void add_network(const std::string& prefix, const Mlp& net);
  void add_scalar(const std::string& name, double value);

  bool has_network(const std::string& prefix) const;
  /// Rebuilds the network from stored shapes; `head` and `sigma` are not
  /// recoverable from shapes and must be supplied.
  Mlp network(const std::string& prefix, HeadKind head, double sigma = 0.0) const;
  double scalar(const std::string& name) const;

  std::string to_json() const;
  static Checkpoint from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace aclql
