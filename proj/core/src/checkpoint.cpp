#include "aclql/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aclql/format.hpp"
#include "json.hpp"

namespace aclql {

using nlohmann::json;

void Checkpoint::add_network(const std::string& prefix, const Mlp& net) {
  for (const auto& p : net.params()) nets[prefix + "/" + p.name] = Tensor{p.shape, p.values};
}

void Checkpoint::add_scalar(const std::string& name, double value) { nets[name] = Tensor{{1}, {value}}; }

bool Checkpoint::has_network(const std::string& prefix) const { return nets.count(prefix + "/l0.weight") > 0; }

Mlp Checkpoint::network(const std::string& prefix, HeadKind head, double sigma) const {
  std::vector<const Tensor*> weights;
  std::vector<const Tensor*> biases;
  for (std::size_t l = 0;; ++l) {
    auto w = nets.find(prefix + "/l" + std::to_string(l) + ".weight");
    auto b = nets.find(prefix + "/l" + std::to_string(l) + ".bias");
    if (w == nets.end() || b == nets.end()) break;
    if (w->second.shape.size() != 2 || b->second.shape.size() != 1 || b->second.shape[0] != w->second.shape[0]) {
      throw std::runtime_error("checkpoint: malformed layer " + std::to_string(l) + " of '" + prefix + "'");
    }
    weights.push_back(&w->second);
    biases.push_back(&b->second);
  }
  if (weights.empty()) throw std::runtime_error("checkpoint has no network '" + prefix + "'");

  ApproximatorSpec spec;
  spec.input_dim = weights.front()->shape[1];
  spec.output_dim = weights.back()->shape[0];
  spec.hidden.clear();
  for (std::size_t l = 0; l + 1 < weights.size(); ++l) spec.hidden.push_back(static_cast<int>(weights[l]->shape[0]));
  spec.head = head;
  spec.sigma = sigma;

  Mlp net(spec);
  auto& params = net.params();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (params[2 * l].shape != weights[l]->shape) {
      throw std::runtime_error("checkpoint: layer shapes of '" + prefix + "' are not chained");
    }
    params[2 * l].values = weights[l]->values;
    params[2 * l + 1].values = biases[l]->values;
  }
  return net;
}

double Checkpoint::scalar(const std::string& name) const {
  auto it = nets.find(name);
  if (it == nets.end() || it->second.values.size() != 1) throw std::runtime_error("checkpoint has no scalar '" + name + "'");
  return it->second.values[0];
}

std::string Checkpoint::to_json() const {
  std::string out = "{\"version\":1,\"nets\":{";
  bool first = true;
  for (const auto& [name, t] : nets) {
    if (!first) out += ',';
    first = false;
    out += json(name).dump() + ":{\"shape\":[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(t.shape[i]);
    }
    out += "],\"values\":" + format_array(t.values) + "}";
  }
  out += "},\"config_hash\":" + json(config_hash).dump() + ",\"step\":" + std::to_string(step) + "}\n";
  return out;
}

Checkpoint Checkpoint::from_json(const std::string& text) {
  Checkpoint c;
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
    c.config_hash = j.at("config_hash").get<std::string>();
    c.step = j.at("step").get<std::int64_t>();
    for (const auto& [name, t] : j.at("nets").items()) {
      Tensor tensor;
      tensor.shape = t.at("shape").get<std::vector<std::size_t>>();
      tensor.values = t.at("values").get<std::vector<double>>();
      std::size_t n = 1;
      for (auto s : tensor.shape) n *= s;
      if (n != tensor.values.size()) throw std::runtime_error("checkpoint tensor '" + name + "' has inconsistent size");
      c.nets.emplace(name, std::move(tensor));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << to_json();
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace aclql
