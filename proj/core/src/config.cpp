#include "aclql/config.hpp"

#include <stdexcept>

#include "aclql/format.hpp"
#include "json.hpp"

namespace aclql {

using nlohmann::json;
using nlohmann::ordered_json;

std::string QualityMode::to_string() const {
  if (kind == QualityModeKind::kLambdaMix) return "lambda-mix";
  return "nstep-sarsa(" + std::to_string(nstep) + ")";
}

QualityMode QualityMode::parse(const std::string& text) {
  if (text == "lambda-mix") return {};
  const std::string prefix = "nstep-sarsa(";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size() + 1 && text.back() == ')') {
    const std::string digits = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(digits, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == digits.size() && n >= 1) return {QualityModeKind::kNStepSarsa, n};
  }
  throw std::invalid_argument("unknown quality mode '" + text + "' (expected lambda-mix or nstep-sarsa(k))");
}

std::string to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::kAclQl: return "aclql";
    case Algorithm::kCql: return "cql";
    case Algorithm::kUnconstrained: return "unconstrained";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& text) {
  if (text == "aclql") return Algorithm::kAclQl;
  if (text == "cql") return Algorithm::kCql;
  if (text == "unconstrained") return Algorithm::kUnconstrained;
  throw std::invalid_argument("unknown algorithm '" + text + "' (expected aclql, cql or unconstrained)");
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.batch_size = 128;
  c.lr_actor = 1e-4;
  c.lr_weight = 1e-3;
  c.bc_steps = 5000;
  c.train_steps = 20000;
  c.n_ood_samples = 4;
  c.hidden = {64, 64};
  // A wider behavior density keeps the actor's log-density at logged actions
  // above the behavior estimate, so the two hinges stay jointly satisfiable.
  c.bc_sigma = 1.0;
  return c;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* rule) {
    if (!ok) throw std::invalid_argument(std::string("config field '") + field + "' " + rule);
  };
  require(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1]");
  require(lambda_quality >= 0.0 && lambda_quality <= 1.0, "lambda_quality", "must lie in [0, 1]");
  require(alpha_cql_anchor > 0.0, "alpha_cql_anchor", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(lr_critic > 0.0, "lr_critic", "must be positive");
  require(lr_actor > 0.0, "lr_actor", "must be positive");
  require(lr_weight > 0.0, "lr_weight", "must be positive");
  require(lr_temperature > 0.0, "lr_temperature", "must be positive");
  require(lr_bc > 0.0, "lr_bc", "must be positive");
  require(polyak_rate > 0.0 && polyak_rate <= 1.0, "polyak_rate", "must lie in (0, 1]");
  require(bc_steps >= 0, "bc_steps", "must be non-negative");
  require(train_steps >= 0, "train_steps", "must be non-negative");
  require(eval_every > 0, "eval_every", "must be positive");
  require(eval_episodes > 0, "eval_episodes", "must be positive");
  require(n_ood_samples > 0, "n_ood_samples", "must be positive");
  require(bc_sigma > 0.0, "bc_sigma", "must be positive");
  require(initial_temperature > 0.0, "initial_temperature", "must be positive");
  require(!hidden.empty(), "hidden", "must list at least one layer");
  for (int h : hidden) require(h > 0, "hidden", "widths must be positive");
}

namespace {

ordered_json config_object(const RunConfig& c) {
  ordered_json j;
  j["gamma"] = c.gamma;
  j["lambda_quality"] = c.lambda_quality;
  j["alpha_cql_anchor"] = c.alpha_cql_anchor;
  j["batch_size"] = c.batch_size;
  j["lr_critic"] = c.lr_critic;
  j["lr_actor"] = c.lr_actor;
  j["lr_weight"] = c.lr_weight;
  j["lr_temperature"] = c.lr_temperature;
  j["lr_bc"] = c.lr_bc;
  j["polyak_rate"] = c.polyak_rate;
  j["bc_steps"] = c.bc_steps;
  j["train_steps"] = c.train_steps;
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["n_ood_samples"] = c.n_ood_samples;
  j["bc_sigma"] = c.bc_sigma;
  j["initial_temperature"] = c.initial_temperature;
  j["seed"] = c.seed;
  j["quality_mode"] = c.quality_mode.to_string();
  j["hidden"] = c.hidden;
  j["algorithm"] = to_string(c.algorithm);
  j["clamp_weights"] = c.clamp_weights;
  return j;
}

template <typename T>
void take(const json& j, const char* key, T& field) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    field = it->get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string RunConfig::to_json() const { return config_object(*this).dump(); }

RunConfig RunConfig::from_json(const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a flat JSON object");
  const auto known = config_object(base);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown config field '" + key + "'");
  }
  RunConfig c = base;
  take(j, "gamma", c.gamma);
  take(j, "lambda_quality", c.lambda_quality);
  take(j, "alpha_cql_anchor", c.alpha_cql_anchor);
  take(j, "batch_size", c.batch_size);
  take(j, "lr_critic", c.lr_critic);
  take(j, "lr_actor", c.lr_actor);
  take(j, "lr_weight", c.lr_weight);
  take(j, "lr_temperature", c.lr_temperature);
  take(j, "lr_bc", c.lr_bc);
  take(j, "polyak_rate", c.polyak_rate);
  take(j, "bc_steps", c.bc_steps);
  take(j, "train_steps", c.train_steps);
  take(j, "eval_every", c.eval_every);
  take(j, "eval_episodes", c.eval_episodes);
  take(j, "n_ood_samples", c.n_ood_samples);
  take(j, "bc_sigma", c.bc_sigma);
  take(j, "initial_temperature", c.initial_temperature);
  take(j, "seed", c.seed);
  take(j, "hidden", c.hidden);
  take(j, "clamp_weights", c.clamp_weights);
  if (j.contains("quality_mode")) {
    std::string mode;
    take(j, "quality_mode", mode);
    c.quality_mode = QualityMode::parse(mode);
  }
  if (j.contains("algorithm")) {
    std::string algo;
    take(j, "algorithm", algo);
    c.algorithm = parse_algorithm(algo);
  }
  return c;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json())); }

}  // namespace aclql
