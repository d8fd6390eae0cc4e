#include "aclql/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "aclql/format.hpp"
#include "aclql/quality.hpp"
#include "json.hpp"

namespace aclql {

using nlohmann::json;

std::vector<double> Episode::rewards() const {
  std::vector<double> out;
  out.reserve(transitions.size());
  for (const auto& t : transitions) out.push_back(t.reward);
  return out;
}

std::size_t OfflineDataset::count_transitions() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.size();
  return n;
}

void OfflineDataset::validate() const {
  if (obs_dim == 0 || action_dim == 0) throw std::invalid_argument("obs_dim and action_dim must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (episodes.empty()) throw std::invalid_argument("dataset has no episodes");
  for (const auto& ep : episodes) {
    if (ep.transitions.empty()) throw std::invalid_argument("empty episode");
    const auto id = ep.transitions.front().episode_id;
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const auto& tr = ep.transitions[t];
      if (tr.episode_id != id) throw std::invalid_argument("mixed episode ids within one episode");
      if (tr.step_index != static_cast<std::int64_t>(t)) {
        throw std::invalid_argument("step indices not contiguous in episode " + std::to_string(id));
      }
      if (tr.state.size() != obs_dim || tr.next_state.size() != obs_dim) {
        throw std::invalid_argument("state dimension mismatch in episode " + std::to_string(id));
      }
      if (tr.action.size() != action_dim) {
        throw std::invalid_argument("action dimension mismatch in episode " + std::to_string(id));
      }
      for (double a : tr.action) {
        if (!(a >= -1.0 && a <= 1.0)) throw std::invalid_argument("action component outside [-1, 1]");
      }
      if (tr.done && t + 1 != ep.size()) throw std::invalid_argument("done flag before episode end");
    }
  }
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

std::vector<double> read_vector(const json& j, const char* key, std::size_t dim, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) throw ParseError(line, std::string("missing array field '") + key + "'");
  if (it->size() != dim) {
    throw ParseError(line, std::string("dimension mismatch in '") + key + "': expected " + std::to_string(dim) +
                               ", got " + std::to_string(it->size()));
  }
  std::vector<double> out;
  out.reserve(dim);
  for (const auto& v : *it) {
    if (!v.is_number()) throw ParseError(line, std::string("non-numeric entry in '") + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

template <typename T>
T read_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line, std::string("bad type for field '") + key + "'");
  }
}

}  // namespace

OfflineDataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  OfflineDataset ds;
  bool have_header = false;
  std::int64_t current_eps = -1;
  std::vector<std::int64_t> seen_ids;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "expected a JSON object");

    if (!have_header) {
      if (!j.contains("version")) throw ParseError(lineno, "missing header");
      if (read_field<int>(j, "version", lineno) != 1) throw ParseError(lineno, "unsupported version");
      ds.env = read_field<std::string>(j, "env", lineno);
      const auto obs = read_field<std::int64_t>(j, "obs_dim", lineno);
      const auto act = read_field<std::int64_t>(j, "action_dim", lineno);
      if (obs <= 0 || act <= 0) throw ParseError(lineno, "malformed header: dimensions must be positive");
      ds.obs_dim = static_cast<std::size_t>(obs);
      ds.action_dim = static_cast<std::size_t>(act);
      ds.gamma = read_field<double>(j, "gamma", lineno);
      if (!(ds.gamma > 0.0 && ds.gamma <= 1.0)) throw ParseError(lineno, "malformed header: gamma outside (0, 1]");
      if (j.contains("config_hash")) ds.config_hash = read_field<std::string>(j, "config_hash", lineno);
      have_header = true;
      continue;
    }

    Transition t;
    t.episode_id = read_field<std::int64_t>(j, "eps", lineno);
    t.step_index = read_field<std::int64_t>(j, "t", lineno);
    t.state = read_vector(j, "s", ds.obs_dim, lineno);
    t.action = read_vector(j, "a", ds.action_dim, lineno);
    t.reward = read_field<double>(j, "r", lineno);
    t.next_state = read_vector(j, "s2", ds.obs_dim, lineno);
    t.done = read_field<bool>(j, "done", lineno);
    if (t.episode_id < 0 || t.step_index < 0) throw ParseError(lineno, "negative episode id or step index");
    for (double a : t.action) {
      if (!(a >= -1.0 && a <= 1.0)) throw ParseError(lineno, "action component outside [-1, 1]");
    }

    if (t.episode_id != current_eps) {
      if (std::find(seen_ids.begin(), seen_ids.end(), t.episode_id) != seen_ids.end()) {
        throw ParseError(lineno, "episode " + std::to_string(t.episode_id) + " is not contiguous");
      }
      if (t.step_index != 0) throw ParseError(lineno, "non-contiguous step index: episode must start at t=0");
      seen_ids.push_back(t.episode_id);
      current_eps = t.episode_id;
      ds.episodes.emplace_back();
    } else {
      auto& ep = ds.episodes.back();
      if (t.step_index != static_cast<std::int64_t>(ep.size())) {
        throw ParseError(lineno, "non-contiguous step index " + std::to_string(t.step_index));
      }
      if (ep.transitions.back().done) throw ParseError(lineno, "transition after done=true");
    }
    auto& ep = ds.episodes.back();
    ep.terminal = t.done;
    ep.transitions.push_back(std::move(t));
  }

  if (!have_header) throw ParseError(lineno ? 1 : 0, "missing header");
  if (ds.episodes.empty()) throw ParseError(lineno, "dataset has no transitions");
  return ds;
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string serialize_dataset(const OfflineDataset& ds) {
  std::string out;
  out.reserve(ds.count_transitions() * (ds.obs_dim * 2 + ds.action_dim) * 24 + 128);
  out += "{\"version\":1,\"env\":";
  out += json(ds.env).dump();
  out += ",\"obs_dim\":" + std::to_string(ds.obs_dim);
  out += ",\"action_dim\":" + std::to_string(ds.action_dim);
  out += ",\"gamma\":" + format_double(ds.gamma);
  if (ds.config_hash) out += ",\"config_hash\":" + json(*ds.config_hash).dump();
  out += "}\n";
  for (const auto& ep : ds.episodes) {
    for (const auto& t : ep.transitions) {
      out += "{\"eps\":" + std::to_string(t.episode_id);
      out += ",\"t\":" + std::to_string(t.step_index);
      out += ",\"s\":" + format_array(t.state);
      out += ",\"a\":" + format_array(t.action);
      out += ",\"r\":" + format_double(t.reward);
      out += ",\"s2\":" + format_array(t.next_state);
      out += t.done ? ",\"done\":true}\n" : ",\"done\":false}\n";
    }
  }
  return out;
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  out << serialize_dataset(ds);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DatasetStats compute_stats(const OfflineDataset& ds, double gamma) {
  if (ds.episodes.empty()) throw std::invalid_argument("compute_stats: empty dataset");
  DatasetStats st;
  st.r_min = st.g_min = std::numeric_limits<double>::infinity();
  st.r_max = st.g_max = -std::numeric_limits<double>::infinity();
  std::vector<double> rewards;
  rewards.reserve(ds.count_transitions());
  for (const auto& ep : ds.episodes) {
    const auto g = mc_returns(ep, gamma);
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const double r = ep.transitions[t].reward;
      st.r_min = std::min(st.r_min, r);
      st.r_max = std::max(st.r_max, r);
      rewards.push_back(r);
      st.g_min = std::min(st.g_min, g[t]);
      st.g_max = std::max(st.g_max, g[t]);
    }
    st.count_transitions += ep.size();
  }
  // Sorted summation makes the mean independent of episode order.
  std::sort(rewards.begin(), rewards.end());
  double r_sum = 0.0;
  for (double r : rewards) r_sum += r;
  st.r_mean = std::clamp(r_sum / static_cast<double>(st.count_transitions), st.r_min, st.r_max);
  return st;
}

double normalize_in_range(double x, double lo, double hi) {
  if (hi == lo) return 0.5;
  return (x - lo) / (hi - lo);
}

}  // namespace aclql
