#include "aclql/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "aclql/format.hpp"
#include "json.hpp"

namespace aclql {

using nlohmann::json;

std::vector<double> mc_returns(const Episode& episode, double gamma) {
  const std::size_t n = episode.size();
  std::vector<double> g(n);
  if (n == 0) return g;
  g[n - 1] = episode.transitions[n - 1].reward;
  for (std::size_t t = n - 1; t-- > 0;) {
    g[t] = episode.transitions[t].reward + gamma * g[t + 1];
  }
  return g;
}

std::vector<double> nstep_sarsa_returns(const Episode& episode, int n, double gamma) {
  if (n < 1) throw std::invalid_argument("nstep_sarsa_returns: n must be >= 1");
  const std::size_t len = episode.size();
  const auto horizon = static_cast<std::size_t>(n);
  if (horizon >= len) return mc_returns(episode, gamma);

  std::vector<double> out(len);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t last = std::min(t + horizon - 1, len - 1);
    // Horner from the far end matches the backward recursion used for full returns.
    double acc = episode.transitions[last].reward;
    for (std::size_t k = last; k-- > t;) acc = episode.transitions[k].reward + gamma * acc;
    out[t] = acc;
  }
  return out;
}

std::vector<std::vector<double>> dataset_returns(const OfflineDataset& dataset, double gamma,
                                                 const QualityMode& mode) {
  std::vector<std::vector<double>> out;
  out.reserve(dataset.episodes.size());
  for (const auto& ep : dataset.episodes) {
    out.push_back(mode.kind == QualityModeKind::kNStepSarsa ? nstep_sarsa_returns(ep, mode.nstep, gamma)
                                                            : mc_returns(ep, gamma));
  }
  return out;
}

std::vector<QualityAnnotation> annotate_dataset(const OfflineDataset& dataset, const DatasetStats& stats,
                                                double lambda, const QualityMode& mode) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("annotate_dataset: lambda outside [0, 1]");
  const auto returns = dataset_returns(dataset, dataset.gamma, mode);

  double g_lo = stats.g_min;
  double g_hi = stats.g_max;
  if (mode.kind == QualityModeKind::kNStepSarsa) {
    g_lo = std::numeric_limits<double>::infinity();
    g_hi = -std::numeric_limits<double>::infinity();
    for (const auto& ep : returns) {
      for (double g : ep) {
        g_lo = std::min(g_lo, g);
        g_hi = std::max(g_hi, g);
      }
    }
  }

  std::vector<QualityAnnotation> out;
  out.reserve(dataset.count_transitions());
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e) {
    const auto& ep = dataset.episodes[e];
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const auto& tr = ep.transitions[t];
      QualityAnnotation a;
      a.episode_id = tr.episode_id;
      a.step_index = tr.step_index;
      a.g = returns[e][t];
      a.g_norm = std::clamp(normalize_in_range(a.g, g_lo, g_hi), 0.0, 1.0);
      a.r_norm = std::clamp(normalize_in_range(tr.reward, stats.r_min, stats.r_max), 0.0, 1.0);
      a.m = lambda * a.g_norm + (1.0 - lambda) * a.r_norm;
      out.push_back(a);
    }
  }
  return out;
}

double ood_quality(double m_in, std::span<const double> a_ood, std::span<const double> a_in) {
  if (a_ood.size() != a_in.size() || a_in.empty()) {
    throw std::invalid_argument("ood_quality: action dimension mismatch");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a_in.size(); ++i) {
    const double d = a_ood[i] - a_in[i];
    sq += d * d;
  }
  const double dim = static_cast<double>(a_in.size());
  const double x2 = std::clamp(2.0 * std::sqrt(sq) / (2.0 * std::sqrt(dim)), 0.0, 2.0);
  return quality_translation(m_in, x2);
}

GapPair gaps(double m, double r_max) { return {(1.0 - m) * r_max, m * r_max}; }

std::string serialize_quality(const QualitySidecar& sc) {
  std::string out = "{\"version\":1,\"lambda\":" + format_double(sc.lambda) + ",\"mode\":" +
                    json(sc.mode.to_string()).dump();
  if (!sc.config_hash.empty()) out += ",\"config_hash\":" + json(sc.config_hash).dump();
  out += "}\n";
  for (const auto& r : sc.rows) {
    out += "{\"eps\":" + std::to_string(r.episode_id) + ",\"t\":" + std::to_string(r.step_index) +
           ",\"g\":" + format_double(r.g) + ",\"g_norm\":" + format_double(r.g_norm) +
           ",\"r_norm\":" + format_double(r.r_norm) + ",\"m\":" + format_double(r.m) + "}\n";
  }
  return out;
}

QualitySidecar parse_quality(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  QualitySidecar sc;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      if (!have_header) {
        if (!j.contains("version")) throw ParseError(lineno, "missing header");
        if (j.at("version").get<int>() != 1) throw ParseError(lineno, "unsupported version");
        sc.lambda = j.at("lambda").get<double>();
        sc.mode = QualityMode::parse(j.at("mode").get<std::string>());
        if (j.contains("config_hash")) sc.config_hash = j.at("config_hash").get<std::string>();
        have_header = true;
        continue;
      }
      QualityAnnotation a;
      a.episode_id = j.at("eps").get<std::int64_t>();
      a.step_index = j.at("t").get<std::int64_t>();
      a.g = j.at("g").get<double>();
      a.g_norm = j.at("g_norm").get<double>();
      a.r_norm = j.at("r_norm").get<double>();
      a.m = j.at("m").get<double>();
      sc.rows.push_back(a);
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed quality row: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(0, "missing header");
  return sc;
}

void save_quality(const QualitySidecar& sc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write quality file " + path.string());
  out << serialize_quality(sc);
}

QualitySidecar load_quality(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open quality file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_quality(buf.str());
}

}  // namespace aclql
