#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "aclql/core.hpp"

namespace aclql::test {

/// Builds an episode from rewards with 1-D states/actions; the last step is
/// terminal when `terminal` is set.
inline Episode make_episode(std::int64_t id, const std::vector<double>& rewards, bool terminal = true) {
  Episode ep;
  ep.terminal = terminal;
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    Transition tr;
    tr.state = {static_cast<double>(t)};
    tr.action = {0.0};
    tr.reward = rewards[t];
    tr.next_state = {static_cast<double>(t + 1)};
    tr.done = terminal && t + 1 == rewards.size();
    tr.episode_id = id;
    tr.step_index = static_cast<std::int64_t>(t);
    ep.transitions.push_back(tr);
  }
  return ep;
}

inline OfflineDataset make_dataset(const std::vector<std::vector<double>>& episodes, double gamma) {
  OfflineDataset ds;
  ds.env = "unit";
  ds.obs_dim = 1;
  ds.action_dim = 1;
  ds.gamma = gamma;
  for (std::size_t i = 0; i < episodes.size(); ++i) ds.episodes.push_back(make_episode(static_cast<std::int64_t>(i), episodes[i]));
  return ds;
}

/// Direct O(T^2) discounted sums.
inline std::vector<double> naive_returns(const std::vector<double>& r, double gamma, std::size_t horizon) {
  std::vector<double> g(r.size(), 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    double acc = 0.0;
    for (std::size_t k = t; k < r.size() && k - t < horizon; ++k) acc += std::pow(gamma, static_cast<double>(k - t)) * r[k];
    g[t] = acc;
  }
  return g;
}

/// Spearman rank correlation (no ties expected).
template <typename V>
double spearman(const V& a, const V& b) {
  const auto n = static_cast<std::size_t>(a.size());
  auto ranks = [n](const V& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double mean = (static_cast<double>(n) - 1.0) / 2.0;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  return num / std::sqrt(da * db);
}

}  // namespace aclql::test
