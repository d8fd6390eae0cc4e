#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aclql {

/// One (s, a, r, s', done) step of logged experience.
struct Transition {
  std::vector<double> state;
  std::vector<double> action;  // components in [-1, 1]
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;
};

struct Episode {
  std::vector<Transition> transitions;
  bool terminal = false;

  std::size_t size() const { return transitions.size(); }
  std::vector<double> rewards() const;
};

/// A static offline dataset with its episode structure.
///
/// Episodes are stored in file order; `episode_id` values need not be dense
/// but must be unique.
struct OfflineDataset {
  std::string env;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  double gamma = 0.99;
  std::vector<Episode> episodes;
  std::optional<std::string> config_hash;

  std::size_t count_transitions() const;

  /// Throws std::invalid_argument when any type invariant is violated.
  void validate() const;
};

struct DatasetStats {
  double r_min = 0.0;
  double r_max = 0.0;
  double r_mean = 0.0;
  double g_min = 0.0;
  double g_max = 0.0;
  std::size_t count_transitions = 0;

  bool reward_degenerate() const { return r_max == r_min; }
  bool return_degenerate() const { return g_max == g_min; }
};

/// Raised by the dataset reader; `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

OfflineDataset parse_dataset(const std::string& text);
OfflineDataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const OfflineDataset& dataset);
void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path);

/// Reward extrema plus extrema of the per-step discounted Monte Carlo returns.
DatasetStats compute_stats(const OfflineDataset& dataset, double gamma);

/// (x - lo) / (hi - lo), or 0.5 when the range is degenerate.
double normalize_in_range(double x, double lo, double hi);

}  // namespace aclql
