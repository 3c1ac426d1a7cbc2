#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "motionforge/pipeline.hpp"
#include "motionforge/training.hpp"

namespace motionforge::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kAssertion = 2, kIo = 3 };

struct RunConfig {
  std::string command;

  Task task = Task::sir;
  int count = 64;
  int height = 64;
  int width = 64;
  double magnitude = 6.0;
  double noise_scale = 0.0;
  double gamma = 16.0;

  int timesteps = kDefaultTimesteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  int hidden = 16;

  double w_diff = 1.0;
  double w_cond = 1.0;
  double w_pct = 0.01;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int epochs = 1;
  int batch_size = 4;
  bool resume = false;

  int steps = 1;
  std::vector<int> steps_list{1, 4, 16};
  std::vector<int> ensemble_k{1, 2, 4, 8};
  int edge_band = -1;  // -1: 16 px per 256 px of the shorter side

  bool assert_trend = false;
  bool assert_flat = false;
  double trend_margin = 0.3;
  double flat_tolerance = 0.3;
  bool corrupt_weights = false;

  std::uint64_t seed = 0;
  int threads = 0;
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint_dir;

  /// Throws InvalidParameter on any value outside its module's preconditions.
  void validate() const;
  int effective_edge_band(int height, int width) const;
};

/// Entry point; returns the process exit code. Messages go to `out`, errors to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Plain `key = value` lines; `#` starts a comment. Throws IoError / InvalidParameter.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::filesystem::path& path);

struct Checkpoint {
  MotionModel model;
  TrainState state;
  std::uint64_t seed = 0;
  int batch_size = 0;
};

/// Directory with model.txt, one STMT tensor per parameter block and the
/// optimizer velocity.
void save_checkpoint(const std::filesystem::path& dir, const MotionModel& model, const TrainState& state,
                     std::uint64_t seed, int batch_size);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Exclusive writer lock: creates `run.lock` in the directory or throws IoError.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace motionforge::cli
