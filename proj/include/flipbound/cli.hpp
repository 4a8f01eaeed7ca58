#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flipbound::cli {

/// Every tunable of the pipeline. Values come from built-in defaults, then a
/// flat `key = value` config file, then command-line flags.
struct ExperimentConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  int k = 200;
  int class0 = 0;  // CIFAR-10 label id kept as binary label 0
  int class1 = 8;  // ... and as binary label 1
  std::string class0_name = "plane";
  std::string class1_name = "ship";
  std::uint64_t seed = 0;
  int threads = 0;  // 0: all cores

  // train
  std::vector<long> hidden{700, 600, 510, 440, 375, 325, 285, 250, 215, 160, 100, 40};
  double sigma_init = 1.0;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 0.001;
  double dropout_rate = 0.5;
  bool train_sigma = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // recon
  std::vector<long> recon_ks{25, 50, 100, 200};
  long recon_image = -1;  // row of train.csv; -1: first class-1 image

  // flip
  std::string flip_split = "test";
  long flip_count = 200;
  int flip_restarts = 4;

  // path
  double score_tol = 0.01;
  double overshoot = 2.0;

  // regions
  std::string region_split = "train";
  int region_class = 1;
  long region_max_points = 200;

  // attack
  std::string attack_split = "test";
  long attack_count = 50;
  std::vector<double> attack_epsilons{0.1, 0.5, 2.0};
  int attack_steps = 500;
  double histogram_bin_width = 0.05;

  /// Sets one key from its text form; throws ConfigError on unknown keys or
  /// malformed values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  /// Canonical `key = value` lines, sorted by key; hashed into manifests.
  std::string canonical() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A required artifact is missing; names the file and the command that makes it.
class DependencyError : public std::runtime_error {
 public:
  DependencyError(std::filesystem::path file, std::string producer);
  const std::filesystem::path& file() const { return file_; }
  const std::string& producer() const { return producer_; }

 private:
  std::filesystem::path file_;
  std::string producer_;
};

/// Parses flat `key = value` text; `#` starts a comment line.
std::map<std::string, std::string> parse_key_values(std::string_view text);
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

/// Per-stage seed: splitmix64 of the global seed mixed with FNV-1a of the stage name.
std::uint64_t stage_seed(std::uint64_t global, std::string_view stage);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes manifest_<command>.txt listing config hash, seed, version and a
/// digest of every output.
void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::filesystem::path>& outputs);

// Commands. Each checks its prerequisites before writing anything and
// returns the files it wrote (manifest excluded).
struct PathRequest {
  long from = 0;
  long to = -1;  // -1: the closest flip point of `from`
  std::string split = "test";
};

std::vector<std::filesystem::path> cmd_prepare(const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> cmd_train(const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> cmd_recon(const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> cmd_flip(const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> cmd_path(const ExperimentConfig& cfg, const PathRequest& req, std::ostream& log);
std::vector<std::filesystem::path> cmd_regions(const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> cmd_attack(const ExperimentConfig& cfg, std::ostream& log);

/// Exit codes of run().
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitDependency = 3,
  kExitInput = 4,
  kExitFailure = 5,
};

/// Full command line (argv[0] included). Failures print one JSON error record
/// to `err` and return a nonzero exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flipbound::cli
