#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "star/errors.hpp"
#include "star/rollout.hpp"
#include "star/run_config.hpp"
#include "star/training.hpp"

namespace star {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2 };

/// Maps library exceptions to exit codes: NumericalError -> 2, every other
/// star::Error -> 1. Anything else propagates.
int exit_code_for(const Error& error);

/// Lowercase hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

/// Output directory built under a sibling "<name>.partial" path and renamed
/// into place by commit(). Without a commit the partial tree is removed.
class StagedDir {
 public:
  /// Throws ConfigError if `target` already exists or its parent is missing.
  explicit StagedDir(std::filesystem::path target);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const std::filesystem::path& path() const { return staging_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

/// manifest.json with the command, seed, config, inputs and the SHA-256 of
/// every other file under `dir` (sorted relative paths). No timestamps.
nlohmann::json make_manifest(const std::filesystem::path& dir, const std::string& command,
                             std::uint64_t seed, const nlohmann::json& config,
                             const nlohmann::json& inputs);
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    std::uint64_t seed, const nlohmann::json& config,
                    const nlohmann::json& inputs);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);

/// Clips and their tokens for a run: loaded from `data_dir` when given
/// (checked against the config), otherwise generated from the config.
struct RunData {
  std::vector<SyntheticClip> clips;
  std::vector<LabeledTokens> tokens;
};
RunData prepare_data(const RunConfig& config, const std::optional<std::filesystem::path>& data_dir);

// ---- gen-data -------------------------------------------------------------

struct GenDataOptions {
  DataConfig data;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};
int cmd_gen_data(const GenDataOptions& options, std::ostream& log);

// ---- train / eval ---------------------------------------------------------

struct TrainOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> data;
  std::filesystem::path out;
};
int cmd_train(const TrainOptions& options, std::ostream& log);

/// "epoch,loss,acc" with one row per epoch.
std::string training_log_csv(const std::vector<EpochLog>& log);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
};
int cmd_eval(const EvalOptions& options, std::ostream& log);

// ---- gradcheck ------------------------------------------------------------

/// Small model and clip for finite-difference checks: D = dim, H = 2, L = 2,
/// T = 4, P = 4 grid tokens, N = 3 joints (S = 10).
struct GradcheckSetup {
  ModelConfig model;
  ClipTokens clip;
  std::size_t label = 0;
};
GradcheckSetup gradcheck_setup(std::size_t dim, std::uint64_t seed);

struct PairGradcheck {
  AttentionKind encoder = AttentionKind::Zigzag;
  AttentionKind decoder = AttentionKind::Binary;
  GradcheckReport report;
};

/// Every encoder x decoder structure pair (nine of them).
std::vector<PairGradcheck> gradcheck_all_pairs(std::size_t dim, double tolerance,
                                               std::uint64_t seed, std::size_t coordinates = 10);

struct GradcheckOptions {
  std::size_t dim = 8;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::size_t coordinates = 10;
  std::optional<std::filesystem::path> out;
};
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& log);

// ---- complexity -----------------------------------------------------------

struct ComplexityRow {
  std::size_t spatial = 0;
  std::size_t frames = 0;
  DotProductCount full_closed;
  DotProductCount grouped_closed;
  std::uint64_t full_counted = 0;
  std::uint64_t per_group_counted = 0;
  std::uint64_t grouped_total_counted = 0;

  bool counts_match() const;
  double per_group_ratio() const;  // per_group / full
  double total_ratio() const;      // both groups / full
};

/// Runs the real kernels on random tokens (D = 4, H = 1) and reads the
/// dot-product tally next to the closed forms.
ComplexityRow measure_complexity(std::size_t spatial, std::size_t frames);
std::string complexity_csv(const std::vector<ComplexityRow>& rows);

struct ComplexityOptions {
  std::vector<std::size_t> spatial{10, 65, 3, 24, 40};
  std::vector<std::size_t> frames{16, 16, 4, 8, 12};
  std::optional<std::filesystem::path> out;
};
int cmd_complexity(const ComplexityOptions& options, std::ostream& log);

// ---- rollout --------------------------------------------------------------

struct RolloutOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path clip;
  std::filesystem::path out;  // report.json; the CSV goes next to it
  ImportanceSource source = ImportanceSource::ClsTotal;
  bool layers = false;
};
int cmd_rollout(const RolloutOptions& options, std::ostream& log);

// ---- ablation -------------------------------------------------------------

using StructurePair = std::pair<AttentionKind, AttentionKind>;  // encoder, decoder

/// F-F/F-F, F-Z/F-Z, F-B/F-B, F-B/F-Z, F-Z/F-B.
const std::vector<StructurePair>& ablation_rows();
std::string pair_label(const StructurePair& pair);
/// "F-Z/F-B" -> pair. Throws ConfigError listing the valid pairs.
StructurePair parse_pair_label(const std::string& text);

struct AblationRow {
  StructurePair pair;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
};
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct AblationOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> data;
  std::filesystem::path out;
  std::vector<std::string> rows;  // empty: all five
  std::optional<std::size_t> epochs;
};
int cmd_ablation(const AblationOptions& options, std::ostream& log);

// ---- selftest -------------------------------------------------------------

struct SelftestCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};
/// Gradient checks, oracle equivalences and round-trips, all at small sizes.
std::vector<SelftestCheck> run_selftest();
int cmd_selftest(std::ostream& log);

}  // namespace star
