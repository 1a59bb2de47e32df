#include "star/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <system_error>

#include "star/checkpoint.hpp"
#include "star/ops.hpp"
#include "star/errors.hpp"
#include "star/random.hpp"
#include "star/stf.hpp"

namespace star {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const Error& error) {
  return dynamic_cast<const NumericalError*>(&error) ? kExitNumerical : kExitUsage;
}

std::string sha256_file(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed for " + path.string());
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < length; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

StagedDir::StagedDir(fs::path target) : target_(std::move(target)) {
  if (target_.empty()) throw ConfigError("output path is empty");
  if (fs::exists(target_))
    throw ConfigError("output path " + target_.string() + " already exists; choose a new one");
  const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
  fs::create_directories(parent);
  staging_ = parent / (target_.filename().string() + ".partial");
  fs::remove_all(staging_);
  fs::create_directory(staging_);
}

StagedDir::~StagedDir() {
  if (committed_) return;
  std::error_code ignored;
  fs::remove_all(staging_, ignored);
}

void StagedDir::commit() {
  fs::rename(staging_, target_);
  committed_ = true;
}

json make_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                   const json& config, const json& inputs) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const std::string& rel : files)
    artifacts.push_back({{"path", rel},
                         {"bytes", fs::file_size(dir / rel)},
                         {"sha256", sha256_file(dir / rel)}});
  return {{"command", command},
          {"seed", seed},
          {"config", config},
          {"inputs", inputs},
          {"artifacts", artifacts}};
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    const json& config, const json& inputs) {
  write_text(dir / "manifest.json", make_manifest(dir, command, seed, config, inputs).dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file " + path.string() + " not found");
  RunConfig config = RunConfig::parse(read_text(path));
  config.validate();
  return config;
}

namespace {

// Clip set usable by `model`: consistent frame shapes, matching joint count,
// labels in range.
void check_clips(const std::vector<SyntheticClip>& clips, const ModelConfig& model,
                 const BackboneConfig& backbone) {
  if (clips.empty()) throw ValidationError("dataset has no clips");
  const Shape& first = clips.front().frames.shape();
  if (first.size() != 4 || first[1] != 3)
    throw ValidationError("clip frames must be [T x 3 x H x W]");
  const std::size_t cell = backbone.patch * backbone.pool;
  if (first[0] % 2 != 0) throw ValidationError("clip frame count must be even");
  if (first[2] % cell != 0 || first[3] % cell != 0)
    throw ValidationError("frame size " + std::to_string(first[2]) + "x" + std::to_string(first[3]) +
                          " is not a multiple of patch*pool = " + std::to_string(cell));
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const SyntheticClip& clip = clips[i];
    const std::string where = "clip " + std::to_string(i) + ": ";
    if (clip.frames.shape() != first) throw ValidationError(where + "frame shape differs from clip 0");
    if (clip.pose.frames() != first[0]) throw ValidationError(where + "pose frame count mismatch");
    if (clip.pose.joints() != model.joints)
      throw ValidationError(where + "pose has " + std::to_string(clip.pose.joints()) +
                            " joints, model expects " + std::to_string(model.joints));
    if (clip.label >= model.num_classes)
      throw ValidationError(where + "label " + std::to_string(clip.label) + " out of range");
  }
}

json data_inputs(const std::optional<fs::path>& data_dir) {
  if (!data_dir) return {{"data", "generated"}};
  return {{"data", data_dir->generic_string()},
          {"dataset_sha256", sha256_file(*data_dir / "dataset.json")}};
}

std::string fixed(double value, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << value;
  return out.str();
}

std::string csv_number(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

}  // namespace

RunData prepare_data(const RunConfig& config, const std::optional<fs::path>& data_dir) {
  RunData run;
  run.clips = data_dir ? load_dataset(*data_dir) : gen_synthetic_dataset(config.data, config.data_seed());
  check_clips(run.clips, config.model, config.backbone);
  run.tokens = tokenize_dataset(run.clips, config.backbone, config.backbone_seed(), config.model.sigma);
  return run;
}

// ---- gen-data -------------------------------------------------------------

int cmd_gen_data(const GenDataOptions& options, std::ostream& log) {
  options.data.validate();
  StagedDir stage(options.out);
  const auto clips = gen_synthetic_dataset(options.data, derive_seed(options.seed, "data"));
  save_dataset(stage.path(), clips);
  const json config{{"seed", options.seed}, {"data", to_json(options.data)}};
  write_text(stage.path() / "config.json", config.dump(2) + "\n");
  write_manifest(stage.path(), "gen-data", options.seed, config, json::object());
  stage.commit();
  log << "wrote " << clips.size() << " clips to " << options.out.string() << "\n";
  return kExitOk;
}

// ---- train / eval ---------------------------------------------------------

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,acc\n";
  for (const EpochLog& e : log)
    out += std::to_string(e.epoch) + "," + csv_number(e.loss) + "," + csv_number(e.accuracy) + "\n";
  return out;
}

int cmd_train(const TrainOptions& options, std::ostream& log) {
  const RunConfig config = load_run_config(options.config);
  StagedDir stage(options.out);
  const RunData data = prepare_data(config, options.data);
  log << "training " << structure_label(config.model.encoder_sta) << "/"
      << structure_label(config.model.decoder_sta) << " on " << data.tokens.size() << " clips, "
      << config.train.epochs << " epochs\n";
  const TrainResult result =
      train(init_model(config.model, config.init_seed()), config.model, data.tokens, config.train,
            config.shuffle_seed(), [&](const EpochLog& e) {
              log << "epoch " << e.epoch << " steps " << e.steps << " loss " << fixed(e.loss, 4)
                  << " acc " << fixed(e.accuracy, 3) << "\n";
              log.flush();
            });

  const fs::path dir = stage.path();
  write_text(dir / "config.json", config.to_json().dump(2) + "\n");
  write_text(dir / "log.csv", training_log_csv(result.log));
  json labels = json::array();
  for (const auto& clip : data.tokens) labels.push_back(clip.label);
  const json summary{{"steps", result.steps},
                     {"epochs", result.log.size()},
                     {"encoder", structure_label(config.model.encoder_sta)},
                     {"decoder", structure_label(config.model.decoder_sta)},
                     {"final_loss", result.final_eval.loss},
                     {"final_accuracy", result.final_eval.accuracy},
                     {"predictions", result.final_eval.predictions},
                     {"labels", labels}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  save_checkpoint(dir / "checkpoint", Checkpoint{config.model, config.backbone, config.seed,
                                                 config.backbone_seed(), result.params});
  write_manifest(dir, "train", config.seed, config.to_json(), data_inputs(options.data));
  stage.commit();
  log << "final loss " << fixed(result.final_eval.loss, 4) << " accuracy "
      << fixed(result.final_eval.accuracy, 3) << " after " << result.steps << " steps\n";
  return kExitOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& log) {
  const Checkpoint checkpoint = load_checkpoint(options.checkpoint);
  StagedDir stage(options.out);
  const auto clips = load_dataset(options.data);
  check_clips(clips, checkpoint.model, checkpoint.backbone);
  const auto tokens =
      tokenize_dataset(clips, checkpoint.backbone, checkpoint.backbone_seed, checkpoint.model.sigma);
  const EvalResult result = evaluate(checkpoint.params, checkpoint.model, tokens);
  json labels = json::array();
  for (const auto& clip : tokens) labels.push_back(clip.label);
  const json report{{"clips", tokens.size()},
                    {"loss", result.loss},
                    {"accuracy", result.accuracy},
                    {"predictions", result.predictions},
                    {"labels", labels}};
  write_text(stage.path() / "eval.json", report.dump(2) + "\n");
  const json inputs{{"checkpoint", options.checkpoint.generic_string()},
                    {"checkpoint_sha256", sha256_file(options.checkpoint / "manifest.json")},
                    {"data", options.data.generic_string()},
                    {"dataset_sha256", sha256_file(options.data / "dataset.json")}};
  write_manifest(stage.path(), "eval", checkpoint.seed,
                 {{"model", to_json(checkpoint.model)}, {"backbone", to_json(checkpoint.backbone)}},
                 inputs);
  stage.commit();
  log << "accuracy " << fixed(result.accuracy, 3) << " loss " << fixed(result.loss, 4) << " on "
      << tokens.size() << " clips\n";
  return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

GradcheckSetup gradcheck_setup(std::size_t dim, std::uint64_t seed) {
  DataConfig data;
  data.classes = 3;
  data.clips_per_class = 1;
  data.frames = 4;
  data.joints = 3;
  data.height = 16;
  data.width = 16;
  BackboneConfig backbone{6, 5, 4, 2};
  GradcheckSetup setup;
  setup.model.global_channels = backbone.global_channels;
  setup.model.local_channels = backbone.local_channels;
  setup.model.joints = data.joints;
  setup.model.model_dim = dim;
  setup.model.heads = 2;
  setup.model.layers = 2;
  setup.model.num_classes = data.classes;
  setup.model.sigma = 1.0;
  setup.model.validate();
  const auto clips = gen_synthetic_dataset(data, derive_seed(seed, "data"));
  auto tokens = tokenize_dataset({clips[1]}, backbone, derive_seed(seed, "backbone"), setup.model.sigma);
  setup.clip = std::move(tokens.front().tokens);
  setup.label = clips[1].label;
  return setup;
}

std::vector<PairGradcheck> gradcheck_all_pairs(std::size_t dim, double tolerance, std::uint64_t seed,
                                               std::size_t coordinates) {
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  GradcheckSetup setup = gradcheck_setup(dim, seed);
  std::vector<PairGradcheck> out;
  for (AttentionKind enc : {AttentionKind::Full, AttentionKind::Zigzag, AttentionKind::Binary})
    for (AttentionKind dec : {AttentionKind::Full, AttentionKind::Zigzag, AttentionKind::Binary}) {
      setup.model.encoder_sta = enc;
      setup.model.decoder_sta = dec;
      const StarModelParams params = init_model(setup.model, derive_seed(seed, "init"));
      out.push_back({enc, dec,
                     gradcheck_model(params, setup.model, setup.clip, setup.label, tolerance,
                                     coordinates, derive_seed(seed, "gradcheck"))});
    }
  return out;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& log) {
  std::optional<StagedDir> stage;
  if (options.out) stage.emplace(*options.out);
  const auto results = gradcheck_all_pairs(options.dim, options.tolerance, options.seed, options.coordinates);
  bool all_pass = true;
  json pairs = json::array();
  for (const PairGradcheck& r : results) {
    const std::string label = pair_label({r.encoder, r.decoder});
    all_pass = all_pass && r.report.pass();
    log << (r.report.pass() ? "PASS " : "FAIL ") << label << "  max rel err "
        << std::scientific << std::setprecision(3) << r.report.max_rel_error() << std::defaultfloat
        << "  (" << r.report.entries.size() << " groups)\n";
    json groups = json::array();
    for (const GradcheckEntry& e : r.report.entries) {
      if (!e.pass)
        log << "  " << e.name << " rel err " << std::scientific << e.max_rel_error << std::defaultfloat << "\n";
      groups.push_back({{"name", e.name},
                        {"coordinates", e.coordinates},
                        {"max_rel_error", e.max_rel_error},
                        {"pass", e.pass}});
    }
    pairs.push_back({{"structure", label},
                     {"pass", r.report.pass()},
                     {"max_rel_error", r.report.max_rel_error()},
                     {"groups", groups}});
  }
  if (stage) {
    const json config{{"dim", options.dim},
                      {"heads", 2},
                      {"layers", 2},
                      {"frames", 4},
                      {"spatial", 10},
                      {"tolerance", options.tolerance},
                      {"coordinates", options.coordinates},
                      {"step", 1e-5}};
    const json report{{"pass", all_pass}, {"tolerance", options.tolerance}, {"pairs", pairs}};
    write_text(stage->path() / "gradcheck.json", report.dump(2) + "\n");
    write_manifest(stage->path(), "gradcheck", options.seed, config, json::object());
    stage->commit();
  }
  log << (all_pass ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return all_pass ? kExitOk : kExitNumerical;
}

// ---- complexity -----------------------------------------------------------

bool ComplexityRow::counts_match() const {
  return full_counted == full_closed.total && per_group_counted == grouped_closed.per_group &&
         grouped_total_counted == grouped_closed.total;
}

double ComplexityRow::per_group_ratio() const {
  return static_cast<double>(per_group_counted) / static_cast<double>(full_counted);
}

double ComplexityRow::total_ratio() const {
  return static_cast<double>(grouped_total_counted) / static_cast<double>(full_counted);
}

ComplexityRow measure_complexity(std::size_t spatial, std::size_t frames) {
  if (spatial == 0) throw ConfigError("S must be positive");
  if (frames == 0 || frames % 2 != 0) throw ConfigError("T must be even and positive");
  ComplexityRow row;
  row.spatial = spatial;
  row.frames = frames;
  row.full_closed = count_dot_products(spatial, frames, AttentionKind::Full);
  row.grouped_closed = count_dot_products(spatial, frames, AttentionKind::Zigzag);

  const AttentionConfig cfg{4, 1};
  Rng rng(derive_seed(spatial * 1000 + frames, "complexity"));
  Tape tape;
  const Var z = tape.constant(rng.uniform_tensor({spatial, frames, cfg.model_dim}, -1.0, 1.0));
  const AttentionVars w{tape.constant(rng.uniform_tensor({4, 4}, -0.5, 0.5)),
                        tape.constant(rng.uniform_tensor({4, 4}, -0.5, 0.5)),
                        tape.constant(rng.uniform_tensor({4, 4}, -0.5, 0.5)),
                        tape.constant(rng.uniform_tensor({4, 4}, -0.5, 0.5))};

  reset_dot_product_tally();
  full_attention(z, w, cfg);
  row.full_counted = dot_product_tally().pairs;

  const Decoupled groups = decouple(z, Scheme::Zigzag);
  const std::size_t half_tokens = spatial * frames / 2;
  reset_dot_product_tally();
  multi_head_attention(reshape(groups.group_a, {half_tokens, cfg.model_dim}),
                       reshape(groups.group_b, {half_tokens, cfg.model_dim}), w, cfg);
  row.per_group_counted = dot_product_tally().pairs;

  reset_dot_product_tally();
  cross_group_attention(groups.group_a, groups.group_b, w, cfg);
  row.grouped_total_counted = dot_product_tally().pairs;
  return row;
}

std::string complexity_csv(const std::vector<ComplexityRow>& rows) {
  std::string out =
      "S,T,M,full_closed,full_counted,per_group_closed,per_group_counted,grouped_total_closed,"
      "grouped_total_counted,per_group_ratio,total_ratio,match\n";
  for (const ComplexityRow& r : rows)
    out += std::to_string(r.spatial) + "," + std::to_string(r.frames) + "," +
           std::to_string(r.spatial * r.frames) + "," + std::to_string(r.full_closed.total) + "," +
           std::to_string(r.full_counted) + "," + std::to_string(r.grouped_closed.per_group) + "," +
           std::to_string(r.per_group_counted) + "," + std::to_string(r.grouped_closed.total) + "," +
           std::to_string(r.grouped_total_counted) + "," + csv_number(r.per_group_ratio()) + "," +
           csv_number(r.total_ratio()) + "," + (r.counts_match() ? "true" : "false") + "\n";
  return out;
}

int cmd_complexity(const ComplexityOptions& options, std::ostream& log) {
  if (options.spatial.size() != options.frames.size() || options.spatial.empty())
    throw ConfigError("--S and --T need the same, nonzero number of values");
  std::optional<StagedDir> stage;
  if (options.out) stage.emplace(*options.out);
  std::vector<ComplexityRow> rows;
  for (std::size_t i = 0; i < options.spatial.size(); ++i)
    rows.push_back(measure_complexity(options.spatial[i], options.frames[i]));
  const std::string csv = complexity_csv(rows);
  log << csv;
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const ComplexityRow& r) {
    return r.counts_match() && r.per_group_ratio() == 0.25 && r.total_ratio() == 0.5;
  });
  if (stage) {
    write_text(stage->path() / "complexity.csv", csv);
    write_manifest(stage->path(), "complexity", 0, {{"S", options.spatial}, {"T", options.frames}},
                   json::object());
    stage->commit();
  }
  if (!ok) log << "instrumented counts disagree with the closed form\n";
  return ok ? kExitOk : kExitNumerical;
}

// ---- rollout --------------------------------------------------------------

int cmd_rollout(const RolloutOptions& options, std::ostream& log) {
  const fs::path json_path = options.out;
  fs::path csv_path = options.out;
  csv_path.replace_extension(".csv");
  const fs::path manifest_path =
      options.out.parent_path() / (options.out.stem().string() + ".manifest.json");
  for (const fs::path& p : {json_path, csv_path, manifest_path})
    if (fs::exists(p)) throw ConfigError("output " + p.string() + " already exists");
  if (json_path.extension() == ".csv") throw ConfigError("--out should name the JSON report, not a .csv");

  const Checkpoint checkpoint = load_checkpoint(options.checkpoint);
  const ClipSource clip = load_clip_file(options.clip);
  if (clip.pose.joints() != checkpoint.model.joints)
    throw ValidationError("clip has " + std::to_string(clip.pose.joints()) + " joints, model expects " +
                          std::to_string(checkpoint.model.joints));
  const auto features = clip_features(clip, checkpoint.backbone, checkpoint.backbone_seed);
  const ClipTokens tokens = tokenize_clip(features, clip.pose, checkpoint.model.sigma);
  const RolloutReport report =
      analyze_clip(checkpoint.params, checkpoint.model, tokens, options.source, options.layers);

  // Stage into a scratch directory next to the outputs, then move each file.
  StagedDir stage(options.out.parent_path() / (options.out.filename().string() + ".work"));
  write_text(stage.path() / "report.json", report.to_json());
  write_text(stage.path() / "report.csv", report.to_csv());
  const json config{{"source", to_string(options.source)}, {"layers", options.layers}};
  const json inputs{{"checkpoint", options.checkpoint.generic_string()},
                    {"checkpoint_sha256", sha256_file(options.checkpoint / "manifest.json")},
                    {"clip", options.clip.generic_string()},
                    {"clip_sha256", sha256_file(options.clip)}};
  json manifest = make_manifest(stage.path(), "rollout", checkpoint.seed, config, inputs);
  for (auto& artifact : manifest["artifacts"])
    artifact["path"] = artifact["path"] == "report.json" ? json_path.filename().generic_string()
                                                         : csv_path.filename().generic_string();
  write_text(stage.path() / "manifest.json", manifest.dump(2) + "\n");
  fs::rename(stage.path() / "report.json", json_path);
  fs::rename(stage.path() / "report.csv", csv_path);
  fs::rename(stage.path() / "manifest.json", manifest_path);

  log << "frame scores (" << to_string(options.source) << "):";
  for (double s : report.frame_scores) log << " " << fixed(s, 4);
  log << "\ntop frames:";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, report.top_k.size()); ++i) log << " " << report.top_k[i];
  log << "\n";
  return kExitOk;
}

// ---- ablation -------------------------------------------------------------

const std::vector<StructurePair>& ablation_rows() {
  using K = AttentionKind;
  static const std::vector<StructurePair> rows{
      {K::Full, K::Full}, {K::Zigzag, K::Zigzag}, {K::Binary, K::Binary},
      {K::Binary, K::Zigzag}, {K::Zigzag, K::Binary}};
  return rows;
}

std::string pair_label(const StructurePair& pair) {
  return structure_label(pair.first) + "/" + structure_label(pair.second);
}

StructurePair parse_pair_label(const std::string& text) {
  for (const StructurePair& pair : ablation_rows())
    if (pair_label(pair) == text) return pair;
  std::string valid;
  for (const StructurePair& pair : ablation_rows()) valid += (valid.empty() ? "" : ", ") + pair_label(pair);
  throw ConfigError("unknown structure pair '" + text + "' (valid: " + valid + ")");
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "encoder,decoder,train_acc,final_loss\n";
  for (const AblationRow& r : rows)
    out += structure_label(r.pair.first) + "," + structure_label(r.pair.second) + "," +
           csv_number(r.train_accuracy) + "," + csv_number(r.final_loss) + "\n";
  return out;
}

int cmd_ablation(const AblationOptions& options, std::ostream& log) {
  RunConfig config = load_run_config(options.config);
  if (options.epochs) {
    config.train.epochs = *options.epochs;
    config.train.validate();
  }
  std::vector<StructurePair> pairs;
  for (const std::string& text : options.rows) pairs.push_back(parse_pair_label(text));
  if (pairs.empty()) pairs = ablation_rows();

  StagedDir stage(options.out);
  const RunData data = prepare_data(config, options.data);
  std::vector<AblationRow> rows;
  for (const StructurePair& pair : pairs) {
    RunConfig run = config;
    run.model.encoder_sta = pair.first;
    run.model.decoder_sta = pair.second;
    const TrainResult result = train(init_model(run.model, run.init_seed()), run.model, data.tokens,
                                     run.train, run.shuffle_seed());
    rows.push_back({pair, result.final_eval.accuracy, result.final_eval.loss});
    log << pair_label(pair) << "  acc " << fixed(result.final_eval.accuracy, 3) << "  loss "
        << fixed(result.final_eval.loss, 4) << "\n";
    log.flush();
  }
  json labels = json::array();
  for (const StructurePair& pair : pairs) labels.push_back(pair_label(pair));
  write_text(stage.path() / "config.json", config.to_json().dump(2) + "\n");
  write_text(stage.path() / "ablation.csv", ablation_csv(rows));
  json cfg = config.to_json();
  cfg["rows"] = labels;
  write_manifest(stage.path(), "ablation", config.seed, cfg, data_inputs(options.data));
  stage.commit();
  return kExitOk;
}

// ---- selftest -------------------------------------------------------------

int cmd_selftest(std::ostream& log) {
  const std::vector<SelftestCheck> checks = run_selftest();
  std::size_t failed = 0;
  for (const SelftestCheck& c : checks) {
    log << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) log << "  (" << c.detail << ")";
    log << "\n";
    failed += c.pass ? 0 : 1;
  }
  log << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitNumerical;
}

}  // namespace star
