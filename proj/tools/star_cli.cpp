#include <iostream>

#include "CLI11.hpp"
#include "star/errors.hpp"
#include "star/harness.hpp"
#include "star/kernels.hpp"

using namespace star;

int main(int argc, char** argv) {
  kernels::configure_allocator();
  CLI::App app{"Spatio-temporal cross-attention action recognition on synthetic clips"};
  app.require_subcommand(1);

  GenDataOptions gen;
  std::size_t clips_per_class = gen.data.clips_per_class;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic clip dataset");
  gen_cmd->add_option("--classes", gen.data.classes, "Number of classes (2 or 3)")->capture_default_str();
  gen_cmd->add_option("--clips", clips_per_class, "Clips per class")->capture_default_str();
  gen_cmd->add_option("--frames", gen.data.frames, "Frames per clip (even)")->capture_default_str();
  gen_cmd->add_option("--joints", gen.data.joints, "Joints per pose")->capture_default_str();
  gen_cmd->add_option("--height", gen.data.height, "Frame height in pixels")->capture_default_str();
  gen_cmd->add_option("--width", gen.data.width, "Frame width in pixels")->capture_default_str();
  gen_cmd->add_option("--window-start", gen.data.window_start, "First moving frame")->capture_default_str();
  gen_cmd->add_option("--window-length", gen.data.window_length, "Moving frames (0: all)")->capture_default_str();
  gen_cmd->add_option("--noise", gen.data.noise, "Pixel noise std")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Run seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory (must not exist)")->required();

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_opts.config, "Run config JSON")->required();
  train_cmd->add_option("--data", train_opts.data, "Dataset directory (default: generate from config)");
  train_cmd->add_option("--out", train_opts.out, "Output directory (must not exist)")->required();

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_opts.data, "Dataset directory")->required();
  eval_cmd->add_option("--out", eval_opts.out, "Output directory (must not exist)")->required();

  GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check, all structure pairs");
  grad_cmd->add_option("--dim", grad.dim, "Model dimension D")->capture_default_str();
  grad_cmd->add_option("--tol", grad.tolerance, "Max relative error")->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "Seed")->capture_default_str();
  grad_cmd->add_option("--coords", grad.coordinates, "Coordinates per tensor")->capture_default_str();
  grad_cmd->add_option("--out", grad.out, "Write a report directory");

  ComplexityOptions complexity;
  auto* cx_cmd = app.add_subcommand("complexity", "Closed-form vs counted attention dot products");
  cx_cmd->add_option("--S", complexity.spatial, "Spatial sizes")->delimiter(',')->capture_default_str();
  cx_cmd->add_option("--T", complexity.frames, "Frame counts, paired with --S")->delimiter(',')->capture_default_str();
  cx_cmd->add_option("--out", complexity.out, "Write a report directory");

  RolloutOptions roll;
  std::string source = to_string(roll.source);
  auto* roll_cmd = app.add_subcommand("rollout", "Frame importance by attention rollout");
  roll_cmd->add_option("--checkpoint", roll.checkpoint, "Checkpoint directory")->required();
  roll_cmd->add_option("--clip", roll.clip, "Clip JSON file")->required();
  roll_cmd->add_option("--out", roll.out, "Report JSON path; the CSV is written next to it")->required();
  roll_cmd->add_option("--source", source, "cls_total or all_class_tokens")->capture_default_str();
  roll_cmd->add_flag("--layers", roll.layers, "Include per-layer matrices in the report");

  AblationOptions ablation;
  auto* abl_cmd = app.add_subcommand("ablation", "Train every attention-structure pair");
  abl_cmd->add_option("--config", ablation.config, "Run config JSON")->required();
  abl_cmd->add_option("--data", ablation.data, "Dataset directory (default: generate from config)");
  abl_cmd->add_option("--out", ablation.out, "Output directory (must not exist)")->required();
  abl_cmd->add_option("--rows", ablation.rows, "Subset of pairs such as F-Z/F-B")->delimiter(',');
  abl_cmd->add_option("--epochs", ablation.epochs, "Override the configured epochs");

  auto* self_cmd = app.add_subcommand("selftest", "Run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) {
      gen.data.clips_per_class = clips_per_class;
      return cmd_gen_data(gen, std::cout);
    }
    if (*train_cmd) return cmd_train(train_opts, std::cout);
    if (*eval_cmd) return cmd_eval(eval_opts, std::cout);
    if (*grad_cmd) return cmd_gradcheck(grad, std::cout);
    if (*cx_cmd) return cmd_complexity(complexity, std::cout);
    if (*roll_cmd) {
      roll.source = parse_importance_source(source);
      return cmd_rollout(roll, std::cout);
    }
    if (*abl_cmd) return cmd_ablation(ablation, std::cout);
    if (*self_cmd) return cmd_selftest(std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
