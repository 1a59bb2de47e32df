#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "star/dataset.hpp"
#include "star/model.hpp"

namespace star {

struct TrainConfig {
  double learning_rate = 2e-4;
  double momentum = 0.9;
  std::size_t batch_size = 4;
  std::size_t epochs = 33;  // 33 x 6 batches = 198 steps on 24 clips

  void validate() const;
};

/// -log softmax(logits)[label] as a shape-[1] tensor.
Var cross_entropy(Var logits, std::size_t label);

/// Classical momentum: v <- momentum * v + g; p <- p - lr * v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double learning_rate,
              double momentum);
void sgd_step(StarModelParams& params, const StarModelParams& grads, StarModelParams& velocity,
              const TrainConfig& config);

/// Same structure as `params`, every tensor zero.
StarModelParams zeros_like(const StarModelParams& params);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps taken so far
  double loss = 0.0;      // mean over the epoch's samples, at the weights they were scored with
  double accuracy = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
};

EvalResult evaluate(const StarModelParams& params, const ModelConfig& config,
                    const std::vector<LabeledTokens>& data);

struct TrainResult {
  StarModelParams params;
  std::vector<EpochLog> log;
  std::size_t steps = 0;
  EvalResult final_eval;  // whole training set after the last step
};

/// Mini-batch SGD. Each epoch shuffles the clip order with a stream drawn from
/// `shuffle_seed`; batch gradients are the mean of per-clip gradients summed in
/// batch order. Throws ContractError on an empty dataset and NumericalError
/// when an epoch's loss is not finite.
TrainResult train(StarModelParams params, const ModelConfig& config,
                  const std::vector<LabeledTokens>& data, const TrainConfig& train_config,
                  std::uint64_t shuffle_seed,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Loss and gradients for one clip.
struct LossAndGrad {
  double loss = 0.0;
  Tensor logits;
  StarModelParams grads;
};
LossAndGrad loss_and_grad(const StarModelParams& params, const ModelConfig& config,
                          const ClipTokens& clip, std::size_t label);
double loss_only(const StarModelParams& params, const ModelConfig& config, const ClipTokens& clip,
                 std::size_t label);

struct GradcheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  double tolerance = 0.0;
  std::vector<GradcheckEntry> entries;
  bool pass() const;
  double max_rel_error() const;
};

/// |a - n| / max(|a|, |n|, 1e-6).
double gradcheck_relative_error(double analytic, double numeric);

struct NamedTensor {
  std::string name;
  Tensor* value;
};

/// Central differences with step h at `coordinates` random positions of each
/// tensor (all of them when the tensor is smaller), compared with
/// `analytic()`, which returns gradients aligned with `params`.
GradcheckReport gradcheck(const std::vector<NamedTensor>& params,
                          const std::function<double()>& loss,
                          const std::function<std::vector<Tensor>()>& analytic, double tolerance,
                          std::size_t coordinates = 10, double h = 1e-5, std::uint64_t seed = 1);

/// Gradient check of every named model tensor on one clip.
GradcheckReport gradcheck_model(StarModelParams params, const ModelConfig& config,
                                const ClipTokens& clip, std::size_t label, double tolerance,
                                std::size_t coordinates = 10, std::uint64_t seed = 1);

}  // namespace star
