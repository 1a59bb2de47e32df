#include "star/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "star/errors.hpp"
#include "star/random.hpp"

namespace star {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  if (z.rank() != 1 || z.size() == 0) throw DimensionError("cross_entropy expects logits [K]");
  if (label >= z.size())
    throw ContractError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(z.size()) + " classes");
  double mx = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) mx = std::max(mx, z[i]);
  Tensor probs(z.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += (probs[i] = std::exp(z[i] - mx));
  for (std::size_t i = 0; i < z.size(); ++i) probs[i] /= total;
  const double loss = std::log(total) + mx - z[label];
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [probs = std::move(probs), label](const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        Tensor& dz = *grads[0];
        for (std::size_t i = 0; i < probs.size(); ++i)
          dz[i] += g[0] * (probs[i] - (i == label ? 1.0 : 0.0));
      });
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double learning_rate,
              double momentum) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape())
    throw ContractError("sgd_step: parameter " + shape_string(param.shape()) + ", gradient " +
                        shape_string(grad.shape()) + ", velocity " +
                        shape_string(velocity.shape()));
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= learning_rate * velocity[i];
  }
}

namespace {

std::vector<Tensor*> tensor_list(StarModelParams& p) {
  std::vector<Tensor*> out;
  StarModelParams::fields(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> tensor_list(const StarModelParams& p) {
  std::vector<const Tensor*> out;
  StarModelParams::fields(p, [&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

}  // namespace

void sgd_step(StarModelParams& params, const StarModelParams& grads, StarModelParams& velocity,
              const TrainConfig& config) {
  auto p = tensor_list(params);
  auto g = tensor_list(grads);
  auto v = tensor_list(velocity);
  if (p.size() != g.size() || p.size() != v.size())
    throw ContractError("sgd_step: parameter, gradient and velocity structures differ");
  for (std::size_t i = 0; i < p.size(); ++i)
    sgd_step(*p[i], *g[i], *v[i], config.learning_rate, config.momentum);
}

StarModelParams zeros_like(const StarModelParams& params) {
  return params.map([](const Tensor& t) { return Tensor::zeros(t.shape()); });
}

LossAndGrad loss_and_grad(const StarModelParams& params, const ModelConfig& config,
                          const ClipTokens& clip, std::size_t label) {
  Tape tape;
  const StarModelVars vars = bind_params(tape, params, true);
  const ForwardResult fwd = model_forward(tape, vars, config, clip);
  const Var loss = cross_entropy(fwd.logits, label);
  tape.backward(loss);
  LossAndGrad out;
  out.loss = loss.value()[0];
  out.logits = fwd.logits.value();
  out.grads = vars.map([&](const Var& v) { return tape.grad(v); });
  return out;
}

double loss_only(const StarModelParams& params, const ModelConfig& config, const ClipTokens& clip,
                 std::size_t label) {
  Tape tape;
  const StarModelVars vars = bind_params(tape, params, false);
  return cross_entropy(model_forward(tape, vars, config, clip).logits, label).value()[0];
}

EvalResult evaluate(const StarModelParams& params, const ModelConfig& config,
                    const std::vector<LabeledTokens>& data) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  EvalResult out;
  std::size_t correct = 0;
  for (const auto& item : data) {
    Tape tape;
    const StarModelVars vars = bind_params(tape, params, false);
    const Var logits = model_forward(tape, vars, config, item.tokens).logits;
    out.loss += cross_entropy(logits, item.label).value()[0];
    const std::size_t guess = predict(logits.value());
    out.predictions.push_back(guess);
    correct += guess == item.label;
  }
  out.loss /= static_cast<double>(data.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return out;
}

TrainResult train(StarModelParams params, const ModelConfig& config,
                  const std::vector<LabeledTokens>& data, const TrainConfig& train_config,
                  std::uint64_t shuffle_seed, const std::function<void(const EpochLog&)>& on_epoch) {
  train_config.validate();
  if (data.empty()) throw ContractError("train: empty dataset");
  for (const auto& item : data) {
    if (item.tokens.grid.frames() % 2 != 0) throw ContractError("train: T must be even in every clip");
    if (item.label >= config.num_classes)
      throw ContractError("train: label " + std::to_string(item.label) + " >= num_classes");
  }

  TrainResult result;
  StarModelParams velocity = zeros_like(params);
  Rng rng(shuffle_seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += train_config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + train_config.batch_size);
      StarModelParams batch_grad = zeros_like(params);
      auto acc = tensor_list(batch_grad);
      for (std::size_t b = begin; b < end; ++b) {
        const LabeledTokens& item = data[order[b]];
        LossAndGrad lg = loss_and_grad(params, config, item.tokens, item.label);
        loss_sum += lg.loss;
        correct += predict(lg.logits) == item.label;
        const auto g = tensor_list(lg.grads);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i]->add_scaled(*g[i], 1.0);
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (Tensor* t : acc)
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= inv;
      sgd_step(params, batch_grad, velocity, train_config);
      ++result.steps;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.steps = result.steps;
    entry.loss = loss_sum / static_cast<double>(data.size());
    entry.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (!std::isfinite(entry.loss))
      throw NumericalError("training loss became non-finite in epoch " + std::to_string(epoch));
  }
  result.final_eval = evaluate(params, config, data);
  result.params = std::move(params);
  return result;
}

bool GradcheckReport::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

double GradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const std::vector<NamedTensor>& params,
                          const std::function<double()>& loss,
                          const std::function<std::vector<Tensor>()>& analytic, double tolerance,
                          std::size_t coordinates, double h, std::uint64_t seed) {
  if (!(tolerance > 0.0)) throw ContractError("gradcheck: tolerance must be positive");
  const std::vector<Tensor> grads = analytic();
  if (grads.size() != params.size())
    throw ContractError("gradcheck: analytic gradient count does not match parameters");
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng rng(seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = *params[p].value;
    if (grads[p].shape() != value.shape())
      throw ContractError("gradcheck: gradient shape mismatch for " + params[p].name);
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > coordinates) {
      rng.shuffle(coords);
      coords.resize(coordinates);
    }
    GradcheckEntry entry;
    entry.name = params[p].name;
    entry.coordinates = coords.size();
    for (std::size_t i : coords) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = loss();
      value[i] = saved - h;
      const double down = loss();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      entry.max_rel_error =
          std::max(entry.max_rel_error, gradcheck_relative_error(grads[p][i], numeric));
    }
    entry.pass = entry.max_rel_error <= tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradcheckReport gradcheck_model(StarModelParams params, const ModelConfig& config,
                                const ClipTokens& clip, std::size_t label, double tolerance,
                                std::size_t coordinates, std::uint64_t seed) {
  std::vector<NamedTensor> named;
  StarModelParams::fields(params, [&](const std::string& name, Tensor& t) {
    named.push_back({name, &t});
  });
  return gradcheck(
      named, [&] { return loss_only(params, config, clip, label); },
      [&] {
        const LossAndGrad lg = loss_and_grad(params, config, clip, label);
        std::vector<Tensor> out;
        for (const Tensor* t : tensor_list(lg.grads)) out.push_back(*t);
        return out;
      },
      tolerance, coordinates, 1e-5, seed);
}

}  // namespace star
