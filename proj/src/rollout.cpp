#include "star/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "star/errors.hpp"
#include "star/kernels.hpp"

namespace star {

namespace {

void check_square_stochastic(const Tensor& a, std::size_t index, std::size_t m) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1))
    throw ContractError("rollout: layer " + std::to_string(index) + " matrix " +
                        shape_string(a.shape()) + " is not square");
  if (a.dim(0) != m)
    throw ContractError("rollout: layer " + std::to_string(index) + " has " +
                        std::to_string(a.dim(0)) + " tokens, expected " + std::to_string(m));
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.at(i, j);
    if (std::abs(s - 1.0) > 1e-6)
      throw ContractError("rollout: layer " + std::to_string(index) + " row " +
                          std::to_string(i) + " sums to " + std::to_string(s));
  }
}

std::size_t common_size(const std::vector<Tensor>& matrices) {
  if (matrices.empty()) throw ContractError("rollout: no attention matrices");
  const std::size_t m = matrices[0].rank() == 2 ? matrices[0].dim(0) : 0;
  for (std::size_t l = 0; l < matrices.size(); ++l) check_square_stochastic(matrices[l], l, m);
  return m;
}

}  // namespace

Tensor embed_grouped(const AttentionRecord& record, const TokenLayout& layout) {
  const GroupSplit& split = record.split;
  const std::size_t t_count = layout.frames;
  const std::size_t half = t_count / 2;
  const std::size_t s_count = layout.spatial();
  const std::size_t m = layout.token_count();
  const std::size_t g = s_count * half;
  if (split.frames != t_count || split.group_a.size() != half || split.group_b.size() != half)
    throw ContractError("embed_grouped: split does not match a layout with T=" +
                        std::to_string(t_count));
  if (record.weights_ab.shape() != Shape{g, g} || record.weights_ba.shape() != Shape{g, g})
    throw ContractError("embed_grouped: expected " + std::to_string(g) + "x" + std::to_string(g) +
                        " directional weights, got " + shape_string(record.weights_ab.shape()) +
                        " and " + shape_string(record.weights_ba.shape()));
  // Flattened group row s*half + j is full token s*T + group[j].
  std::vector<std::size_t> full_a(g), full_b(g);
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t j = 0; j < half; ++j) {
      full_a[s * half + j] = layout.token_index(s, split.group_a[j]);
      full_b[s * half + j] = layout.token_index(s, split.group_b[j]);
    }
  Tensor out({m, m});
  for (std::size_t q = 0; q < g; ++q)
    for (std::size_t k = 0; k < g; ++k) {
      out.at(full_a[q], full_b[k]) = record.weights_ab.at(q, k);
      out.at(full_b[q], full_a[k]) = record.weights_ba.at(q, k);
    }
  return out;
}

Tensor layer_attention_matrix(const AttentionRecord& record, const TokenLayout& layout) {
  if (record.kind == AttentionKind::Full) {
    if (record.weights.shape() != Shape{layout.token_count(), layout.token_count()})
      throw ContractError("rollout: " + record.name + " has weights " +
                          shape_string(record.weights.shape()) + " for " +
                          std::to_string(layout.token_count()) + " tokens");
    return record.weights;
  }
  return embed_grouped(record, layout);
}

std::vector<Tensor> rollout_matrices(const RolloutInputs& inputs) {
  std::vector<Tensor> out;
  out.reserve(inputs.records.size());
  for (const auto& rec : inputs.records) out.push_back(layer_attention_matrix(rec, inputs.layout));
  return out;
}

Tensor residual_normalize(const Tensor& attention) {
  const std::size_t m = attention.dim(0);
  Tensor out = attention;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.raw() + i * m;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = 0.5 * row[j] + (i == j ? 0.5 : 0.0);
      s += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= s;
  }
  return out;
}

Tensor attention_rollout(const std::vector<Tensor>& matrices) {
  const std::size_t m = common_size(matrices);
  Tensor result = residual_normalize(matrices[0]);
  for (std::size_t l = 1; l < matrices.size(); ++l) {
    const Tensor layer = residual_normalize(matrices[l]);
    Tensor next({m, m});
    kernels::gemm(false, false, m, m, m, layer.raw(), m, result.raw(), m, next.raw(), m, false);
    result = std::move(next);
  }
  return result;
}

Tensor rollout_rows(const std::vector<Tensor>& matrices, const std::vector<std::size_t>& rows) {
  const std::size_t m = common_size(matrices);
  const std::size_t k = rows.size();
  for (std::size_t r : rows)
    if (r >= m) throw ContractError("rollout_rows: row " + std::to_string(r) + " out of range");
  Tensor current({k, m});
  {
    const Tensor last = residual_normalize(matrices.back());
    for (std::size_t i = 0; i < k; ++i)
      std::copy_n(last.raw() + rows[i] * m, m, current.raw() + i * m);
  }
  for (std::size_t l = matrices.size() - 1; l-- > 0;) {
    const Tensor layer = residual_normalize(matrices[l]);
    Tensor next({k, m});
    kernels::gemm(false, false, k, m, m, current.raw(), m, layer.raw(), m, next.raw(), m, false);
    current = std::move(next);
  }
  return current;
}

std::string to_string(ImportanceSource source) {
  return source == ImportanceSource::ClsTotal ? "cls_total" : "all_class_tokens";
}

ImportanceSource parse_importance_source(const std::string& text) {
  if (text == "cls_total") return ImportanceSource::ClsTotal;
  if (text == "all_class_tokens") return ImportanceSource::AllClassTokens;
  throw ConfigError("unknown importance source '" + text +
                    "' (expected cls_total or all_class_tokens)");
}

std::vector<std::size_t> source_tokens(const TokenLayout& layout, ImportanceSource source) {
  std::vector<std::size_t> slots{layout.cls_total_slot()};
  if (source == ImportanceSource::AllClassTokens)
    slots = {layout.cls_glob_slot(), layout.cls_joint_slot(), layout.cls_total_slot()};
  std::vector<std::size_t> out;
  for (std::size_t s : slots)
    for (std::size_t t = 0; t < layout.frames; ++t) out.push_back(layout.token_index(s, t));
  return out;
}

RolloutReport frame_importance_from_rows(const Tensor& rows_for_sources, const TokenLayout& layout,
                                         ImportanceSource source) {
  const std::size_t m = layout.token_count();
  const std::vector<std::size_t> sources = source_tokens(layout, source);
  if (rows_for_sources.rank() != 2 || rows_for_sources.dim(0) != sources.size() ||
      rows_for_sources.dim(1) != m)
    throw ContractError("frame_importance: rows " + shape_string(rows_for_sources.shape()) +
                        " do not match a layout of " + std::to_string(m) + " tokens with " +
                        std::to_string(sources.size()) + " source tokens");
  std::vector<double> received(m, 0.0);
  for (std::size_t r = 0; r < sources.size(); ++r)
    for (std::size_t j = 0; j < m; ++j) received[j] += rows_for_sources.at(r, j);

  RolloutReport report;
  report.source = source;
  report.frame_scores.assign(layout.frames, 0.0);
  for (std::size_t s = 0; s < layout.spatial(); ++s)
    for (std::size_t t = 0; t < layout.frames; ++t)
      report.frame_scores[t] += received[layout.token_index(s, t)];
  const double total =
      std::accumulate(report.frame_scores.begin(), report.frame_scores.end(), 0.0);
  for (double& v : report.frame_scores) v /= total;
  report.top_k.resize(layout.frames);
  std::iota(report.top_k.begin(), report.top_k.end(), 0);
  std::stable_sort(report.top_k.begin(), report.top_k.end(), [&](std::size_t a, std::size_t b) {
    return report.frame_scores[a] > report.frame_scores[b];
  });
  return report;
}

RolloutReport frame_importance(const Tensor& rollout, const TokenLayout& layout,
                               ImportanceSource source) {
  const std::size_t m = layout.token_count();
  if (rollout.rank() != 2 || rollout.dim(0) != m || rollout.dim(1) != m)
    throw ContractError("frame_importance: rollout " + shape_string(rollout.shape()) +
                        " does not match a layout of " + std::to_string(m) + " tokens");
  const std::vector<std::size_t> sources = source_tokens(layout, source);
  Tensor rows({sources.size(), m});
  for (std::size_t r = 0; r < sources.size(); ++r)
    std::copy_n(rollout.raw() + sources[r] * m, m, rows.raw() + r * m);
  return frame_importance_from_rows(rows, layout, source);
}

RolloutReport analyze_clip(const StarModelParams& params, const ModelConfig& config,
                           const ClipTokens& clip, ImportanceSource source, bool keep_layers) {
  Tape tape;
  const StarModelVars vars = bind_params(tape, params, false);
  const ForwardResult fwd = model_forward(tape, vars, config, clip, true);
  std::vector<Tensor> matrices = rollout_matrices(fwd.rollout);
  const Tensor rows = rollout_rows(matrices, source_tokens(fwd.rollout.layout, source));
  RolloutReport report = frame_importance_from_rows(rows, fwd.rollout.layout, source);
  if (keep_layers) report.layers = std::move(matrices);
  return report;
}

std::string RolloutReport::to_json() const {
  nlohmann::json doc{{"frames", frame_scores.size()},
                     {"source", to_string(source)},
                     {"frame_scores", frame_scores},
                     {"top_k", top_k}};
  if (!layers.empty()) {
    nlohmann::json mats = nlohmann::json::array();
    for (const Tensor& t : layers) {
      std::vector<double> flat(t.data().begin(), t.data().end());
      mats.push_back({{"shape", t.shape()}, {"data", std::move(flat)}});
    }
    doc["layers"] = std::move(mats);
  }
  return doc.dump(2) + "\n";
}

std::string RolloutReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "frame,score\n";
  for (std::size_t t = 0; t < frame_scores.size(); ++t) out << t << ',' << frame_scores[t] << '\n';
  return out.str();
}

}  // namespace star
