#pragma once

#include <string>
#include <vector>

#include "star/model.hpp"
#include "star/tensor.hpp"

namespace star {

/// Full M x M matrix of a grouped layer: entry (a, b) for a group-a query
/// token and group-b key token comes from weights_ab, (b, a) from weights_ba,
/// and same-group entries are zero. Rows sum to 1 like a full attention map.
Tensor embed_grouped(const AttentionRecord& record, const TokenLayout& layout);

/// The record's attention as an M x M matrix in flattened token order.
Tensor layer_attention_matrix(const AttentionRecord& record, const TokenLayout& layout);
std::vector<Tensor> rollout_matrices(const RolloutInputs& inputs);

/// 0.5 A + 0.5 I, then each row divided by its sum.
Tensor residual_normalize(const Tensor& attention);

/// R = Ahat_L ... Ahat_1 for matrices given first layer first. Throws
/// ContractError unless all matrices are square, of equal size, with rows
/// summing to 1 within 1e-6.
Tensor attention_rollout(const std::vector<Tensor>& matrices);

/// Selected rows of the rollout, computed as row vectors pushed through the
/// layers from last to first (k x M work per layer instead of M x M).
Tensor rollout_rows(const std::vector<Tensor>& matrices, const std::vector<std::size_t>& rows);

enum class ImportanceSource {
  ClsTotal,        // the T cls_total tokens
  AllClassTokens,  // the 3T class tokens
};
std::string to_string(ImportanceSource source);
ImportanceSource parse_importance_source(const std::string& text);

/// Flattened indices of the tokens whose rollout rows are averaged.
std::vector<std::size_t> source_tokens(const TokenLayout& layout, ImportanceSource source);

struct RolloutReport {
  std::vector<double> frame_scores;  // T values, nonnegative, summing to 1
  std::vector<std::size_t> top_k;    // frames by descending score, ties by index
  ImportanceSource source = ImportanceSource::ClsTotal;
  std::vector<Tensor> layers;        // per-layer matrices, only when requested

  std::string to_json() const;
  /// "frame,score" header then one line per frame.
  std::string to_csv() const;
};

/// Averages the source tokens' rows of `rows_for_sources` ([k x M], aligned
/// with source_tokens), sums the received attention per frame and
/// renormalizes over frames.
RolloutReport frame_importance_from_rows(const Tensor& rows_for_sources, const TokenLayout& layout,
                                         ImportanceSource source = ImportanceSource::ClsTotal);

/// Same from a full M x M rollout. Throws ContractError if the layout's token
/// count differs from M.
RolloutReport frame_importance(const Tensor& rollout, const TokenLayout& layout,
                               ImportanceSource source = ImportanceSource::ClsTotal);

/// Forward pass with attention capture, then rollout and frame importance.
RolloutReport analyze_clip(const StarModelParams& params, const ModelConfig& config,
                           const ClipTokens& clip,
                           ImportanceSource source = ImportanceSource::ClsTotal,
                           bool keep_layers = false);

}  // namespace star
