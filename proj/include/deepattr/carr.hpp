#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepattr/linclass.hpp"
#include "deepattr/pooling.hpp"
#include "deepattr/record.hpp"

namespace deepattr {

enum class RefineLayout { MirrorGlobal, Single };
enum class AlphaMode { AdaboostRule, GridSearch };

std::string to_string(RefineLayout layout);
std::string to_string(AlphaMode mode);
RefineLayout parse_refine_layout(const std::string& s);
AlphaMode parse_alpha_mode(const std::string& s);

struct CarrConfig {
  int iterations = 2;
  /// Fraction K/N of regions kept as context.
  double beta = 0.025;
  std::size_t min_top_k = 1;
  std::string refine_layer = "fc1";
  PoolOp refine_op = PoolOp::Average;
  RefineLayout refine_layout = RefineLayout::MirrorGlobal;
  /// When set, context = regions scoring above it instead of the top K.
  std::optional<double> score_threshold;
  AlphaMode alpha_mode = AlphaMode::AdaboostRule;

  void validate() const;
  friend bool operator==(const CarrConfig&, const CarrConfig&) = default;
};

struct CarrStage {
  LinearModel model;
  double alpha = 1.0;
  double train_error = 0.0;

  friend bool operator==(const CarrStage&, const CarrStage&) = default;
};

/// Stage 0 is the base classifier on globally pooled features, with alpha fixed to 1.
struct CarrEnsemble {
  std::string category;
  std::vector<CarrStage> stages;
  CarrConfig config;

  friend bool operator==(const CarrEnsemble&, const CarrEnsemble&) = default;
};

inline constexpr double kAlphaEpsilon = 1e-6;

/// ln((1-E)/E) with E clamped to [1e-6, 1 - 1e-6].
double alpha_from_error(double error);

/// K = max(min_top_k, round(beta * N)), capped at N.
std::size_t context_size(const CarrConfig& config, std::size_t num_regions);

/// Positions into `scores` of the context regions, ascending. Top-K ties go to the lower
/// position; threshold mode falls back to the best single region when nothing passes.
std::vector<std::size_t> select_context_regions(std::span<const double> scores,
                                                const CarrConfig& config);

/// Score of one region under a single stage: the region's code row placed into the
/// stage's own layout block(s), zeros elsewhere.
double embedded_region_score(const CarrStage& stage, const ImageRecord& record, std::size_t region);

/// S_k = sum over the prefix of alpha_s * embedded score, for every region of the record.
std::vector<double> region_scores(std::span<const CarrStage> prefix, const ImageRecord& record);

/// Pooling spec of refinement stages derived from the global one.
PoolingSpec refine_spec(const PoolingSpec& global, const CarrConfig& config);

/// Context regions of one image under the given stage prefix, restricted to the regions
/// the base stage's spec keeps.
std::vector<std::size_t> context_regions(std::span<const CarrStage> prefix,
                                         const CarrConfig& config, const ImageRecord& record);

/// Feature of one image for a refinement stage: context regions chosen by the prefix,
/// re-pooled from tag.layer under tag.spec.
std::vector<double> stage_feature(std::span<const CarrStage> prefix, const FeatureTag& tag,
                                  const CarrConfig& config, const ImageRecord& record);

struct CarrTrainData {
  std::span<const ImageRecord> records;
  const LabelMatrix* labels = nullptr;
};

/// Learns T refinement stages per category on top of the base models. Categories without a
/// base model are skipped. Validation data, when given, drives C and grid-searched alpha.
std::vector<CarrEnsemble> carr_train(const CarrTrainData& train,
                                     const std::vector<std::optional<LinearModel>>& base_models,
                                     const PoolingSpec& global_spec, const CarrConfig& config,
                                     const TrainConfig& train_config,
                                     const CarrTrainData* validation = nullptr,
                                     std::size_t jobs = 1);

struct CarrPrediction {
  std::vector<double> scores;  // one per ensemble, in ensemble order
  std::size_t label = 0;       // argmax, ties to the lower index
};

/// Fused image score for one category: sum_t alpha_t * h_t(F_I^(t)).
double carr_image_score(const CarrEnsemble& ensemble, const ImageRecord& record);

CarrPrediction carr_predict(std::span<const CarrEnsemble> ensembles, const ImageRecord& record);

}  // namespace deepattr
