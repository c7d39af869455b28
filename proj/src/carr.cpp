#include "deepattr/carr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepattr/evalx.hpp"
#include "deepattr/log.hpp"
#include "deepattr/parallel.hpp"

namespace deepattr {

std::string to_string(RefineLayout layout) {
  return layout == RefineLayout::MirrorGlobal ? "mirror_global" : "single";
}

std::string to_string(AlphaMode mode) {
  return mode == AlphaMode::AdaboostRule ? "adaboost_rule" : "grid_search";
}

RefineLayout parse_refine_layout(const std::string& s) {
  if (s == "mirror_global" || s == "mirror") return RefineLayout::MirrorGlobal;
  if (s == "single") return RefineLayout::Single;
  throw std::invalid_argument("unknown refine layout: " + s);
}

AlphaMode parse_alpha_mode(const std::string& s) {
  if (s == "adaboost_rule" || s == "adaboost") return AlphaMode::AdaboostRule;
  if (s == "grid_search" || s == "grid") return AlphaMode::GridSearch;
  throw std::invalid_argument("unknown alpha mode: " + s);
}

void CarrConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (!(beta > 0.0) || beta > 1.0) throw std::invalid_argument("beta must lie in (0,1]");
  if (min_top_k == 0) throw std::invalid_argument("min_top_k must be positive");
  if (refine_layer.empty()) throw std::invalid_argument("refine layer is empty");
  if (score_threshold && !std::isfinite(*score_threshold)) {
    throw std::invalid_argument("score threshold must be finite");
  }
}

double alpha_from_error(double error) {
  // evaluated on the lower half so that alpha(1 - e) = -alpha(e) holds in floating point
  if (error > 0.5) return -alpha_from_error(1.0 - error);
  const double e = std::max(error, kAlphaEpsilon);
  return std::log((1.0 - e) / e);
}

std::size_t context_size(const CarrConfig& config, std::size_t num_regions) {
  const auto k = static_cast<std::size_t>(std::llround(config.beta * static_cast<double>(num_regions)));
  return std::min(num_regions, std::max(config.min_top_k, k));
}

std::vector<std::size_t> select_context_regions(std::span<const double> scores,
                                                const CarrConfig& config) {
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("no regions to select from");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> out;
  if (config.score_threshold) {
    for (std::size_t k = 0; k < n; ++k) {
      if (scores[k] > *config.score_threshold) out.push_back(k);
    }
    if (out.empty()) out.push_back(order.front());
  } else {
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(context_size(config, n)));
    std::sort(out.begin(), out.end());
  }
  return out;
}

double embedded_region_score(const CarrStage& stage, const ImageRecord& record, std::size_t region) {
  const FeatureTag& tag = stage.model.tag;
  const CodeMatrix& codes = record.layer(tag.layer);
  const std::size_t dim = codes.cols();
  if (stage.model.dim() != dim * tag.spec.num_blocks()) {
    throw std::invalid_argument("stage model of dimension " + std::to_string(stage.model.dim()) +
                                " does not fit layer " + tag.layer + " (" + std::to_string(dim) +
                                " dims x " + std::to_string(tag.spec.num_blocks()) + " blocks)");
  }
  const auto row = codes.row(region);
  double s = stage.model.bias;
  for (std::size_t b : region_blocks(record.proposals.at(region).bbox, record.frame(), tag.spec)) {
    const double* w = stage.model.weights.data() + b * dim;
    for (std::size_t d = 0; d < dim; ++d) s += w[d] * row[d];
  }
  return s;
}

std::vector<double> region_scores(std::span<const CarrStage> prefix, const ImageRecord& record) {
  std::vector<std::string> missing;
  for (const auto& st : prefix) {
    if (!record.codes.contains(st.model.tag.layer) &&
        std::find(missing.begin(), missing.end(), st.model.tag.layer) == missing.end()) {
      missing.push_back(st.model.tag.layer);
    }
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw std::invalid_argument("image " + record.id + " lacks codes for layer(s): " + names);
  }
  std::vector<double> scores(record.num_regions(), 0.0);
  for (std::size_t k = 0; k < scores.size(); ++k) {
    for (const auto& st : prefix) scores[k] += st.alpha * embedded_region_score(st, record, k);
  }
  return scores;
}

PoolingSpec refine_spec(const PoolingSpec& global, const CarrConfig& config) {
  PoolingSpec s = global;
  s.op = config.refine_op;
  if (config.refine_layout == RefineLayout::Single) s.layout = Layout::Single;
  s.max_regions = 0;
  return s;
}

std::vector<std::size_t> context_regions(std::span<const CarrStage> prefix,
                                         const CarrConfig& config, const ImageRecord& record) {
  if (prefix.empty()) throw std::invalid_argument("empty stage prefix");
  const auto all = region_scores(prefix, record);
  const auto candidates = candidate_regions(record, prefix.front().model.tag.spec);
  std::vector<double> cand_scores;
  cand_scores.reserve(candidates.size());
  for (std::size_t k : candidates) cand_scores.push_back(all[k]);
  std::vector<std::size_t> selected;
  for (std::size_t pos : select_context_regions(cand_scores, config)) {
    selected.push_back(candidates[pos]);
  }
  return selected;
}

std::vector<double> stage_feature(std::span<const CarrStage> prefix, const FeatureTag& tag,
                                  const CarrConfig& config, const ImageRecord& record) {
  const auto selected = context_regions(prefix, config, record);
  return pool_regions(record, tag.layer, tag.spec, selected).values;
}

namespace {

double training_error(const LinearModel& model, const FeatureMatrix& x, std::span<const int> y) {
  return 1.0 - accuracy(model, x, y);
}

FeatureMatrix global_features(std::span<const ImageRecord> records, const FeatureTag& tag) {
  FeatureMatrix x;
  for (const auto& r : records) x.push_row(pool_image(r, tag.layer, tag.spec).values);
  return x;
}

FeatureMatrix stage_features(std::span<const CarrStage> prefix, const FeatureTag& tag,
                             const CarrConfig& config, std::span<const ImageRecord> records) {
  FeatureMatrix x;
  for (const auto& r : records) x.push_row(stage_feature(prefix, tag, config, r));
  return x;
}

double fused_ap(const std::vector<double>& base_scores, const std::vector<double>& stage_scores,
                double alpha, std::span<const int> y, std::span<const ImageRecord> records) {
  std::vector<RankedItem> items;
  for (std::size_t i = 0; i < y.size(); ++i) {
    items.push_back({records[i].id, base_scores[i] + alpha * stage_scores[i], y[i] > 0, false});
  }
  return average_precision(RankedList(std::move(items)));
}

CarrEnsemble train_category(std::size_t c, const CarrTrainData& train, const LinearModel& base,
                            const PoolingSpec& global_spec, const CarrConfig& config,
                            const TrainConfig& train_config, const CarrTrainData* validation) {
  CarrEnsemble ens;
  ens.category = base.category;
  ens.config = config;

  const auto y = binary_labels(*train.labels, c);
  std::vector<int> vy;
  const bool has_val = validation != nullptr && !validation->records.empty();
  if (has_val) vy = binary_labels(*validation->labels, c);

  CarrStage stage0;
  stage0.model = base;
  stage0.model.tag.spec = global_spec;
  stage0.model.tag.stage = 0;
  stage0.alpha = 1.0;
  {
    const FeatureMatrix gx = global_features(train.records, stage0.model.tag);
    stage0.train_error = training_error(stage0.model, gx, y);
  }
  ens.stages.push_back(std::move(stage0));

  FeatureTag tag;
  tag.layer = config.refine_layer;
  tag.spec = refine_spec(global_spec, config);

  // fused score of the current ensemble on the alpha-selection images
  const std::span<const ImageRecord> sel_records = has_val ? validation->records : train.records;
  const std::span<const int> sel_y = has_val ? std::span<const int>(vy) : std::span<const int>(y);
  std::vector<double> fused;
  if (config.alpha_mode == AlphaMode::GridSearch) {
    for (const auto& r : sel_records) fused.push_back(carr_image_score(ens, r));
  }

  for (int t = 1; t <= config.iterations; ++t) {
    tag.stage = t;
    const std::span<const CarrStage> prefix(ens.stages);
    const FeatureMatrix x = stage_features(prefix, tag, config, train.records);
    FeatureMatrix vx;
    if (has_val) vx = stage_features(prefix, tag, config, validation->records);

    CarrStage st;
    try {
      st.model = train_with_selection(x, y, has_val ? &vx : nullptr, vy, train_config, ens.category);
    } catch (const std::invalid_argument& e) {
      log().warn("category {} stage {}: {}; keeping {} stage(s)", ens.category, t, e.what(),
                 ens.stages.size());
      break;
    }
    st.model.tag = tag;
    st.train_error = training_error(st.model, x, y);
    if (config.alpha_mode == AlphaMode::AdaboostRule) {
      st.alpha = alpha_from_error(st.train_error);
    } else {
      const FeatureMatrix& sx = has_val ? vx : x;
      std::vector<double> stage_scores;
      for (std::size_t i = 0; i < sx.rows(); ++i) stage_scores.push_back(score(st.model, sx.row(i)));
      static constexpr double kGrid[] = {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
      double best_ap = -1.0;
      for (double a : kGrid) {
        const double ap = fused_ap(fused, stage_scores, a, sel_y, sel_records);
        if (ap > best_ap) {
          best_ap = ap;
          st.alpha = a;
        }
      }
      for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += st.alpha * stage_scores[i];
    }
    log().debug("category {} stage {}: error {:.4f} alpha {:.4f}", ens.category, t,
                st.train_error, st.alpha);
    ens.stages.push_back(std::move(st));
  }
  return ens;
}

}  // namespace

std::vector<CarrEnsemble> carr_train(const CarrTrainData& train,
                                     const std::vector<std::optional<LinearModel>>& base_models,
                                     const PoolingSpec& global_spec, const CarrConfig& config,
                                     const TrainConfig& train_config,
                                     const CarrTrainData* validation, std::size_t jobs) {
  config.validate();
  global_spec.validate();
  if (train.labels == nullptr || train.labels->size() != train.records.size()) {
    throw std::invalid_argument("carr_train needs one label row per training record");
  }
  for (const auto& r : train.records) {
    if (!r.codes.contains(config.refine_layer)) {
      throw std::invalid_argument("image " + r.id + " lacks codes for layer(s): " +
                                  config.refine_layer);
    }
  }
  std::vector<std::optional<CarrEnsemble>> slots(base_models.size());
  parallel_for(base_models.size(), jobs, [&](std::size_t c) {
    if (!base_models[c]) return;
    slots[c] = train_category(c, train, *base_models[c], global_spec, config, train_config,
                              validation);
  });
  std::vector<CarrEnsemble> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

double carr_image_score(const CarrEnsemble& ensemble, const ImageRecord& record) {
  if (ensemble.stages.empty()) throw std::invalid_argument("empty ensemble for " + ensemble.category);
  const auto& base = ensemble.stages.front();
  double s = base.alpha * score(base.model, pool_image(record, base.model.tag.layer,
                                                       base.model.tag.spec).values);
  const std::span<const CarrStage> stages(ensemble.stages);
  for (std::size_t t = 1; t < stages.size(); ++t) {
    const auto feature =
        stage_feature(stages.first(t), stages[t].model.tag, ensemble.config, record);
    s += stages[t].alpha * score(stages[t].model, feature);
  }
  return s;
}

CarrPrediction carr_predict(std::span<const CarrEnsemble> ensembles, const ImageRecord& record) {
  if (ensembles.empty()) throw std::invalid_argument("no ensembles to predict with");
  CarrPrediction out;
  for (const auto& e : ensembles) out.scores.push_back(carr_image_score(e, record));
  out.label = static_cast<std::size_t>(
      std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  return out;
}

}  // namespace deepattr
