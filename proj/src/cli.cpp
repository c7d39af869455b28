#include "deepattr/cli.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "deepattr/carr.hpp"
#include "deepattr/dataio.hpp"
#include "deepattr/evalx.hpp"
#include "deepattr/log.hpp"
#include "deepattr/parallel.hpp"
#include "deepattr/synth.hpp"

namespace deepattr {

namespace {

std::vector<double> parse_doubles(const std::string& csv, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad value '" + item + "' in " + what);
    }
  }
  if (out.empty()) throw std::invalid_argument(what + " is empty");
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& csv, const std::string& what) {
  std::vector<std::size_t> out;
  for (double v : parse_doubles(csv, what)) {
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw std::invalid_argument(what + " needs positive integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

/// Two-column-or-more table with left-aligned first column.
void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == 0) out << std::left << std::setw(static_cast<int>(width[c])) << r[c];
      else out << "  " << std::right << std::setw(static_cast<int>(width[c])) << r[c];
    }
    out << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

json report_json(const MetricReport& r) {
  return json{{"metric", r.metric}, {"value", r.value}, {"per_category", r.per_category}};
}

void print_report(std::ostream& out, const MetricReport& r, const std::string& key_name) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [k, v] : r.per_category) rows.push_back({k, fixed(v)});
  rows.push_back({"mean", fixed(r.value)});
  print_table(out, {key_name, r.metric}, rows);
}

/// Resolved flags of a subcommand as JSON.
json echo_flags(const CLI::App& sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      flags[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

void write_echo(const fs::path& target, const CLI::App& sub, std::uint64_t seed) {
  write_json(target, json{{"command", sub.get_name()}, {"flags", echo_flags(sub)}, {"seed", seed}});
}

fs::path echo_path(const fs::path& out) {
  fs::path p = out;
  p += ".config.json";
  return p;
}

std::vector<std::string> all_split_ids(const Dataset& ds) {
  std::vector<std::string> ids;
  for (const char* s : {"train", "val", "test"}) {
    for (auto& id : ds.split(s)) ids.push_back(std::move(id));
  }
  return ids;
}

struct Options {
  std::size_t jobs = 0;
  std::uint64_t seed = 0;

  // synth
  std::string spec_path;
  std::string out;

  // shared inputs
  std::string manifest;
  std::string features;
  std::string base;
  std::string ensemble;
  std::string scores;
  std::string groups;
  std::string annotations;
  std::string split = "test";

  // pool
  std::string layer = "softmax";
  std::string op = "max";
  std::string layout = "multiscale";
  bool rootsift = true;
  std::string grid_sides = "1,2,4";
  std::string scale_bounds = "0.0625,0.125,0.25,0.5";
  std::size_t top_k = 0;

  // train
  std::string c_grid = "0.01,0.1,1,10,100";
  double tolerance = 1e-4;
  int max_passes = 10000;
  double positive_weight = 1.0;

  // carr
  double beta = 0.025;
  int iters = 2;
  std::string refine_layer = "fc1";
  std::string refine_op = "avg";
  std::string refine_layout = "mirror_global";
  std::string alpha_mode = "adaboost_rule";
  double threshold = 0.0;
  std::size_t min_top_k = 1;

  // eval
  std::string metric = "map";
  std::string ap_variant = "all";
  std::string protocol = "holidays";
  std::string k_list = "1,10,100,1000";
  double iou = 0.5;

  // backtrack
  std::string image;
  std::string category;
  std::size_t top = 10;
};

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.cost_grid = parse_doubles(o.c_grid, "--c-grid");
  c.tolerance = o.tolerance;
  c.max_passes = o.max_passes;
  c.seed = o.seed;
  c.positive_weight = o.positive_weight;
  c.validate();
  return c;
}

int cmd_synth(const Options& o, const CLI::App& sub, std::ostream& out) {
  SyntheticSpec spec;
  if (!o.spec_path.empty()) spec = synthetic_spec_from_json(read_json(o.spec_path));
  if (sub.get_option("--seed")->count() > 0) spec.seed = o.seed;
  const SyntheticDataset data = generate_synthetic(spec);
  const fs::path manifest = write_synthetic(data, o.out);
  write_json(fs::path(o.out) / "synth_spec.json", synthetic_spec_to_json(spec));
  write_echo(fs::path(o.out) / "run_config.json", sub, spec.seed);
  out << "wrote " << data.images.size() << " images to " << manifest.string() << "\n";
  return 0;
}

int cmd_pool(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  PoolingSpec spec;
  spec.op = parse_pool_op(o.op);
  spec.layout = parse_layout(o.layout);
  spec.rootsift = o.rootsift;
  spec.intervals = ScaleIntervals(parse_doubles(o.scale_bounds, "--scale-bounds"));
  spec.grid_sides.clear();
  for (std::size_t s : parse_counts(o.grid_sides, "--grid-sides")) spec.grid_sides.push_back(static_cast<int>(s));
  spec.max_regions = o.top_k;
  spec.validate();

  FeatureSet fs_out;
  fs_out.layer = o.layer;
  fs_out.spec = spec;
  fs_out.ids = all_split_ids(ds);
  fs_out.values.resize(fs_out.ids.size());
  parallel_for(fs_out.ids.size(), o.jobs, [&](std::size_t i) {
    const ImageRecord r = ds.load_record(fs_out.ids[i], {o.layer});
    fs_out.values[i] = pool_image(r, o.layer, spec).values;
  });
  save_features(o.out, fs_out);
  write_echo(echo_path(o.out), sub, o.seed);
  print_table(out, {"images", "dim", "layer", "layout", "op"},
              {{std::to_string(fs_out.ids.size()),
                std::to_string(fs_out.values.empty() ? 0 : fs_out.values.front().size()), o.layer,
                to_string(spec.layout), to_string(spec.op)}});
  return 0;
}

struct SplitFeatures {
  FeatureMatrix x;
  LabelMatrix labels;
};

SplitFeatures split_features(const Dataset& ds, const FeatureSet& f, const std::string& split) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < f.ids.size(); ++i) pos[f.ids[i]] = i;
  SplitFeatures out;
  for (const auto& id : ds.split(split)) {
    const auto it = pos.find(id);
    if (it == pos.end()) throw std::invalid_argument("features file lacks image " + id);
    out.x.push_row(f.values[it->second]);
    out.labels.push_back(ds.label_vector(id));
  }
  return out;
}

int cmd_train(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  const FeatureSet f = load_features(o.features);
  const TrainConfig cfg = train_config(o);
  const SplitFeatures tr = split_features(ds, f, "train");
  const SplitFeatures va = split_features(ds, f, "val");
  if (tr.x.rows() == 0) throw std::invalid_argument("train split is empty");
  const bool has_val = va.x.rows() > 0;
  const OvrResult res = train_ovr(tr.x, tr.labels, ds.categories(), cfg, has_val ? &va.x : nullptr,
                                  has_val ? &va.labels : nullptr, o.jobs);
  std::vector<LinearModel> models;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t c = 0; c < res.models.size(); ++c) {
    if (!res.models[c]) {
      rows.push_back({ds.categories()[c], "-", "omitted"});
      continue;
    }
    LinearModel m = *res.models[c];
    m.tag = FeatureTag{f.layer, f.spec, 0};
    models.push_back(std::move(m));
    rows.push_back({ds.categories()[c], fixed(res.selections[c].cost, 2), "ok"});
  }
  save_models(o.out, models);
  write_echo(echo_path(o.out), sub, o.seed);
  print_table(out, {"category", "C", "status"}, rows);
  return 0;
}

std::vector<std::string> layers_of(const std::vector<CarrEnsemble>& ensembles) {
  std::vector<std::string> layers;
  for (const auto& e : ensembles) {
    for (const auto& s : e.stages) {
      if (std::find(layers.begin(), layers.end(), s.model.tag.layer) == layers.end()) {
        layers.push_back(s.model.tag.layer);
      }
    }
  }
  return layers;
}

int cmd_carr_train(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  const std::vector<LinearModel> base = load_models(o.base);
  if (base.empty()) throw std::invalid_argument("no base models in " + o.base);
  CarrConfig cfg;
  cfg.iterations = o.iters;
  cfg.beta = o.beta;
  cfg.min_top_k = o.min_top_k;
  cfg.refine_layer = o.refine_layer;
  cfg.refine_op = parse_pool_op(o.refine_op);
  cfg.refine_layout = parse_refine_layout(o.refine_layout);
  cfg.alpha_mode = parse_alpha_mode(o.alpha_mode);
  if (sub.get_option("--threshold")->count() > 0) cfg.score_threshold = o.threshold;
  cfg.validate();
  const TrainConfig tcfg = train_config(o);

  const PoolingSpec global = base.front().tag.spec;
  const std::string global_layer = base.front().tag.layer;
  std::vector<std::optional<LinearModel>> slots(ds.categories().size());
  for (const auto& m : base) {
    if (!(m.tag.spec == global) || m.tag.layer != global_layer) {
      throw std::invalid_argument("base models were trained on different feature spaces");
    }
    slots[ds.manifest().category_index(m.category)] = m;
  }
  std::vector<std::string> layers{global_layer};
  if (cfg.refine_layer != global_layer) layers.push_back(cfg.refine_layer);
  const auto train_records = ds.load_records(ds.split("train"), layers, o.jobs);
  const auto val_records = ds.load_records(ds.split("val"), layers, o.jobs);
  const LabelMatrix train_labels = label_matrix(train_records);
  const LabelMatrix val_labels = label_matrix(val_records);
  const CarrTrainData train{train_records, &train_labels};
  const CarrTrainData val{val_records, &val_labels};
  const auto ensembles = carr_train(train, slots, global, cfg, tcfg,
                                    val_records.empty() ? nullptr : &val, o.jobs);
  save_ensembles(o.out, ensembles);
  write_echo(echo_path(o.out), sub, o.seed);
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : ensembles) {
    std::vector<std::string> r{e.category, std::to_string(e.stages.size() - 1)};
    std::string alphas;
    for (std::size_t t = 1; t < e.stages.size(); ++t) {
      alphas += (t > 1 ? "," : "") + fixed(e.stages[t].alpha, 3);
    }
    r.push_back(alphas.empty() ? "-" : alphas);
    rows.push_back(std::move(r));
  }
  print_table(out, {"category", "stages", "alpha"}, rows);
  return 0;
}

int cmd_predict(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  const std::vector<CarrEnsemble> ensembles = load_ensembles(o.ensemble);
  if (ensembles.empty()) throw std::invalid_argument("no ensembles in " + o.ensemble);
  ScoreSet s;
  s.split = o.split;
  for (const auto& e : ensembles) s.categories.push_back(e.category);
  s.ids = ds.split(o.split);
  if (s.ids.empty()) throw std::invalid_argument("split " + o.split + " is empty");
  s.scores.resize(s.ids.size());
  s.labels.resize(s.ids.size());
  const auto layers = layers_of(ensembles);
  parallel_for(s.ids.size(), o.jobs, [&](std::size_t i) {
    const ImageRecord r = ds.load_record(s.ids[i], layers);
    const CarrPrediction p = carr_predict(ensembles, r);
    s.scores[i] = p.scores;
    s.labels[i] = s.categories[p.label];
  });
  save_scores(o.out, s);
  write_echo(echo_path(o.out), sub, o.seed);
  print_table(out, {"split", "images", "categories"},
              {{o.split, std::to_string(s.ids.size()), std::to_string(s.categories.size())}});
  return 0;
}

void emit_report(const Options& o, const CLI::App& sub, const json& report) {
  if (o.out.empty()) return;
  write_json(o.out, report);
  write_echo(echo_path(o.out), sub, o.seed);
}

int cmd_eval_cls(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  const ScoreSet s = load_scores(o.scores);
  MetricReport report;
  if (o.metric == "map") {
    std::vector<std::pair<std::string, RankedList>> lists;
    for (std::size_t c = 0; c < s.categories.size(); ++c) {
      const std::size_t mc = ds.manifest().category_index(s.categories[c]);
      std::vector<RankedItem> items;
      for (std::size_t i = 0; i < s.ids.size(); ++i) {
        items.push_back({s.ids[i], s.scores[i][c], ds.label_vector(s.ids[i])[mc] != 0, false});
      }
      lists.emplace_back(s.categories[c], RankedList(std::move(items)));
    }
    const ApVariant v = o.ap_variant == "11point" ? ApVariant::ElevenPoint : ApVariant::AllPoint;
    if (o.ap_variant != "11point" && o.ap_variant != "all") {
      throw std::invalid_argument("unknown --ap variant " + o.ap_variant);
    }
    report = mean_ap(lists, v);
  } else if (o.metric == "accuracy") {
    std::vector<std::string> truths;
    for (const auto& id : s.ids) {
      const auto& labels = ds.manifest().images.at(id).labels;
      if (labels.size() != 1) throw std::invalid_argument("image " + id + " is not single-label");
      truths.push_back(labels.front());
    }
    report = multiclass_accuracy(s.labels, truths);
  } else {
    throw std::invalid_argument("unknown --metric " + o.metric);
  }
  print_report(out, report, "category");
  emit_report(o, sub, report_json(report));
  return 0;
}

int cmd_eval_retrieval(const Options& o, const CLI::App& sub, std::ostream& out) {
  const FeatureSet f = load_features(o.features);
  const json groups = read_json(o.groups);
  RetrievalIndex index;
  for (std::size_t i = 0; i < f.ids.size(); ++i) {
    if (!groups.contains(f.ids[i])) throw std::invalid_argument("no group for image " + f.ids[i]);
    index.add(f.ids[i], f.values[i], groups.at(f.ids[i]).get<std::string>());
  }
  if (o.protocol == "holidays") {
    const MetricReport r = holidays_map(index, first_of_each_group(index));
    print_report(out, r, "query");
    emit_report(o, sub, report_json(r));
  } else if (o.protocol == "ukb") {
    const UkbScore u = ukb_score(index);
    print_table(out, {"metric", "value"},
                {{"ukb_mean_count", fixed(u.mean_count)}, {"ukb_percentage", fixed(u.percentage)}});
    emit_report(o, sub, json{{"metric", "ukb_score"},
                             {"value", u.mean_count},
                             {"percentage", u.percentage},
                             {"per_category", json::object()}});
  } else {
    throw std::invalid_argument("unknown --protocol " + o.protocol);
  }
  return 0;
}

int cmd_proposal_recall(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  const json ann = read_json(o.annotations);
  if (!ann.is_object()) throw FormatError(o.annotations + ": expected an object of image ids");
  const auto ks = parse_counts(o.k_list, "--k-list");
  std::vector<std::size_t> matched(ks.size(), 0);
  std::size_t total = 0;
  for (const auto& [id, boxes] : ann.items()) {
    if (!ds.manifest().images.contains(id)) throw std::invalid_argument("annotated image " + id + " not in manifest");
    std::vector<BBox> gt;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      gt.push_back(bbox_from_json(boxes[b], o.annotations + " image " + id));
    }
    if (gt.empty()) continue;
    const auto props = read_proposals(ds.root() / ds.manifest().images.at(id).proposals_path);
    total += gt.size();
    for (std::size_t i = 0; i < ks.size(); ++i) matched[i] += matched_at_k(props, gt, ks[i], o.iou);
  }
  if (total == 0) throw std::invalid_argument("no annotations");
  json curve = json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double r = static_cast<double>(matched[i]) / static_cast<double>(total);
    curve.push_back(json{{"k", ks[i]}, {"recall", r}});
    rows.push_back({std::to_string(ks[i]), fixed(r)});
  }
  print_table(out, {"k", "recall"}, rows);
  emit_report(o, sub, json{{"metric", "proposal_recall"}, {"iou", o.iou}, {"annotations", total}, {"curve", curve}});
  return 0;
}

int cmd_backtrack(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = Dataset::load(o.manifest);
  const auto ensembles = load_ensembles(o.ensemble);
  const auto it = std::find_if(ensembles.begin(), ensembles.end(),
                               [&](const CarrEnsemble& e) { return e.category == o.category; });
  if (it == ensembles.end()) throw std::invalid_argument("no ensemble for category " + o.category);
  const CarrStage& base = it->stages.front();
  const ImageRecord r = ds.load_record(o.image, {base.model.tag.layer});
  const PooledFeature pooled = pool_image(r, base.model.tag.layer, base.model.tag.spec);
  const auto attributions = backtrack(pooled, base.model);
  const auto scores = region_scores(std::span<const CarrStage>(&base, 1), r);
  const auto candidates = candidate_regions(r, base.model.tag.spec);
  std::size_t best = candidates.front();
  for (std::size_t k : candidates) {
    if (scores[k] > scores[best]) best = k;
  }
  json dims = json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < std::min(o.top, attributions.size()); ++i) {
    const Attribution& a = attributions[i];
    json d{{"dim", a.dim}, {"block", a.block}, {"code_dim", a.code_dim}, {"contribution", a.contribution}};
    if (a.region == kNoRegion) {
      d["region"] = nullptr;
    } else {
      d["region"] = a.region;
      d["bbox"] = bbox_to_json(r.proposals[static_cast<std::size_t>(a.region)].bbox);
    }
    dims.push_back(std::move(d));
    rows.push_back({std::to_string(a.dim), std::to_string(a.block), fixed(a.contribution, 5),
                    a.region == kNoRegion ? "-" : std::to_string(a.region)});
  }
  const json report{{"image", o.image},
                    {"category", o.category},
                    {"discriminative_region",
                     {{"index", best}, {"score", scores[best]}, {"bbox", bbox_to_json(r.proposals[best].bbox)}}},
                    {"top_dimensions", dims}};
  const BBox& b = r.proposals[best].bbox;
  out << "most discriminative region " << best << ": (" << b.x_min << "," << b.y_min << ","
      << b.x_max << "," << b.y_max << ") score " << fixed(scores[best], 5) << "\n";
  print_table(out, {"dim", "block", "contribution", "region"}, rows);
  emit_report(o, sub, report);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep-attribute pooling, context-aware refinement and evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--jobs", o.jobs, "Worker threads (0 = available parallelism)");
    sub->add_option("--seed", o.seed, "Seed for every random choice");
  };

  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  synth->add_option("--spec", o.spec_path, "Synthetic spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output directory")->required();
  common(synth);

  auto* pool = app.add_subcommand("pool", "Cross-region pooled features for every image");
  pool->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  pool->add_option("--layer", o.layer);
  pool->add_option("--op", o.op)->check(CLI::IsMember({"max", "avg"}));
  pool->add_option("--layout", o.layout)->check(CLI::IsMember({"single", "multiscale", "spp"}));
  pool->add_flag("--rootsift,!--no-rootsift", o.rootsift);
  pool->add_option("--grid-sides", o.grid_sides);
  pool->add_option("--scale-bounds", o.scale_bounds);
  pool->add_option("--top-k", o.top_k, "Keep the top-K proposals by objectness (0 = all)");
  pool->add_option("--out", o.out)->required();
  common(pool);

  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--c-grid", o.c_grid);
    sub->add_option("--tolerance", o.tolerance);
    sub->add_option("--max-passes", o.max_passes);
    sub->add_option("--positive-weight", o.positive_weight);
  };

  auto* train = app.add_subcommand("train", "One-vs-rest base classifiers");
  train->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  train->add_option("--features", o.features)->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out)->required();
  add_train_flags(train);
  common(train);

  auto* carr = app.add_subcommand("carr-train", "Context-aware region refinement training");
  carr->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  carr->add_option("--base", o.base)->required()->check(CLI::ExistingFile);
  carr->add_option("--beta", o.beta);
  carr->add_option("--iters", o.iters);
  carr->add_option("--refine-layer", o.refine_layer);
  carr->add_option("--refine-op", o.refine_op)->check(CLI::IsMember({"max", "avg"}));
  carr->add_option("--refine-layout", o.refine_layout)->check(CLI::IsMember({"mirror_global", "single"}));
  carr->add_option("--alpha-mode", o.alpha_mode)->check(CLI::IsMember({"adaboost_rule", "grid_search"}));
  carr->add_option("--threshold", o.threshold, "Select regions scoring above this instead of top-K");
  carr->add_option("--min-top-k", o.min_top_k);
  carr->add_option("--out", o.out)->required();
  add_train_flags(carr);
  common(carr);

  auto* predict = app.add_subcommand("predict", "Per-image per-category scores");
  predict->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  predict->add_option("--ensemble", o.ensemble)->required()->check(CLI::ExistingFile);
  predict->add_option("--split", o.split);
  predict->add_option("--out", o.out)->required();
  common(predict);

  auto* eval_cls = app.add_subcommand("eval-cls", "Classification report");
  eval_cls->add_option("--scores", o.scores)->required()->check(CLI::ExistingFile);
  eval_cls->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  eval_cls->add_option("--metric", o.metric)->check(CLI::IsMember({"map", "accuracy"}));
  eval_cls->add_option("--ap", o.ap_variant, "AP variant: all | 11point")->check(CLI::IsMember({"all", "11point"}));
  eval_cls->add_option("--out", o.out, "JSON report path");
  common(eval_cls);

  auto* eval_ret = app.add_subcommand("eval-retrieval", "Retrieval report");
  eval_ret->add_option("--features", o.features)->required()->check(CLI::ExistingFile);
  eval_ret->add_option("--groups", o.groups)->required()->check(CLI::ExistingFile);
  eval_ret->add_option("--protocol", o.protocol)->check(CLI::IsMember({"holidays", "ukb"}));
  eval_ret->add_option("--out", o.out, "JSON report path");
  common(eval_ret);

  auto* recall = app.add_subcommand("proposal-recall", "Recall of annotated boxes among top-K proposals");
  recall->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  recall->add_option("--annotations", o.annotations)->required()->check(CLI::ExistingFile);
  recall->add_option("--k-list", o.k_list);
  recall->add_option("--iou", o.iou);
  recall->add_option("--out", o.out, "JSON report path");
  common(recall);

  auto* back = app.add_subcommand("backtrack", "Most discriminative region and attribute provenance");
  back->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  back->add_option("--ensemble", o.ensemble)->required()->check(CLI::ExistingFile);
  back->add_option("--image", o.image)->required();
  back->add_option("--category", o.category)->required();
  back->add_option("--top", o.top);
  back->add_option("--out", o.out, "JSON report path");
  common(back);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (synth->parsed()) return cmd_synth(o, *synth, out);
    if (pool->parsed()) return cmd_pool(o, *pool, out);
    if (train->parsed()) return cmd_train(o, *train, out);
    if (carr->parsed()) return cmd_carr_train(o, *carr, out);
    if (predict->parsed()) return cmd_predict(o, *predict, out);
    if (eval_cls->parsed()) return cmd_eval_cls(o, *eval_cls, out);
    if (eval_ret->parsed()) return cmd_eval_retrieval(o, *eval_ret, out);
    if (recall->parsed()) return cmd_proposal_recall(o, *recall, out);
    if (back->parsed()) return cmd_backtrack(o, *back, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace deepattr
