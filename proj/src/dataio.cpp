#include "deepattr/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "deepattr/parallel.hpp"

namespace deepattr {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'N', 'C', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T>
T field(const json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(context + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(context + ": bad field '" + key + "': " + e.what());
  }
}

template <class T>
T field_or(const json& j, const char* key, T fallback, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return field<T>(j, key, context);
}

double finite_number(const json& j, const char* key, const std::string& context) {
  const json* v = j.is_object() && j.contains(key) ? &j.at(key) : nullptr;
  if (v == nullptr || !v->is_number()) {
    throw FormatError(context + ": field '" + key + "' must be a number");
  }
  const double d = v->get<double>();
  if (!std::isfinite(d)) throw FormatError(context + ": field '" + key + "' is not finite");
  return d;
}

void check_version(const json& j, const std::string& context) {
  const int v = field<int>(j, "format_version", context);
  if (v != kModelFormatVersion) {
    throw FormatError(context + ": format_version " + std::to_string(v) + " unsupported (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
}

}  // namespace

void write_codes(const fs::path& path, const CodeMatrix& codes) {
  if (codes.rows() == 0 || codes.cols() == 0) {
    throw std::invalid_argument("refusing to write empty code matrix to " + path.string());
  }
  for (float v : codes.values()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("non-finite code value; not writing " + path.string());
    }
  }
  std::string out(kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(codes.layer_name().size()));
  out += codes.layer_name();
  put_u32(out, static_cast<std::uint32_t>(codes.rows()));
  put_u32(out, static_cast<std::uint32_t>(codes.cols()));
  out.reserve(out.size() + 4 * codes.values().size());
  for (float v : codes.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  write_text_atomic(path, out);
}

CodeMatrix read_codes(const fs::path& path) {
  const std::string buf = slurp(path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::string where = "code file " + path.string();
  auto truncated = [&](std::size_t need) {
    return FormatError("code file truncated: " + path.string() + " needs " + std::to_string(need) +
                       " bytes, has " + std::to_string(buf.size()));
  };
  if (buf.size() < 8) throw truncated(8);
  if (std::memcmp(buf.data(), kMagic.data(), 4) != 0) throw FormatError(where + ": bad magic");
  const std::size_t name_len = get_u32(p + 4);
  std::size_t off = 8;
  if (buf.size() < off + name_len + 8) throw truncated(off + name_len + 8);
  std::string name(buf.data() + off, name_len);
  off += name_len;
  const std::size_t n = get_u32(p + off);
  const std::size_t d = get_u32(p + off + 4);
  off += 8;
  if (n == 0 || d == 0) throw FormatError(where + ": empty matrix");
  const std::size_t need = off + 4 * n * d;
  if (buf.size() < need) throw truncated(need);
  if (buf.size() > need) {
    throw FormatError(where + ": " + std::to_string(buf.size() - need) + " trailing bytes");
  }
  std::vector<float> values(n * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(p + off + 4 * i));
  }
  CodeMatrix m(std::move(name), n, d, std::move(values));
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  return m;
}

json bbox_to_json(const BBox& b) {
  return json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

BBox bbox_from_json(const json& j, const std::string& context) {
  BBox b{field<std::int64_t>(j, "x_min", context), field<std::int64_t>(j, "y_min", context),
         field<std::int64_t>(j, "x_max", context), field<std::int64_t>(j, "y_max", context)};
  if (!b.valid()) throw FormatError(context + ": invalid box");
  return b;
}

json proposals_to_json(const std::vector<RegionProposal>& proposals) {
  json arr = json::array();
  for (const auto& p : proposals) {
    json o = bbox_to_json(p.bbox);
    o["objectness"] = p.objectness;
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<RegionProposal> proposals_from_json(const json& j, const std::string& context) {
  if (!j.is_array()) throw FormatError(context + ": proposals must be a JSON array");
  std::vector<RegionProposal> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ctx = context + " proposal " + std::to_string(i);
    out.push_back({bbox_from_json(j[i], ctx), finite_number(j[i], "objectness", ctx)});
  }
  return out;
}

std::vector<RegionProposal> read_proposals(const fs::path& path) {
  return proposals_from_json(read_json(path), path.string());
}

void write_proposals(const fs::path& path, const std::vector<RegionProposal>& proposals) {
  write_json(path, proposals_to_json(proposals));
}

void DatasetManifest::validate() const {
  std::set<std::string> cats(categories.begin(), categories.end());
  if (cats.size() != categories.size()) throw FormatError("manifest: duplicate category names");
  std::set<std::string> seen;
  for (const auto& [split, ids] : splits) {
    for (const auto& id : ids) {
      if (!images.contains(id)) throw FormatError("manifest: split " + split + " lists unknown image " + id);
      if (!seen.insert(id).second) throw FormatError("manifest: image " + id + " appears in several splits");
    }
  }
  for (const auto& [id, img] : images) {
    if (img.width <= 0 || img.height <= 0) throw FormatError("manifest: image " + id + " has no size");
    for (const auto& l : img.labels) {
      if (!cats.contains(l)) throw FormatError("manifest: image " + id + " has unknown label " + l);
    }
  }
}

std::size_t DatasetManifest::category_index(const std::string& name) const {
  const auto it = std::find(categories.begin(), categories.end(), name);
  if (it == categories.end()) throw std::invalid_argument("unknown category " + name);
  return static_cast<std::size_t>(it - categories.begin());
}

json manifest_to_json(const DatasetManifest& m) {
  json images = json::object();
  for (const auto& [id, img] : m.images) {
    images[id] = json{{"width", img.width},
                      {"height", img.height},
                      {"labels", img.labels},
                      {"proposals_path", img.proposals_path},
                      {"codes", img.codes}};
  }
  return json{{"format_version", kModelFormatVersion},
              {"categories", m.categories},
              {"splits", m.splits},
              {"images", images}};
}

DatasetManifest manifest_from_json(const json& j) {
  const std::string ctx = "manifest";
  DatasetManifest m;
  m.categories = field<std::vector<std::string>>(j, "categories", ctx);
  m.splits = field<std::map<std::string, std::vector<std::string>>>(j, "splits", ctx);
  const json& images = j.contains("images") ? j.at("images") : json();
  if (!images.is_object()) throw FormatError(ctx + ": 'images' must be an object");
  for (const auto& [id, e] : images.items()) {
    const std::string ictx = ctx + " image " + id;
    ManifestImage img;
    img.width = field<std::int64_t>(e, "width", ictx);
    img.height = field<std::int64_t>(e, "height", ictx);
    img.labels = field<std::vector<std::string>>(e, "labels", ictx);
    img.proposals_path = field<std::string>(e, "proposals_path", ictx);
    img.codes = field<std::map<std::string, std::string>>(e, "codes", ictx);
    m.images.emplace(id, std::move(img));
  }
  m.validate();
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  manifest.validate();
  write_json(path, manifest_to_json(manifest));
}

Dataset Dataset::load(const fs::path& manifest_path) {
  Dataset d;
  d.manifest_ = manifest_from_json(read_json(manifest_path));
  d.root_ = manifest_path.parent_path();
  for (const auto& [id, img] : d.manifest_.images) {
    if (!fs::exists(d.root_ / img.proposals_path)) {
      throw FormatError("image " + id + ": missing proposals file " +
                        (d.root_ / img.proposals_path).string());
    }
    for (const auto& [layer, rel] : img.codes) {
      if (!fs::exists(d.root_ / rel)) {
        throw FormatError("image " + id + ": missing " + layer + " code file " +
                          (d.root_ / rel).string());
      }
    }
  }
  return d;
}

std::vector<std::string> Dataset::split(const std::string& name) const {
  const auto it = manifest_.splits.find(name);
  return it == manifest_.splits.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::uint8_t> Dataset::label_vector(const std::string& id) const {
  const auto& img = manifest_.images.at(id);
  std::vector<std::uint8_t> out(manifest_.categories.size(), 0);
  for (const auto& l : img.labels) out[manifest_.category_index(l)] = 1;
  return out;
}

ImageRecord Dataset::load_record(const std::string& id, const std::vector<std::string>& layers) const {
  const auto it = manifest_.images.find(id);
  if (it == manifest_.images.end()) throw FormatError("unknown image id " + id);
  const ManifestImage& img = it->second;
  ImageRecord r;
  r.id = id;
  r.width = img.width;
  r.height = img.height;
  r.labels = label_vector(id);
  r.proposals = read_proposals(root_ / img.proposals_path);
  std::vector<std::string> wanted = layers;
  if (wanted.empty()) {
    for (const auto& [layer, rel] : img.codes) wanted.push_back(layer);
  }
  for (const auto& layer : wanted) {
    const auto c = img.codes.find(layer);
    if (c == img.codes.end()) throw FormatError("image " + id + ": layer absent: " + layer);
    const fs::path path = root_ / c->second;
    CodeMatrix m = read_codes(path);
    if (m.rows() != r.proposals.size()) {
      throw FormatError("image " + id + ": " + path.string() + " has " + std::to_string(m.rows()) +
                        " rows but " + std::to_string(r.proposals.size()) + " proposals");
    }
    if (m.layer_name() != layer) {
      throw FormatError("image " + id + ": " + path.string() + " holds layer " + m.layer_name() +
                        ", manifest says " + layer);
    }
    r.codes.emplace(layer, std::move(m));
  }
  return r;
}

std::vector<ImageRecord> Dataset::load_records(const std::vector<std::string>& ids,
                                               const std::vector<std::string>& layers,
                                               std::size_t jobs) const {
  std::vector<ImageRecord> out(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) { out[i] = load_record(ids[i], layers); });
  return out;
}

LabelMatrix label_matrix(const std::vector<ImageRecord>& records) {
  LabelMatrix out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.labels);
  return out;
}

json pooling_spec_to_json(const PoolingSpec& s) {
  return json{{"operator", to_string(s.op)},
              {"layout", to_string(s.layout)},
              {"scale_boundaries", s.intervals.boundaries()},
              {"grid_sides", s.grid_sides},
              {"rootsift", s.rootsift},
              {"max_regions", s.max_regions}};
}

PoolingSpec pooling_spec_from_json(const json& j) {
  const std::string ctx = "pooling spec";
  PoolingSpec s;
  try {
    s.op = parse_pool_op(field<std::string>(j, "operator", ctx));
    s.layout = parse_layout(field<std::string>(j, "layout", ctx));
    s.intervals = ScaleIntervals(field_or<std::vector<double>>(j, "scale_boundaries",
                                                               s.intervals.boundaries(), ctx));
  } catch (const std::invalid_argument& e) {
    throw FormatError(ctx + ": " + e.what());
  }
  s.grid_sides = field_or<std::vector<int>>(j, "grid_sides", s.grid_sides, ctx);
  s.rootsift = field_or<bool>(j, "rootsift", s.rootsift, ctx);
  s.max_regions = field_or<std::size_t>(j, "max_regions", 0, ctx);
  return s;
}

json feature_tag_to_json(const FeatureTag& t) {
  return json{{"layer", t.layer}, {"pooling", pooling_spec_to_json(t.spec)}, {"stage", t.stage}};
}

FeatureTag feature_tag_from_json(const json& j) {
  const std::string ctx = "feature tag";
  FeatureTag t;
  t.layer = field<std::string>(j, "layer", ctx);
  if (!j.contains("pooling")) throw FormatError(ctx + ": missing field 'pooling'");
  t.spec = pooling_spec_from_json(j.at("pooling"));
  t.stage = field<int>(j, "stage", ctx);
  return t;
}

json linear_model_to_json(const LinearModel& m) {
  return json{{"category", m.category},
              {"dim", m.dim()},
              {"weights", m.weights},
              {"bias", m.bias},
              {"feature_tag", feature_tag_to_json(m.tag)}};
}

LinearModel linear_model_from_json(const json& j) {
  LinearModel m;
  m.category = field<std::string>(j, "category", "model");
  const std::string ctx = "model " + m.category;
  m.weights = field<std::vector<double>>(j, "weights", ctx);
  m.bias = finite_number(j, "bias", ctx);
  const auto dim = field<std::size_t>(j, "dim", ctx);
  if (dim != m.weights.size()) {
    throw FormatError(ctx + ": dim " + std::to_string(dim) + " but " +
                      std::to_string(m.weights.size()) + " weights");
  }
  for (double w : m.weights) {
    if (!std::isfinite(w)) throw FormatError(ctx + ": non-finite weight");
  }
  if (!j.contains("feature_tag")) throw FormatError(ctx + ": missing field 'feature_tag'");
  try {
    m.tag = feature_tag_from_json(j.at("feature_tag"));
  } catch (const FormatError& e) {
    throw FormatError(ctx + ": " + e.what());
  }
  return m;
}

json carr_config_to_json(const CarrConfig& c) {
  json j{{"iterations", c.iterations},
         {"beta", c.beta},
         {"min_top_k", c.min_top_k},
         {"refine_layer", c.refine_layer},
         {"refine_operator", to_string(c.refine_op)},
         {"refine_layout", to_string(c.refine_layout)},
         {"alpha_mode", to_string(c.alpha_mode)}};
  j["score_threshold"] = c.score_threshold ? json(*c.score_threshold) : json(nullptr);
  return j;
}

CarrConfig carr_config_from_json(const json& j) {
  const std::string ctx = "carr config";
  CarrConfig c;
  c.iterations = field<int>(j, "iterations", ctx);
  c.beta = finite_number(j, "beta", ctx);
  c.min_top_k = field<std::size_t>(j, "min_top_k", ctx);
  c.refine_layer = field<std::string>(j, "refine_layer", ctx);
  try {
    c.refine_op = parse_pool_op(field<std::string>(j, "refine_operator", ctx));
    c.refine_layout = parse_refine_layout(field<std::string>(j, "refine_layout", ctx));
    c.alpha_mode = parse_alpha_mode(field<std::string>(j, "alpha_mode", ctx));
    if (j.contains("score_threshold") && !j.at("score_threshold").is_null()) {
      c.score_threshold = finite_number(j, "score_threshold", ctx);
    }
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(ctx + ": " + e.what());
  }
  return c;
}

json models_to_json(const std::vector<LinearModel>& models) {
  json arr = json::array();
  for (const auto& m : models) arr.push_back(linear_model_to_json(m));
  return json{{"format_version", kModelFormatVersion}, {"models", arr}};
}

std::vector<LinearModel> models_from_json(const json& j) {
  check_version(j, "model file");
  const json& arr = j.contains("models") ? j.at("models") : json();
  if (!arr.is_array()) throw FormatError("model file: 'models' must be an array");
  std::vector<LinearModel> out;
  for (const auto& m : arr) out.push_back(linear_model_from_json(m));
  return out;
}

json ensembles_to_json(const std::vector<CarrEnsemble>& ensembles) {
  json arr = json::array();
  for (const auto& e : ensembles) {
    json stages = json::array();
    for (std::size_t t = 0; t < e.stages.size(); ++t) {
      stages.push_back(json{{"stage", t},
                            {"alpha", e.stages[t].alpha},
                            {"train_error", e.stages[t].train_error},
                            {"model", linear_model_to_json(e.stages[t].model)}});
    }
    arr.push_back(json{{"category", e.category},
                       {"config", carr_config_to_json(e.config)},
                       {"stages", stages}});
  }
  return json{{"format_version", kModelFormatVersion}, {"ensembles", arr}};
}

std::vector<CarrEnsemble> ensembles_from_json(const json& j) {
  check_version(j, "ensemble file");
  const json& arr = j.contains("ensembles") ? j.at("ensembles") : json();
  if (!arr.is_array()) throw FormatError("ensemble file: 'ensembles' must be an array");
  std::vector<CarrEnsemble> out;
  for (const auto& e : arr) {
    CarrEnsemble ens;
    ens.category = field<std::string>(e, "category", "ensemble");
    const std::string ctx = "ensemble " + ens.category;
    if (!e.contains("config")) throw FormatError(ctx + ": missing field 'config'");
    ens.config = carr_config_from_json(e.at("config"));
    const json& stages = e.contains("stages") ? e.at("stages") : json();
    if (!stages.is_array() || stages.empty()) throw FormatError(ctx + ": no stages");
    for (std::size_t t = 0; t < stages.size(); ++t) {
      const std::string sctx = ctx + " stage " + std::to_string(t);
      const json& s = stages[t];
      if (field<std::size_t>(s, "stage", sctx) != t) throw FormatError(sctx + ": stages out of order");
      CarrStage st;
      st.alpha = finite_number(s, "alpha", sctx);
      st.train_error = finite_number(s, "train_error", sctx);
      if (!s.contains("model")) throw FormatError(sctx + ": missing field 'model'");
      try {
        st.model = linear_model_from_json(s.at("model"));
      } catch (const FormatError& err) {
        throw FormatError(sctx + ": " + err.what());
      }
      ens.stages.push_back(std::move(st));
    }
    out.push_back(std::move(ens));
  }
  return out;
}

void save_models(const fs::path& path, const std::vector<LinearModel>& models) {
  write_json(path, models_to_json(models));
}

std::vector<LinearModel> load_models(const fs::path& path) {
  try {
    return models_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_ensembles(const fs::path& path, const std::vector<CarrEnsemble>& ensembles) {
  write_json(path, ensembles_to_json(ensembles));
}

std::vector<CarrEnsemble> load_ensembles(const fs::path& path) {
  const json j = read_json(path);
  try {
    if (j.contains("ensembles")) return ensembles_from_json(j);
    std::vector<CarrEnsemble> out;
    for (auto& m : models_from_json(j)) {
      CarrEnsemble e;
      e.category = m.category;
      e.config.iterations = 0;
      e.stages.push_back({std::move(m), 1.0, 0.0});
      out.push_back(std::move(e));
    }
    return out;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_features(const fs::path& path, const FeatureSet& features) {
  json arr = json::array();
  for (std::size_t i = 0; i < features.ids.size(); ++i) {
    arr.push_back(json{{"id", features.ids[i]}, {"values", features.values[i]}});
  }
  write_json(path, json{{"format_version", kModelFormatVersion},
                        {"layer", features.layer},
                        {"pooling", pooling_spec_to_json(features.spec)},
                        {"features", arr}});
}

FeatureSet load_features(const fs::path& path) {
  const json j = read_json(path);
  const std::string ctx = "feature file " + path.string();
  check_version(j, ctx);
  FeatureSet f;
  f.layer = field<std::string>(j, "layer", ctx);
  if (!j.contains("pooling")) throw FormatError(ctx + ": missing field 'pooling'");
  f.spec = pooling_spec_from_json(j.at("pooling"));
  const json& arr = j.contains("features") ? j.at("features") : json();
  if (!arr.is_array()) throw FormatError(ctx + ": 'features' must be an array");
  for (const auto& e : arr) {
    f.ids.push_back(field<std::string>(e, "id", ctx));
    f.values.push_back(field<std::vector<double>>(e, "values", ctx + " image " + f.ids.back()));
  }
  return f;
}

void save_scores(const fs::path& path, const ScoreSet& s) {
  json arr = json::array();
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    arr.push_back(json{{"id", s.ids[i]}, {"scores", s.scores[i]}, {"label", s.labels[i]}});
  }
  write_json(path, json{{"format_version", kModelFormatVersion},
                        {"categories", s.categories},
                        {"split", s.split},
                        {"images", arr}});
}

ScoreSet load_scores(const fs::path& path) {
  const json j = read_json(path);
  const std::string ctx = "score file " + path.string();
  check_version(j, ctx);
  ScoreSet s;
  s.categories = field<std::vector<std::string>>(j, "categories", ctx);
  s.split = field<std::string>(j, "split", ctx);
  const json& arr = j.contains("images") ? j.at("images") : json();
  if (!arr.is_array()) throw FormatError(ctx + ": 'images' must be an array");
  for (const auto& e : arr) {
    s.ids.push_back(field<std::string>(e, "id", ctx));
    const std::string ictx = ctx + " image " + s.ids.back();
    s.scores.push_back(field<std::vector<double>>(e, "scores", ictx));
    if (s.scores.back().size() != s.categories.size()) {
      throw FormatError(ictx + ": score count does not match categories");
    }
    s.labels.push_back(field<std::string>(e, "label", ictx));
  }
  return s;
}

json read_json(const fs::path& path) {
  const std::string text = slurp(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(1) + "\n"); }

}  // namespace deepattr
