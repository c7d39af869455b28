#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepattr/carr.hpp"
#include "deepattr/geometry.hpp"
#include "deepattr/linclass.hpp"
#include "deepattr/record.hpp"

namespace deepattr {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised for malformed or inconsistent files; the message names the offending path.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// RNC1 code files:
//   bytes 0-3   magic "RNC1"
//   u32 LE      layer-name byte length L
//   L bytes     UTF-8 layer name
//   u32 LE      N (regions)
//   u32 LE      D (dims)
//   N*D         IEEE-754 float32 LE, row-major
void write_codes(const fs::path& path, const CodeMatrix& codes);
CodeMatrix read_codes(const fs::path& path);

std::vector<RegionProposal> read_proposals(const fs::path& path);
void write_proposals(const fs::path& path, const std::vector<RegionProposal>& proposals);
json proposals_to_json(const std::vector<RegionProposal>& proposals);
std::vector<RegionProposal> proposals_from_json(const json& j, const std::string& context);
json bbox_to_json(const BBox& b);
BBox bbox_from_json(const json& j, const std::string& context);

struct ManifestImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::string> labels;
  std::string proposals_path;                 // relative to the manifest directory
  std::map<std::string, std::string> codes;   // layer -> relative path

  friend bool operator==(const ManifestImage&, const ManifestImage&) = default;
};

struct DatasetManifest {
  std::vector<std::string> categories;
  std::map<std::string, std::vector<std::string>> splits;  // train / val / test
  std::map<std::string, ManifestImage> images;

  /// Checks split disjointness and that labels and split ids are known.
  void validate() const;
  std::size_t category_index(const std::string& name) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const json& j);
void write_manifest(const fs::path& path, const DatasetManifest& manifest);

/// A manifest plus its directory; image records load from disk on request.
class Dataset {
 public:
  static Dataset load(const fs::path& manifest_path);

  const DatasetManifest& manifest() const { return manifest_; }
  const fs::path& root() const { return root_; }
  const std::vector<std::string>& categories() const { return manifest_.categories; }
  /// Ids of a split; an unknown split is empty.
  std::vector<std::string> split(const std::string& name) const;

  /// Reads proposals and the requested layers (all layers when empty) and cross-checks N.
  ImageRecord load_record(const std::string& id, const std::vector<std::string>& layers = {}) const;
  std::vector<ImageRecord> load_records(const std::vector<std::string>& ids,
                                        const std::vector<std::string>& layers = {},
                                        std::size_t jobs = 1) const;
  std::vector<std::uint8_t> label_vector(const std::string& id) const;

 private:
  DatasetManifest manifest_;
  fs::path root_;
};

LabelMatrix label_matrix(const std::vector<ImageRecord>& records);

inline constexpr int kModelFormatVersion = 1;

json pooling_spec_to_json(const PoolingSpec& s);
PoolingSpec pooling_spec_from_json(const json& j);
json feature_tag_to_json(const FeatureTag& t);
FeatureTag feature_tag_from_json(const json& j);
json linear_model_to_json(const LinearModel& m);
LinearModel linear_model_from_json(const json& j);
json carr_config_to_json(const CarrConfig& c);
CarrConfig carr_config_from_json(const json& j);

/// {"format_version":1, "models":[...]} and {"format_version":1, "ensembles":[...]}.
json models_to_json(const std::vector<LinearModel>& models);
std::vector<LinearModel> models_from_json(const json& j);
json ensembles_to_json(const std::vector<CarrEnsemble>& ensembles);
std::vector<CarrEnsemble> ensembles_from_json(const json& j);

void save_models(const fs::path& path, const std::vector<LinearModel>& models);
std::vector<LinearModel> load_models(const fs::path& path);
void save_ensembles(const fs::path& path, const std::vector<CarrEnsemble>& ensembles);
/// Accepts an ensemble file, or a plain model file read as zero-iteration ensembles.
std::vector<CarrEnsemble> load_ensembles(const fs::path& path);

/// Pooled feature file: {"format_version":1, "layer":..., "spec":{...}, "features":[{"id","values"}]}.
struct FeatureSet {
  std::string layer;
  PoolingSpec spec;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;
};

void save_features(const fs::path& path, const FeatureSet& features);
FeatureSet load_features(const fs::path& path);

/// Prediction file: per-image per-category scores with the argmax label.
struct ScoreSet {
  std::vector<std::string> categories;
  std::string split;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> scores;
  std::vector<std::string> labels;
};

void save_scores(const fs::path& path, const ScoreSet& scores);
ScoreSet load_scores(const fs::path& path);

json read_json(const fs::path& path);
/// Writes via a temporary sibling and renames, so a failed run leaves no partial file.
void write_text_atomic(const fs::path& path, const std::string& text);
void write_json(const fs::path& path, const json& j);

}  // namespace deepattr
