#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepattr/dataio.hpp"
#include "deepattr/record.hpp"

namespace deepattr {

enum class RegionKind : std::uint8_t { Target, Context, Clutter };

/// How proposal sizes are drawn. Broad: every kind spans all scale groups. Disjoint:
/// targets are large (area ratio above 1/4), context regions small (at most 1/8),
/// clutter spans everything.
enum class ScaleMode { Broad, Disjoint };

/// Seeded generator of images whose regions are targets, context or clutter for the image's
/// category. Category c owns two signature dims (2c, 2c+1) and one context dim (2C + c);
/// the remaining dims are background.
struct SyntheticSpec {
  std::size_t num_categories = 10;
  std::size_t code_dim = 40;
  std::size_t fc1_dim = 80;
  std::map<std::string, std::size_t> images_per_split{{"train", 200}, {"val", 0}, {"test", 200}};
  std::size_t regions_per_image = 60;
  double target_fraction = 0.15;
  double context_fraction = 0.15;
  double clutter_fraction = 0.7;
  /// Extra Dirichlet mass on a region's peak dims; background dims get 1 each.
  double peak_concentration = 4.0;
  /// Probability that a clutter region peaks on another category's signature dim.
  double cross_talk = 0.9;
  ScaleMode scale_mode = ScaleMode::Broad;
  double fc1_noise = 0.01;
  std::uint64_t seed = 7;

  void validate() const;
};

json synthetic_spec_to_json(const SyntheticSpec& s);
/// Missing keys keep their defaults.
SyntheticSpec synthetic_spec_from_json(const json& j);

struct SyntheticImage {
  ImageRecord record;
  std::string split;
  /// Per proposal, in proposal order (objectness descending; planted regions first).
  std::vector<RegionKind> kinds;
};

struct SyntheticDataset {
  std::vector<std::string> categories;
  std::vector<SyntheticImage> images;  // split order: train, val, test

  std::vector<ImageRecord> records(const std::string& split) const;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.json, proposals/, codes/, annotations.json (target boxes per image) and
/// groups.json (image -> category) under dir. Returns the manifest path.
fs::path write_synthetic(const SyntheticDataset& data, const fs::path& dir);

}  // namespace deepattr
