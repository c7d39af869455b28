#include "deepattr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace deepattr {

namespace {

const std::vector<std::string> kSplitOrder{"train", "val", "test"};

std::string to_string(ScaleMode m) { return m == ScaleMode::Broad ? "broad" : "disjoint"; }

ScaleMode parse_scale_mode(const std::string& s) {
  if (s == "broad") return ScaleMode::Broad;
  if (s == "disjoint") return ScaleMode::Disjoint;
  throw std::invalid_argument("unknown scale mode: " + s);
}

std::mt19937_64 seeded_rng(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t v : {a, b, c}) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

struct RegionCounts {
  std::size_t target;
  std::size_t context;
  std::size_t clutter;
};

RegionCounts region_counts(const SyntheticSpec& s) {
  const double n = static_cast<double>(s.regions_per_image);
  const auto t = static_cast<std::size_t>(std::llround(s.target_fraction * n));
  const auto c = static_cast<std::size_t>(std::llround(s.context_fraction * n));
  if (t + c > s.regions_per_image) throw std::invalid_argument("region fractions exceed N");
  return {t, c, s.regions_per_image - t - c};
}

// Dirichlet draw: background dims get concentration 1, each peak dim an equal share of
// peak_concentration on top.
std::vector<float> dirichlet_row(std::size_t dim, const std::vector<std::size_t>& peaks,
                                 double peak_concentration, std::mt19937_64& rng) {
  std::vector<double> alpha(dim, 1.0);
  for (std::size_t p : peaks) alpha[p] += peak_concentration / static_cast<double>(peaks.size());
  std::vector<double> g(dim);
  double sum = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    std::gamma_distribution<double> gamma(alpha[d], 1.0);
    g[d] = gamma(rng);
    sum += g[d];
  }
  std::vector<float> row(dim);
  for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<float>(g[d] / sum);
  return row;
}

BBox sample_box(std::int64_t width, std::int64_t height, double log_min, double log_max,
                std::mt19937_64& rng) {
  std::uniform_real_distribution<double> log_area(log_min, log_max);
  std::uniform_real_distribution<double> log_aspect(std::log(0.5), std::log(2.0));
  const double area = std::exp(log_area(rng)) * static_cast<double>(width * height);
  const double aspect = std::exp(log_aspect(rng));
  auto w = std::clamp<std::int64_t>(std::llround(std::sqrt(area * aspect)), 1, width);
  auto h = std::clamp<std::int64_t>(std::llround(area / static_cast<double>(w)), 1, height);
  std::uniform_int_distribution<std::int64_t> px(0, width - w);
  std::uniform_int_distribution<std::int64_t> py(0, height - h);
  const std::int64_t x = px(rng);
  const std::int64_t y = py(rng);
  return BBox{x, y, x + w, y + h};
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_categories < 2) throw std::invalid_argument("need at least 2 categories");
  if (code_dim < 3 * num_categories) {
    throw std::invalid_argument("code_dim must be at least 3 x num_categories");
  }
  if (fc1_dim == 0 || regions_per_image == 0) throw std::invalid_argument("empty synthetic layer");
  for (double f : {target_fraction, context_fraction, clutter_fraction}) {
    if (!(f >= 0.0)) throw std::invalid_argument("fractions must be non-negative");
  }
  if (std::abs(target_fraction + context_fraction + clutter_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("region fractions must sum to 1");
  }
  if (!(peak_concentration > 0.0)) throw std::invalid_argument("peak_concentration must be positive");
  if (!(cross_talk >= 0.0 && cross_talk <= 1.0)) throw std::invalid_argument("cross_talk outside [0,1]");
  if (!(fc1_noise >= 0.0)) throw std::invalid_argument("fc1_noise must be non-negative");
  for (const auto& [split, n] : images_per_split) {
    if (std::find(kSplitOrder.begin(), kSplitOrder.end(), split) == kSplitOrder.end()) {
      throw std::invalid_argument("unknown split " + split);
    }
  }
  region_counts(*this);
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
  return json{{"num_categories", s.num_categories},
              {"code_dim", s.code_dim},
              {"fc1_dim", s.fc1_dim},
              {"images_per_split", s.images_per_split},
              {"regions_per_image", s.regions_per_image},
              {"target_fraction", s.target_fraction},
              {"context_fraction", s.context_fraction},
              {"clutter_fraction", s.clutter_fraction},
              {"peak_concentration", s.peak_concentration},
              {"cross_talk", s.cross_talk},
              {"scale_mode", to_string(s.scale_mode)},
              {"fc1_noise", s.fc1_noise},
              {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  try {
    s.num_categories = j.value("num_categories", s.num_categories);
    s.code_dim = j.value("code_dim", s.code_dim);
    s.fc1_dim = j.value("fc1_dim", s.fc1_dim);
    s.images_per_split = j.value("images_per_split", s.images_per_split);
    s.regions_per_image = j.value("regions_per_image", s.regions_per_image);
    s.target_fraction = j.value("target_fraction", s.target_fraction);
    s.context_fraction = j.value("context_fraction", s.context_fraction);
    s.clutter_fraction = j.value("clutter_fraction", s.clutter_fraction);
    s.peak_concentration = j.value("peak_concentration", s.peak_concentration);
    s.cross_talk = j.value("cross_talk", s.cross_talk);
    s.scale_mode = parse_scale_mode(j.value("scale_mode", to_string(s.scale_mode)));
    s.fc1_noise = j.value("fc1_noise", s.fc1_noise);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<ImageRecord> SyntheticDataset::records(const std::string& split) const {
  std::vector<ImageRecord> out;
  for (const auto& img : images) {
    if (img.split == split) out.push_back(img.record);
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t ncat = spec.num_categories;
  const std::size_t dim = spec.code_dim;
  const RegionCounts counts = region_counts(spec);

  SyntheticDataset data;
  for (std::size_t c = 0; c < ncat; ++c) {
    data.categories.push_back("cat" + std::string(c < 10 ? "0" : "") + std::to_string(c));
  }

  // fc1 = P * softmax + noise, P sparse and non-negative
  std::vector<double> projection(spec.fc1_dim * dim, 0.0);
  {
    std::mt19937_64 rng = seeded_rng(spec.seed, 0xfc1, 0);
    std::bernoulli_distribution keep(0.25);
    std::uniform_real_distribution<double> weight(0.5, 1.5);
    for (double& p : projection) {
      if (keep(rng)) p = weight(rng);
    }
  }

  const double log_min_area = std::log(1.0 / 64.0);
  std::uint64_t split_no = 0;
  for (const auto& split : kSplitOrder) {
    ++split_no;
    const auto it = spec.images_per_split.find(split);
    const std::size_t n_images = it == spec.images_per_split.end() ? 0 : it->second;
    std::vector<std::size_t> labels(n_images);
    for (std::size_t i = 0; i < n_images; ++i) labels[i] = i % ncat;
    {
      std::mt19937_64 rng = seeded_rng(spec.seed, split_no, ~std::uint64_t{0});
      std::shuffle(labels.begin(), labels.end(), rng);
    }
    for (std::size_t i = 0; i < n_images; ++i) {
      std::mt19937_64 rng = seeded_rng(spec.seed, split_no, i);
      SyntheticImage img;
      img.split = split;
      ImageRecord& r = img.record;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05zu", split.c_str(), i);
      r.id = id;
      std::uniform_int_distribution<std::int64_t> side(256, 512);
      r.width = side(rng);
      r.height = side(rng);
      const std::size_t label = labels[i];
      r.labels.assign(ncat, 0);
      r.labels[label] = 1;

      struct Region {
        RegionKind kind;
        BBox box;
        double objectness;
        std::vector<float> row;
      };
      std::vector<Region> regions;
      std::uniform_real_distribution<double> planted_obj(0.5, 1.0);
      std::uniform_real_distribution<double> clutter_obj(0.0, 0.5);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> any_dim(0, dim - 1);
      std::uniform_int_distribution<std::size_t> other_cat(0, ncat - 2);
      std::uniform_int_distribution<std::size_t> which_sig(0, 1);
      const bool disjoint = spec.scale_mode == ScaleMode::Disjoint;
      for (std::size_t k = 0; k < counts.target; ++k) {
        const BBox box = disjoint ? sample_box(r.width, r.height, std::log(0.3), 0.0, rng)
                                  : sample_box(r.width, r.height, log_min_area, 0.0, rng);
        regions.push_back({RegionKind::Target, box, planted_obj(rng),
                           dirichlet_row(dim, {2 * label, 2 * label + 1}, spec.peak_concentration, rng)});
      }
      for (std::size_t k = 0; k < counts.context; ++k) {
        const BBox box = disjoint ? sample_box(r.width, r.height, log_min_area, std::log(0.11), rng)
                                  : sample_box(r.width, r.height, log_min_area, 0.0, rng);
        regions.push_back({RegionKind::Context, box, planted_obj(rng),
                           dirichlet_row(dim, {2 * ncat + label}, spec.peak_concentration, rng)});
      }
      for (std::size_t k = 0; k < counts.clutter; ++k) {
        const BBox box = sample_box(r.width, r.height, log_min_area, 0.0, rng);
        std::size_t peak;
        if (unit(rng) < spec.cross_talk) {
          std::size_t other = other_cat(rng);
          if (other >= label) ++other;
          peak = 2 * other + which_sig(rng);
        } else {
          peak = any_dim(rng);
        }
        regions.push_back({RegionKind::Clutter, box, clutter_obj(rng),
                           dirichlet_row(dim, {peak}, spec.peak_concentration, rng)});
      }
      std::stable_sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
        return a.objectness > b.objectness;
      });

      const std::size_t n = regions.size();
      CodeMatrix softmax("softmax", n, dim);
      CodeMatrix fc1("fc1", n, spec.fc1_dim);
      std::normal_distribution<double> noise(0.0, spec.fc1_noise);
      for (std::size_t k = 0; k < n; ++k) {
        const Region& reg = regions[k];
        r.proposals.push_back({reg.box, reg.objectness});
        img.kinds.push_back(reg.kind);
        std::copy(reg.row.begin(), reg.row.end(), softmax.row(k).begin());
        auto out = fc1.row(k);
        for (std::size_t j = 0; j < spec.fc1_dim; ++j) {
          double v = 0.0;
          for (std::size_t d = 0; d < dim; ++d) v += projection[j * dim + d] * reg.row[d];
          out[j] = static_cast<float>(v + (spec.fc1_noise > 0.0 ? noise(rng) : 0.0));
        }
      }
      r.codes.emplace("softmax", std::move(softmax));
      r.codes.emplace("fc1", std::move(fc1));
      data.images.push_back(std::move(img));
    }
  }
  return data;
}

fs::path write_synthetic(const SyntheticDataset& data, const fs::path& dir) {
  fs::create_directories(dir / "proposals");
  fs::create_directories(dir / "codes");
  DatasetManifest manifest;
  manifest.categories = data.categories;
  json annotations = json::object();
  json groups = json::object();
  for (const auto& split : kSplitOrder) manifest.splits[split] = {};
  for (const auto& img : data.images) {
    const ImageRecord& r = img.record;
    manifest.splits[img.split].push_back(r.id);
    ManifestImage entry;
    entry.width = r.width;
    entry.height = r.height;
    entry.labels.push_back(data.categories[r.single_label()]);
    entry.proposals_path = "proposals/" + r.id + ".json";
    write_proposals(dir / entry.proposals_path, r.proposals);
    for (const auto& [layer, codes] : r.codes) {
      entry.codes[layer] = "codes/" + r.id + "." + layer + ".rnc";
      write_codes(dir / entry.codes[layer], codes);
    }
    manifest.images.emplace(r.id, std::move(entry));
    json boxes = json::array();
    for (std::size_t k = 0; k < r.proposals.size(); ++k) {
      if (img.kinds[k] == RegionKind::Target) boxes.push_back(bbox_to_json(r.proposals[k].bbox));
    }
    annotations[r.id] = std::move(boxes);
    groups[r.id] = data.categories[r.single_label()];
  }
  write_json(dir / "annotations.json", annotations);
  write_json(dir / "groups.json", groups);
  const fs::path manifest_path = dir / "manifest.json";
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace deepattr
