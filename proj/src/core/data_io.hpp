// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_DATA_IO_HPP
#define FSKATE_CORE_DATA_IO_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace fskate {

/// One performance: `length` clip features of width `dim`, row-major.
struct FeatureSequence {
  std::string id;
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<float> values;
};

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

/// FSFV container: "FSFV", u32 version, u32 T, u32 d, T*d f32, all
/// little-endian.
void write_features(const std::filesystem::path& path, const FeatureSequence& seq);
/// The id is taken from the file stem.
FeatureSequence read_features(const std::filesystem::path& path);

enum class Split { train, test };
std::string to_string(Split split);

enum class Target { tes, pcs };
std::string to_string(Target target);
Target parse_target(const std::string& name);

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;  // resolved against the manifest directory
  double tes = 0.0;
  double pcs = 0.0;
  Split split = Split::train;

  double label(Target t) const { return t == Target::tes ? tes : pcs; }
};

/// CSV with header exactly `id,path,tes,pcs,split`. Errors carry the
/// 1-based line number.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct Sample {
  ManifestEntry entry;
  FeatureSequence features;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;

  std::vector<const Sample*> split(Split s) const;
};

/// Loads the manifest and every feature file; all widths must agree with
/// the first entry.
Dataset load_dataset(const std::filesystem::path& manifest);

// ---------------------------------------------------------------- synthetic

struct SyntheticConfig {
  std::size_t n_videos = 500;
  std::size_t n_train = 400;
  std::size_t t_min = 80;
  std::size_t t_max = 120;
  std::size_t dim = 32;
  std::size_t events_min = 2;
  std::size_t events_max = 6;
  std::size_t event_len_min = 4;
  std::size_t event_len_max = 8;
  std::size_t event_types = 8;
  double difficulty_min = 2.0;
  double difficulty_max = 8.0;
  double event_gain = 0.8;  // pattern amplitude per unit difficulty
  double tes_base = 20.0;
  double pcs_base = 30.0;
  double pcs_amplitude = 10.0;
  double trend_amplitude = 1.0;       // weight of the quality signal
  double quality_sharpness = 2.0;     // kappa in tanh(kappa * (level + drift))
  double background_amplitude = 0.5;  // smooth per-channel oscillation
  double noise = 0.3;
  std::size_t n_matches = 5;
  std::uint64_t seed = 0;
};

void validate(const SyntheticConfig& cfg);

struct PlantedEvent {
  std::size_t type = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  double difficulty = 0.0;
};

struct Oscillation {
  double amplitude = 0.0;
  double period = 1.0;
  double phase = 0.0;

  double at(std::size_t t) const;
};

/// Generator record for one video. Labels are closed-form functions of
/// these fields only.
struct SyntheticVideo {
  std::string id;
  std::size_t length = 0;
  Split split = Split::train;
  std::string match;
  std::string player;
  std::vector<PlantedEvent> events;
  double quality_level = 0.0;
  double quality_sharpness = 0.0;
  std::vector<Oscillation> quality_drift;
  double quality_mean = 0.0;
  double tes = 0.0;
  double pcs = 0.0;

  bool in_event(std::size_t t) const;
};

struct SyntheticDataset {
  SyntheticConfig config;
  std::vector<SyntheticVideo> videos;
  std::vector<FeatureSequence> features;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

/// Writes features/<id>.fsfv, manifest.csv, events.json and scores.csv.
void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data);

nlohmann::json to_json(const SyntheticConfig& cfg);
nlohmann::json to_json(const SyntheticVideo& video);
SyntheticVideo synthetic_video_from_json(const nlohmann::json& j);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace fskate

#endif  // FSKATE_CORE_DATA_IO_HPP
