// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "data_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "errors.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace fskate {

namespace {

static_assert(std::endian::native == std::endian::little, "FSFV/FSCK writers assume a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + offset, 4);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    fields.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- FSFV

void write_features(const fs::path& path, const FeatureSequence& seq) {
  if (seq.length == 0 || seq.dim == 0) throw FormatError("feature sequence must have T >= 1 and d >= 1");
  if (seq.values.size() != seq.length * seq.dim)
    throw FormatError("feature sequence holds " + std::to_string(seq.values.size()) + " values, expected T*d=" +
                      std::to_string(seq.length * seq.dim));
  for (float v : seq.values)
    if (!std::isfinite(v)) throw FormatError("refusing to write non-finite feature value for '" + seq.id + "'");
  std::string bytes = "FSFV";
  put_u32(bytes, kFeatureFormatVersion);
  put_u32(bytes, static_cast<std::uint32_t>(seq.length));
  put_u32(bytes, static_cast<std::uint32_t>(seq.dim));
  const std::size_t header = bytes.size();
  bytes.resize(header + seq.values.size() * 4);
  std::memcpy(bytes.data() + header, seq.values.data(), seq.values.size() * 4);
  write_file(path, bytes);
}

FeatureSequence read_features(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string where = "'" + path.string() + "'";
  if (bytes.size() < 4 || bytes.compare(0, 4, "FSFV") != 0) throw FormatError(where + ": bad magic (expected FSFV)");
  if (bytes.size() < 16) throw FormatError(where + ": truncated header");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureFormatVersion)
    throw FormatError(where + ": unsupported version " + std::to_string(version));
  FeatureSequence seq;
  seq.id = path.stem().string();
  seq.length = get_u32(bytes, 8);
  seq.dim = get_u32(bytes, 12);
  if (seq.length == 0 || seq.dim == 0) throw FormatError(where + ": T and d must be positive");
  const std::uint64_t expected = 16 + std::uint64_t(seq.length) * seq.dim * 4;
  if (bytes.size() < expected)
    throw FormatError(where + ": truncated payload (T=" + std::to_string(seq.length) + ", d=" +
                      std::to_string(seq.dim) + " needs " + std::to_string(expected) + " bytes, file has " +
                      std::to_string(bytes.size()) + ")");
  if (bytes.size() > expected) throw FormatError(where + ": trailing bytes after payload");
  seq.values.resize(seq.length * seq.dim);
  std::memcpy(seq.values.data(), bytes.data() + 16, seq.values.size() * 4);
  for (std::size_t i = 0; i < seq.values.size(); ++i)
    if (!std::isfinite(seq.values[i]))
      throw FormatError(where + ": non-finite value at index " + std::to_string(i));
  return seq;
}

// ---------------------------------------------------------------- manifest

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::string to_string(Target target) { return target == Target::tes ? "tes" : "pcs"; }

Target parse_target(const std::string& name) {
  if (name == "tes" || name == "TES") return Target::tes;
  if (name == "pcs" || name == "PCS") return Target::pcs;
  throw ContractError("unknown target '" + name + "' (expected tes or pcs)");
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "id,path,tes,pcs,split") fail("header must be exactly 'id,path,tes,pcs,split'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) fail("expected 5 fields, found " + std::to_string(f.size()));
    ManifestEntry e;
    e.id = f[0];
    if (e.id.empty()) fail("empty id");
    if (f[1].empty()) fail("empty path for '" + e.id + "'");
    e.path = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : base / f[1];
    if (!parse_double(f[2], e.tes) || !std::isfinite(e.tes) || e.tes < 0) fail("invalid tes '" + f[2] + "'");
    if (!parse_double(f[3], e.pcs) || !std::isfinite(e.pcs) || e.pcs < 0) fail("invalid pcs '" + f[3] + "'");
    if (f[4] == "train") {
      e.split = Split::train;
    } else if (f[4] == "test") {
      e.split = Split::test;
    } else {
      fail("unknown split '" + f[4] + "' (expected train or test)");
    }
    if (!ids.insert(e.id).second) fail("duplicate id '" + e.id + "'");
    entries.push_back(std::move(e));
  }
  if (lineno == 0) throw ManifestError(path.string() + ": empty manifest");
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::string out = "id,path,tes,pcs,split\n";
  for (const auto& e : entries)
    out += e.id + "," + e.path.generic_string() + "," + format_double(e.tes) + "," + format_double(e.pcs) + "," +
           to_string(e.split) + "\n";
  write_file(path, out);
}

std::vector<const Sample*> Dataset::split(Split s) const {
  std::vector<const Sample*> out;
  for (const auto& sample : samples)
    if (sample.entry.split == s) out.push_back(&sample);
  return out;
}

Dataset load_dataset(const fs::path& manifest) {
  Dataset data;
  for (auto& e : load_manifest(manifest)) {
    if (!fs::exists(e.path)) throw ManifestError("feature file for '" + e.id + "' not found: " + e.path.string());
    Sample s;
    s.features = read_features(e.path);
    s.features.id = e.id;
    if (data.samples.empty()) {
      data.dim = s.features.dim;
    } else if (s.features.dim != data.dim) {
      throw ManifestError("feature width of '" + e.id + "' is " + std::to_string(s.features.dim) +
                          ", dataset width is " + std::to_string(data.dim));
    }
    s.entry = std::move(e);
    data.samples.push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------- synthetic

void validate(const SyntheticConfig& c) {
  auto fail = [](const std::string& m) { throw ContractError("synthetic config: " + m); };
  if (c.n_videos == 0) fail("n_videos must be positive");
  if (c.n_train > c.n_videos) fail("n_train exceeds n_videos");
  if (c.t_min == 0 || c.t_min > c.t_max) fail("invalid T range");
  if (c.dim < 2) fail("dim must be at least 2");
  if (c.events_min > c.events_max) fail("invalid event count range");
  if (c.events_max > c.event_types) fail("events_max exceeds the number of event types");
  if (c.event_len_min == 0 || c.event_len_min > c.event_len_max) fail("invalid event length range");
  if (c.events_max * c.event_len_max > c.t_min) fail("events may not fit in the shortest video");
  if (c.difficulty_min > c.difficulty_max || c.difficulty_min < 0) fail("invalid difficulty range");
  if (c.noise < 0) fail("noise must be non-negative");
  if (c.n_matches == 0) fail("n_matches must be positive");
  if (c.tes_base < 0 || c.pcs_base - std::abs(c.pcs_amplitude) < 0) fail("labels could be negative");
}

double Oscillation::at(std::size_t t) const {
  return amplitude * std::sin(2.0 * M_PI * static_cast<double>(t) / period + phase);
}

bool SyntheticVideo::in_event(std::size_t t) const {
  for (const auto& e : events)
    if (t >= e.start && t < e.start + e.length) return true;
  return false;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  SyntheticDataset out;
  out.config = cfg;

  const std::size_t event_dims = cfg.dim / 2;
  const std::size_t bg_dims = cfg.dim - event_dims;

  // Fixed per seed: one unit pattern per event type in the event subspace,
  // and the quality direction in the background subspace.
  Rng patterns_rng = Rng::substream(cfg.seed, "synth.patterns");
  auto unit_vector = [&](std::size_t n) {
    std::vector<double> v(n);
    double norm = 0;
    for (auto& x : v) {
      x = patterns_rng.normal();
      norm += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm);
    return v;
  };
  std::vector<std::vector<double>> patterns;
  for (std::size_t k = 0; k < cfg.event_types; ++k) patterns.push_back(unit_vector(event_dims));
  const std::vector<double> quality_dir = unit_vector(bg_dims);

  Rng rng = Rng::substream(cfg.seed, "synth");
  Rng noise_rng = Rng::substream(cfg.seed, "synth.noise");

  for (std::size_t i = 0; i < cfg.n_videos; ++i) {
    SyntheticVideo v;
    char id[32];
    std::snprintf(id, sizeof(id), "vid%04zu", i);
    v.id = id;
    v.split = i < cfg.n_train ? Split::train : Split::test;
    v.match = "m" + std::to_string(i % cfg.n_matches);
    v.player = "p" + std::to_string(i / cfg.n_matches);
    v.length = static_cast<std::size_t>(rng.between(cfg.t_min, cfg.t_max));

    // Events: distinct types, non-overlapping, random gaps.
    const auto n_events = static_cast<std::size_t>(rng.between(cfg.events_min, cfg.events_max));
    std::vector<std::size_t> types(cfg.event_types);
    for (std::size_t k = 0; k < types.size(); ++k) types[k] = k;
    rng.shuffle(types.begin(), types.end());
    std::size_t occupied = 0;
    for (std::size_t k = 0; k < n_events; ++k) {
      PlantedEvent e;
      e.type = types[k];
      e.length = static_cast<std::size_t>(rng.between(cfg.event_len_min, cfg.event_len_max));
      e.difficulty = rng.uniform(cfg.difficulty_min, cfg.difficulty_max);
      occupied += e.length;
      v.events.push_back(e);
    }
    const std::size_t free_steps = v.length - occupied;
    std::vector<std::size_t> cuts(n_events);
    for (auto& c : cuts) c = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(free_steps)));
    std::sort(cuts.begin(), cuts.end());
    std::size_t cursor = 0, prev_cut = 0;
    for (std::size_t k = 0; k < n_events; ++k) {
      cursor += cuts[k] - prev_cut;
      prev_cut = cuts[k];
      v.events[k].start = cursor;
      cursor += v.events[k].length;
    }

    v.quality_level = rng.uniform(-1.0, 1.0);
    v.quality_sharpness = cfg.quality_sharpness;
    for (int m = 0; m < 2; ++m)
      v.quality_drift.push_back({rng.uniform(0.2, 0.5), rng.uniform(30.0, 120.0), rng.uniform(0.0, 2.0 * M_PI)});
    std::vector<Oscillation> background;
    for (std::size_t c = 0; c < bg_dims; ++c)
      for (int m = 0; m < 2; ++m)
        background.push_back({cfg.background_amplitude * rng.uniform(0.5, 1.0), rng.uniform(20.0, 80.0),
                              rng.uniform(0.0, 2.0 * M_PI)});

    FeatureSequence seq;
    seq.id = v.id;
    seq.length = v.length;
    seq.dim = cfg.dim;
    seq.values.assign(v.length * cfg.dim, 0.0f);
    double quality_sum = 0;
    for (std::size_t t = 0; t < v.length; ++t) {
      double drift = v.quality_level;
      for (const auto& o : v.quality_drift) drift += o.at(t);
      const double q = std::tanh(v.quality_sharpness * drift);
      quality_sum += q;
      float* row = seq.values.data() + t * cfg.dim;
      for (std::size_t c = 0; c < bg_dims; ++c) {
        const double smooth = background[2 * c].at(t) + background[2 * c + 1].at(t);
        row[event_dims + c] = static_cast<float>(smooth + cfg.trend_amplitude * q * quality_dir[c]);
      }
    }
    for (const auto& e : v.events) {
      const double amp = cfg.event_gain * e.difficulty;
      for (std::size_t t = e.start; t < e.start + e.length; ++t)
        for (std::size_t c = 0; c < event_dims; ++c)
          seq.values[t * cfg.dim + c] += static_cast<float>(amp * patterns[e.type][c]);
    }
    for (auto& x : seq.values) x += static_cast<float>(cfg.noise * noise_rng.normal());

    v.quality_mean = quality_sum / static_cast<double>(v.length);
    v.tes = cfg.tes_base;
    for (const auto& e : v.events) v.tes += e.difficulty;
    v.pcs = cfg.pcs_base + cfg.pcs_amplitude * v.quality_mean;

    out.videos.push_back(std::move(v));
    out.features.push_back(std::move(seq));
  }
  return out;
}

nlohmann::json to_json(const SyntheticConfig& c) {
  return nlohmann::json{{"n_videos", c.n_videos},
                        {"n_train", c.n_train},
                        {"t_min", c.t_min},
                        {"t_max", c.t_max},
                        {"dim", c.dim},
                        {"events_min", c.events_min},
                        {"events_max", c.events_max},
                        {"event_len_min", c.event_len_min},
                        {"event_len_max", c.event_len_max},
                        {"event_types", c.event_types},
                        {"difficulty_min", c.difficulty_min},
                        {"difficulty_max", c.difficulty_max},
                        {"event_gain", c.event_gain},
                        {"tes_base", c.tes_base},
                        {"pcs_base", c.pcs_base},
                        {"pcs_amplitude", c.pcs_amplitude},
                        {"trend_amplitude", c.trend_amplitude},
                        {"quality_sharpness", c.quality_sharpness},
                        {"background_amplitude", c.background_amplitude},
                        {"noise", c.noise},
                        {"n_matches", c.n_matches},
                        {"seed", c.seed}};
}

nlohmann::json to_json(const SyntheticVideo& v) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : v.events)
    events.push_back({{"type", e.type}, {"start", e.start}, {"length", e.length}, {"difficulty", e.difficulty}});
  nlohmann::json drift = nlohmann::json::array();
  for (const auto& o : v.quality_drift)
    drift.push_back({{"amplitude", o.amplitude}, {"period", o.period}, {"phase", o.phase}});
  return nlohmann::json{{"id", v.id},
                        {"length", v.length},
                        {"split", to_string(v.split)},
                        {"match", v.match},
                        {"player", v.player},
                        {"events", events},
                        {"quality", {{"level", v.quality_level}, {"sharpness", v.quality_sharpness}, {"drift", drift}}},
                        {"quality_mean", v.quality_mean},
                        {"tes", v.tes},
                        {"pcs", v.pcs}};
}

SyntheticVideo synthetic_video_from_json(const nlohmann::json& j) {
  SyntheticVideo v;
  v.id = j.at("id").get<std::string>();
  v.length = j.at("length").get<std::size_t>();
  v.split = j.at("split").get<std::string>() == "train" ? Split::train : Split::test;
  v.match = j.at("match").get<std::string>();
  v.player = j.at("player").get<std::string>();
  for (const auto& e : j.at("events"))
    v.events.push_back({e.at("type").get<std::size_t>(), e.at("start").get<std::size_t>(),
                        e.at("length").get<std::size_t>(), e.at("difficulty").get<double>()});
  const auto& q = j.at("quality");
  v.quality_level = q.at("level").get<double>();
  v.quality_sharpness = q.at("sharpness").get<double>();
  for (const auto& o : q.at("drift"))
    v.quality_drift.push_back({o.at("amplitude").get<double>(), o.at("period").get<double>(), o.at("phase").get<double>()});
  v.quality_mean = j.at("quality_mean").get<double>();
  v.tes = j.at("tes").get<double>();
  v.pcs = j.at("pcs").get<double>();
  return v;
}

void write_synthetic(const fs::path& dir, const SyntheticDataset& data) {
  fs::create_directories(dir / "features");
  std::vector<ManifestEntry> entries;
  nlohmann::json log{{"config", to_json(data.config)}, {"videos", nlohmann::json::array()}};
  std::string scores = "match,player,tes,pcs\n";
  for (std::size_t i = 0; i < data.videos.size(); ++i) {
    const auto& v = data.videos[i];
    const fs::path rel = fs::path("features") / (v.id + ".fsfv");
    write_features(dir / rel, data.features[i]);
    entries.push_back({v.id, rel, v.tes, v.pcs, v.split});
    log["videos"].push_back(to_json(v));
    scores += v.match + "," + v.player + "," + format_double(v.tes) + "," + format_double(v.pcs) + "\n";
  }
  write_manifest(dir / "manifest.csv", entries);
  write_file(dir / "events.json", log.dump(1) + "\n");
  write_file(dir / "scores.csv", scores);
}

}  // namespace fskate
