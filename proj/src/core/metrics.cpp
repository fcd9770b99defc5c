// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <thread>

namespace fs = std::filesystem;

namespace fskate {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_n, const char* what) {
  if (x.size() != y.size())
    throw ContractError(std::string(what) + ": length mismatch " + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()));
  if (x.size() < min_n)
    throw ContractError(std::string(what) + ": needs at least " + std::to_string(min_n) + " values, got " +
                        std::to_string(x.size()));
}

// Ranks times two, so ties at half-integers stay integral.
std::vector<std::int64_t> doubled_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::int64_t> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j; their average doubled is i+1+j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = static_cast<std::int64_t>(i + 1 + j);
    i = j;
  }
  return ranks;
}

// Counts pairs tied within runs of equal keys.
std::int64_t tied_pairs(const std::vector<double>& sorted) {
  std::int64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Merge sort on `v`, returning the number of inversions.
std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_count_swaps(v, buf, lo, mid) + sort_count_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return swaps;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

bool parse_num(const std::string& s, double& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> f;
  std::size_t pos = 0;
  while (true) {
    const auto c = line.find(',', pos);
    f.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
    if (c == std::string::npos) return f;
    pos = c + 1;
  }
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  const auto doubled = doubled_ranks(values);
  std::vector<double> out(doubled.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(doubled[i]) / 2.0;
  return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "spearman");
  const auto rx = doubled_ranks(x), ry = doubled_ranks(y);
  const auto n = static_cast<__int128>(x.size());
  __int128 sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += static_cast<__int128>(rx[i]) * rx[i];
    syy += static_cast<__int128>(ry[i]) * ry[i];
    sxy += static_cast<__int128>(rx[i]) * ry[i];
  }
  const __int128 cov = n * sxy - sx * sy;
  const __int128 vx = n * sxx - sx * sx;
  const __int128 vy = n * syy - sy * sy;
  if (vx == 0 || vy == 0) throw UndefinedCorrelationError("spearman: zero rank variance");
  const double rho = static_cast<double>(cov) / std::sqrt(static_cast<double>(vx) * static_cast<double>(vy));
  return std::clamp(rho, -1.0, 1.0);
}

double kendall(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "kendall");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const std::int64_t ties_x = tied_pairs(xs);
  std::int64_t ties_xy = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && xs[i] == xs[i - 1] && ys[i] == ys[i - 1]) {
      ++run;
    } else {
      ties_xy += run * (run - 1) / 2;
      run = 1;
    }
  }
  std::vector<double> buf(n);
  const std::int64_t swaps = sort_count_swaps(ys, buf, 0, n);
  const std::int64_t ties_y = tied_pairs(ys);
  const auto pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t score = pairs - ties_x - ties_y + ties_xy - 2 * swaps;
  if (pairs == ties_x || pairs == ties_y) throw UndefinedCorrelationError("kendall: all pairs tied in one argument");
  const double tau =
      static_cast<double>(score) / std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
  return std::clamp(tau, -1.0, 1.0);
}

double mse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, 1, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

EvalReport report_from_predictions(std::vector<Prediction> predictions, Target target) {
  EvalReport r;
  r.target = target;
  r.n = predictions.size();
  std::vector<double> p, t;
  for (const auto& pr : predictions) {
    p.push_back(pr.prediction);
    t.push_back(pr.target);
  }
  r.mse = mse(p, t);
  try {
    if (r.n < 2) throw UndefinedCorrelationError("correlation needs n >= 2, got " + std::to_string(r.n));
    r.spearman = spearman(p, t);
    r.kendall = kendall(p, t);
  } catch (const UndefinedCorrelationError& e) {
    r.spearman.reset();
    r.kendall.reset();
    r.correlation_error = e.what();
  }
  r.predictions = std::move(predictions);
  return r;
}

template <typename Real>
EvalReport evaluate(const Model<Real>& model, const Dataset& data, Split split, Target target, std::size_t workers) {
  const auto samples = data.split(split);
  if (samples.empty()) throw ContractError("evaluate: split '" + to_string(split) + "' is empty");
  std::vector<Prediction> preds(samples.size());
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = *samples[i];
      auto f = features_tensor<Real>(s.features.length, s.features.dim, s.features.values);
      preds[i] = {s.entry.id, s.entry.label(target), model.predict(f)};
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, samples.size());
  if (workers == 1) {
    run_range(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (samples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run_range(std::min(samples.size(), w * chunk), std::min(samples.size(), (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return report_from_predictions(std::move(preds), target);
}

void write_predictions_csv(const fs::path& path, const std::vector<Prediction>& predictions) {
  std::string out = "id,target,prediction\n";
  for (const auto& p : predictions) out += p.id + "," + format_double(p.target) + "," + format_double(p.prediction) + "\n";
  write_text(path, out);
}

std::vector<Prediction> read_predictions_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "id,target,prediction") throw FormatError(path.string() + ":1: bad header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    Prediction p;
    if (f.size() != 3 || !parse_num(f[1], p.target) || !parse_num(f[2], p.prediction))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed prediction row");
    p.id = f[0];
    out.push_back(std::move(p));
  }
  return out;
}

ScoreTable load_score_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score table '" + path.string() + "'");
  ScoreTable table;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "match,player,tes,pcs") fail("header must be exactly 'match,player,tes,pcs'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 4) fail("expected 4 fields, found " + std::to_string(f.size()));
    ScoreRow r{f[0], f[1], 0, 0};
    if (r.match.empty() || r.player.empty()) fail("empty match or player");
    if (!parse_num(f[2], r.tes)) fail("invalid tes '" + f[2] + "'");
    if (!parse_num(f[3], r.pcs)) fail("invalid pcs '" + f[3] + "'");
    if (!seen.insert({r.match, r.player}).second) fail("duplicate (match, player) '" + r.match + "," + r.player + "'");
    table.push_back(std::move(r));
  }
  if (table.empty()) throw ContractError("score table '" + path.string() + "' has no rows");
  return table;
}

GroupBy parse_group_by(const std::string& name) {
  if (name == "match") return GroupBy::match;
  if (name == "player") return GroupBy::player;
  throw ContractError("unknown group key '" + name + "' (expected match or player)");
}

AnalysisResult analyze_scores(const ScoreTable& table, GroupBy group_by) {
  if (table.empty()) throw ContractError("analyze_scores: empty score table");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : table) {
    auto& g = groups[group_by == GroupBy::match ? r.match : r.player];
    g.first.push_back(r.tes);
    g.second.push_back(r.pcs);
  }
  AnalysisResult result;
  for (const auto& [name, g] : groups) {
    const std::size_t n = g.first.size();
    if (n < kMinGroupSize) {
      result.skipped.push_back({name, n, "fewer than " + std::to_string(kMinGroupSize) + " rows"});
      continue;
    }
    try {
      result.groups.push_back({name, spearman(g.first, g.second), kendall(g.first, g.second), n});
    } catch (const UndefinedCorrelationError& e) {
      result.skipped.push_back({name, n, e.what()});
    }
  }
  return result;
}

void write_analysis_csv(const fs::path& path, const AnalysisResult& result) {
  std::string out = "group,rho,tau,n\n";
  for (const auto& g : result.groups)
    out += g.group + "," + format_double(g.rho) + "," + format_double(g.tau) + "," + std::to_string(g.n) + "\n";
  write_text(path, out);
}

template EvalReport evaluate<float>(const Model<float>&, const Dataset&, Split, Target, std::size_t);
template EvalReport evaluate<double>(const Model<double>&, const Dataset&, Split, Target, std::size_t);

}  // namespace fskate
