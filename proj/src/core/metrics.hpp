// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_METRICS_HPP
#define FSKATE_CORE_METRICS_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data_io.hpp"
#include "models.hpp"

namespace fskate {

/// Fractional ranks (1-based, ties share the average rank).
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws UndefinedCorrelationError
/// when either ranking has zero variance.
double spearman(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b, O(n log n).
double kendall(std::span<const double> x, std::span<const double> y);

double mse(std::span<const double> pred, std::span<const double> target);

struct Prediction {
  std::string id;
  double target = 0.0;
  double prediction = 0.0;
};

struct EvalReport {
  Target target = Target::pcs;
  std::size_t n = 0;
  double mse = 0.0;
  std::optional<double> spearman;
  std::optional<double> kendall;
  std::string correlation_error;  // set when the correlations are undefined
  std::vector<Prediction> predictions;
};

/// Eval-mode forward over one split. `workers` > 1 evaluates in parallel on
/// read-only model state; results are independent of the worker count.
template <typename Real>
EvalReport evaluate(const Model<Real>& model, const Dataset& data, Split split, Target target,
                    std::size_t workers = 1);

/// Metrics from already-computed predictions.
EvalReport report_from_predictions(std::vector<Prediction> predictions, Target target);

/// `id,target,prediction`.
void write_predictions_csv(const std::filesystem::path& path, const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------- analysis

struct ScoreRow {
  std::string match;
  std::string player;
  double tes = 0.0;
  double pcs = 0.0;
};

using ScoreTable = std::vector<ScoreRow>;

/// CSV with header `match,player,tes,pcs`; (match, player) must be unique.
ScoreTable load_score_table(const std::filesystem::path& path);

enum class GroupBy { match, player };
GroupBy parse_group_by(const std::string& name);

struct GroupCorrelation {
  std::string group;
  double rho = 0.0;
  double tau = 0.0;
  std::size_t n = 0;
};

struct SkippedGroup {
  std::string group;
  std::size_t n = 0;
  std::string reason;
};

struct AnalysisResult {
  std::vector<GroupCorrelation> groups;
  std::vector<SkippedGroup> skipped;
};

inline constexpr std::size_t kMinGroupSize = 3;

/// Per-group TES-vs-PCS Spearman and Kendall. Groups smaller than
/// kMinGroupSize, or with constant scores, are listed as skipped.
AnalysisResult analyze_scores(const ScoreTable& table, GroupBy group_by);

/// `group,rho,tau,n`.
void write_analysis_csv(const std::filesystem::path& path, const AnalysisResult& result);

}  // namespace fskate

#endif  // FSKATE_CORE_METRICS_HPP
