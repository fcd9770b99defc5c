// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_TESTS_TEST_UTIL_HPP
#define FSKATE_TESTS_TEST_UTIL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "data_io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace fskate::testing {

using TD = Tensor<double>;

inline TD random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TD::from(std::move(shape), std::move(v), requires_grad);
}

inline void randomize(TD& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& x : t.mutable_data()) x = rng.uniform(lo, hi);
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
};

/// Compares autodiff gradients of the scalar built by `loss` against central
/// differences with step h. The error per tensor is
/// ||g_auto - g_fd|| / max(||g_auto|| + ||g_fd||, 1e-12).
inline GradCheck check_gradients(const std::function<TD(Tape<double>&)>& loss, std::vector<std::pair<std::string, TD>> params,
                                 SteMode ste = SteMode::straight_through, double h = 1e-5) {
  for (auto& [name, p] : params) p.zero_grad();
  {
    Tape<double> tape(true, ste);
    auto l = loss(tape);
    tape.backward(l);
  }
  GradCheck out;
  for (auto& [name, p] : params) {
    std::vector<double> autodiff(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), autodiff.begin());
    double diff_sq = 0, a_sq = 0, n_sq = 0;
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      Tape<double> plus(false, ste);
      const double fp = loss(plus).item();
      w[i] = saved - h;
      Tape<double> minus(false, ste);
      const double fm = loss(minus).item();
      w[i] = saved;
      const double numeric = (fp - fm) / (2 * h);
      diff_sq += (numeric - autodiff[i]) * (numeric - autodiff[i]);
      a_sq += autodiff[i] * autodiff[i];
      n_sq += numeric * numeric;
    }
    const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(a_sq) + std::sqrt(n_sq), 1e-12);
    if (rel >= out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = name;
    }
  }
  return out;
}

/// In-memory dataset over generated videos (no files).
inline Dataset to_dataset(const SyntheticDataset& synth) {
  Dataset d;
  d.dim = synth.config.dim;
  for (std::size_t i = 0; i < synth.videos.size(); ++i) {
    const auto& v = synth.videos[i];
    Sample s;
    s.entry.id = v.id;
    s.entry.tes = v.tes;
    s.entry.pcs = v.pcs;
    s.entry.split = v.split;
    s.features = synth.features[i];
    d.samples.push_back(std::move(s));
  }
  return d;
}

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fskate_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fskate::testing

#endif  // FSKATE_TESTS_TEST_UTIL_HPP
