#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrnet/config.hpp"
#include "mrnet/objective.hpp"

// Full-model gradient verification in 64-bit evaluation mode: one synthetic
// sample is pushed through the complete loss with the Hungarian matching held
// fixed, then every parameter coordinate is compared against central finite
// differences. Relative error uses a denominator floor so near-zero gradient
// pairs are compared on an absolute scale:
//   rel(a, b) = |a - b| / max(|a|, |b|, floor).

namespace mrnet {

struct GradCheckGroup {
  std::string name;
  int64_t size = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double tolerance = 1e-3;
  double step = 1e-3;
  double loss_value = 0.0;

  bool passed() const {
    for (const auto& g : groups)
      if (g.max_rel_err > tolerance) return false;
    return true;
  }
};

// Base point: double-precision parameters, a fixed sample, the matching
// computed once, and the autodiff gradients per parameter group.
struct GradCheckSetup {
  ModelConfig model;
  LossWeights weights;
  ModelParamsT<double> params;
  VideoSample sample;
  MatchResult match;
  double loss_value = 0.0;
  std::vector<std::pair<std::string, std::vector<double>>> grads;
};

GradCheckSetup gradcheck_setup(const RunConfig& cfg, int n_video, int n_text);

// Forward-only loss at the current parameter values with the fixed matching.
double gradcheck_loss(const GradCheckSetup& setup);

// Central finite differences against setup.grads (which a test may corrupt to
// prove detection works).
GradCheckReport compare_with_fd(GradCheckSetup& setup, double h = 1e-3, double tol = 1e-3,
                                double rel_floor = 1e-3);

GradCheckReport run_gradcheck(const RunConfig& cfg, int n_video, int n_text, double h = 1e-3,
                              double tol = 1e-3);

}  // namespace mrnet
