#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ellipsedet/losses.hpp"

namespace ellipsedet {

enum class GradLoss { kFocal, kOffset, kSizeOri, kPiou, kSeg };

std::string to_string(GradLoss loss);
GradLoss grad_loss_from_string(const std::string& s);
const std::vector<GradLoss>& all_grad_losses();

// Largest accepted relative error: 1e-5 for the kernelized PIOU loss, 1e-6 otherwise.
double grad_tolerance(GradLoss loss);

struct GradSuiteResult {
  GradLoss loss = GradLoss::kFocal;
  int trials = 0;
  double step = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

// Central-difference step: 1e-5, except 1e-6 for PIOU. The PIOU angle partial
// has a lever arm of the box radius times the kernel factor, and at 1e-5 the
// difference quotient's own truncation error reaches ~1e-5.
double grad_step(GradLoss loss);

// Checks the analytic gradient on `trials` random instances drawn from `seed`.
// The regression losses cycle through their L1/smooth-L1 and raw/wrapped modes.
// `h` <= 0 selects grad_step(loss).
GradSuiteResult run_gradcheck(GradLoss loss, int trials, std::uint64_t seed, double h = 0.0);

}  // namespace ellipsedet
