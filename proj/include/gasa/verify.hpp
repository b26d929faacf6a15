#pragma once

// Finite-difference gradient checking, brute-force oracles and the property
// suites run by `gasa verify`.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gasa/loss_metrics.hpp"
#include "gasa/params.hpp"
#include "gasa/trainer.hpp"

namespace gasa::verify {

// ---- gradient checking ----

/// |a - n| / max(|a|, |n|, floor).
double rel_error(double analytic, double numeric, double floor = 1e-6);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Elements whose stencil crossed a leaky-ReLU kink at the requested eps
  /// and were re-differenced with a smaller one.
  std::size_t kink_refined = 0;
};

/// Compares backward() against central differences of `loss_fn` for every
/// element of every parameter (at most `max_per_param` evenly spaced elements
/// each when nonzero). When the +/-eps stencil changes the leaky-ReLU sign
/// pattern of the base point, eps is divided by 10 (at most 3 times) for that
/// element. `perturb` scales the analytic gradients by (1 + perturb) as a
/// detector self-test.
GradCheckResult gradcheck(const ParamList& params, const std::function<Tensor()>& loss_fn, double eps,
                          std::size_t max_per_param = 0, double perturb = 0.0);

// ---- oracles ----

/// O(|dP| |dG|) normalised surface dice with its own surface extraction.
std::optional<double> nsd_bruteforce(const Volume& pred, const Volume& gt, const ClassSet& class_set, double tau,
                                     const Spacing& spacing);

/// Sliding-window probabilities by direct per-voxel accumulation over every
/// covering window. Requires the volume to be at least the patch size.
std::vector<double> sliding_window_dense(const PatchModel& model, const Tensor& volume,
                                         const SlidingWindowConfig& swc);

// ---- suites ----

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  /// Test hook: corrupts analytic gradients so the gradient check must fail.
  bool perturb_gradient = false;
};

/// Tiny full model (2 classes, 8^3, widths [2,4], d_model 4, heads 2): every
/// parameter gradient within 1e-3 of central differences (eps 1e-4).
CheckResult check_model_gradients(const VerifyOptions& opt, double* max_rel_error = nullptr);
/// Primitive ops against finite differences (matmul, conv, softmax, norms, loss).
CheckResult check_op_gradients(const VerifyOptions& opt);
CheckResult check_gasa_invariants(const VerifyOptions& opt, std::size_t shapes = 120);
CheckResult check_loss_sanity(const VerifyOptions& opt, std::size_t random_inputs = 1000);
CheckResult check_nsd_oracle(const VerifyOptions& opt, std::size_t volumes = 200);
CheckResult check_resampling(const VerifyOptions& opt, std::size_t cases = 100);
CheckResult check_schedule(const VerifyOptions& opt);
CheckResult check_inference(const VerifyOptions& opt);

struct VerifyReport {
  std::vector<CheckResult> checks;
  double max_grad_rel_error = 0.0;
  bool all_passed() const;
  nlohmann::ordered_json to_json() const;
};

VerifyReport run_verify_suite(const VerifyOptions& opt);

}  // namespace gasa::verify
