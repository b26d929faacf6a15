#include <algorithm>
#include <cmath>

#include "gasa/ops.hpp"
#include "gasa/verify.hpp"

namespace gasa::verify {

double rel_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult gradcheck(const ParamList& params, const std::function<Tensor()>& loss_fn, double eps,
                          std::size_t max_per_param, double perturb) {
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    const Tensor loss = loss_fn();
    backward(loss);
    for (const auto& p : params) {
      const auto g = p.tensor.grad();
      std::vector<double> a(p.tensor.numel(), 0.0);
      std::copy(g.begin(), g.end(), a.begin());
      for (double& x : a) x *= 1.0 + perturb;
      analytic.push_back(std::move(a));
    }
  }
  Tape::current().clear();

  GradCheckResult r;
  NoGradGuard no_grad;
  ops::KinkRecorder kinks;
  loss_fn();
  const std::uint64_t base_sig = kinks.signature();
  auto eval = [&](double* v, double at, std::uint64_t& sig) {
    *v = at;
    kinks.reset();
    const double f = loss_fn().item();
    sig = kinks.signature();
    return f;
  };
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    const std::size_t n = t.numel();
    const std::size_t count = max_per_param == 0 ? n : std::min(n, max_per_param);
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t i = count == n ? s : s * n / count;
      double* v = &t.mutable_values()[i];
      const double orig = *v;
      double h = eps, numeric = 0.0;
      for (int refine = 0;; ++refine) {
        std::uint64_t sp = 0, sm = 0;
        const double fp = eval(v, orig + h, sp);
        const double fm = eval(v, orig - h, sm);
        numeric = (fp - fm) / (2.0 * h);
        if ((sp == base_sig && sm == base_sig) || refine == 3) break;
        if (refine == 0) ++r.kink_refined;
        h /= 10.0;
      }
      *v = orig;
      const double e = rel_error(analytic[pi][i], numeric);
      ++r.checked;
      if (e > r.max_rel_error || r.worst_param.empty()) {
        r.max_rel_error = e;
        r.worst_param = params[pi].name;
        r.worst_index = i;
      }
    }
  }
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
  return r;
}

}  // namespace gasa::verify
