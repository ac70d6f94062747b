#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "moexda/autograd.hpp"
#include "moexda/rng.hpp"

namespace moexda {

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1.0});
}

struct FdCheckResult {
  double max_rel = 0.0;
  std::string worst_name;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t checked = 0;
};

// Central-difference check of the analytic gradients already stored in the
// leaves. loss_fn must re-evaluate the objective from the current parameter
// values on every call. If max_entries_per_param >= 0, a random subset of
// coordinates is probed instead of all of them.
inline FdCheckResult fd_check(std::vector<std::pair<std::string, ag::Var>> params,
                              const std::function<double()>& loss_fn, double step = 1e-4,
                              std::int64_t max_entries_per_param = -1, Rng* rng = nullptr) {
  FdCheckResult res;
  for (auto& [name, var] : params) {
    Tensor& v = var.mutable_value();
    const Tensor& g = var.grad();
    if (g.size() != v.size()) {
      throw NumericError("fd_check: no analytic gradient stored for " + name);
    }
    std::vector<std::int64_t> idx;
    if (max_entries_per_param >= 0 && v.size() > max_entries_per_param) {
      if (!rng) throw NumericError("fd_check: subset probing requires an rng");
      std::vector<std::int64_t> all(static_cast<std::size_t>(v.size()));
      for (std::int64_t i = 0; i < v.size(); ++i) all[static_cast<std::size_t>(i)] = i;
      rng->shuffle(all);
      idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_entries_per_param));
    } else {
      idx.resize(static_cast<std::size_t>(v.size()));
      for (std::int64_t i = 0; i < v.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    }
    for (std::int64_t i : idx) {
      const double saved = v[i];
      v[i] = saved + step;
      const double fp = loss_fn();
      v[i] = saved - step;
      const double fm = loss_fn();
      v[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double rel = rel_err(g[i], numeric);
      ++res.checked;
      if (rel > res.max_rel) {
        res.max_rel = rel;
        res.worst_name = name;
        res.worst_index = i;
        res.worst_analytic = g[i];
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace moexda
