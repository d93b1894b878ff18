#include "recal/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <vector>

#include "recal/rng.hpp"

namespace recal {

std::string GradCheckResult::summary() const {
  return str_cat(passed ? "pass" : "FAIL", ": checked ", checked, ", excluded ",
                 excluded, ", failed ", failed, ", worst relative error ", worst_rel,
                 detail.empty() ? "" : str_cat(" (", detail, ")"));
}

namespace {

struct Coord {
  size_t leaf;
  int64_t elem;
};

real eval_at(const std::function<Tensor4()>& f, Tensor4& leaf, int64_t elem, real value) {
  NoGradGuard ng;
  real* slot = &leaf.values_mut()[static_cast<size_t>(elem)];
  const real saved = *slot;
  *slot = value;
  const real out = f().scalar_value();
  *slot = saved;
  return out;
}

}  // namespace

GradCheckResult check_gradients(const std::function<Tensor4()>& forward_scalar,
                                std::span<Tensor4> leaves,
                                const GradCheckOptions& opts) {
  GradCheckResult result;
  if (leaves.empty()) {
    throw UsageError("check_gradients: no leaves given");
  }

  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) {
      throw UsageError("check_gradients: every leaf must require gradients");
    }
    leaf.zero_grad();
  }

  Tensor4 y = forward_scalar();
  y.backward();

  std::vector<std::vector<real>> analytic;
  analytic.reserve(leaves.size());
  int64_t total = 0;
  for (auto& leaf : leaves) {
    if (leaf.has_grad()) {
      auto g = leaf.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(static_cast<size_t>(leaf.numel()), real(0));
    }
    total += leaf.numel();
  }

  std::vector<Coord> coords;
  if (opts.max_coords > 0 && total > opts.max_coords) {
    Rng rng(opts.seed);
    std::unordered_set<int64_t> chosen;
    while (static_cast<int64_t>(chosen.size()) < opts.max_coords) {
      chosen.insert(static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(total))));
    }
    std::vector<int64_t> flat(chosen.begin(), chosen.end());
    std::sort(flat.begin(), flat.end());
    for (int64_t f : flat) {
      size_t leaf = 0;
      int64_t offset = f;
      while (offset >= leaves[leaf].numel()) {
        offset -= leaves[leaf].numel();
        ++leaf;
      }
      coords.push_back({leaf, offset});
    }
  } else {
    for (size_t l = 0; l < leaves.size(); ++l) {
      for (int64_t e = 0; e < leaves[l].numel(); ++e) coords.push_back({l, e});
    }
  }

  const real h = opts.step;
  for (const Coord& c : coords) {
    Tensor4& leaf = leaves[c.leaf];
    const real v0 = leaf.values()[static_cast<size_t>(c.elem)];
    const real a = analytic[c.leaf][static_cast<size_t>(c.elem)];

    const real fd =
        (eval_at(forward_scalar, leaf, c.elem, v0 + h) -
         eval_at(forward_scalar, leaf, c.elem, v0 - h)) /
        (2 * h);

    auto agree = [&](real x, real n) {
      const real scale = std::max(std::abs(x), std::abs(n));
      return std::abs(x - n) <= std::max(opts.abs_floor, opts.rel_tol * scale);
    };

    if (agree(a, fd)) {
      ++result.checked;
      const real scale = std::max({std::abs(a), std::abs(fd), opts.abs_floor});
      result.worst_rel = std::max(result.worst_rel, std::abs(a - fd) / scale);
      continue;
    }

    // Disagreement: refine the step. On smooth ground the quotient converges
    // to the point derivative within a few halvings and agreement at any rung
    // verifies the coordinate. A quotient that never settles has a kink
    // inside the interval; the one-sided slopes at the finest step then
    // adjudicate, since a correct subgradient matches the realized branch.
    // When even those are mutually split the kink sits too close to resolve
    // and the coordinate is excluded rather than judged on blended slopes.
    real hk = h;
    real refined = fd;
    bool settled = false;
    for (int k = 0; k < 6 && !settled; ++k) {
      hk /= 2;
      refined =
          (eval_at(forward_scalar, leaf, c.elem, v0 + hk) -
           eval_at(forward_scalar, leaf, c.elem, v0 - hk)) /
          (2 * hk);
      settled = agree(a, refined);
    }
    if (settled) {
      ++result.checked;
      const real scale = std::max({std::abs(a), std::abs(refined), opts.abs_floor});
      result.worst_rel = std::max(result.worst_rel, std::abs(a - refined) / scale);
      continue;
    }

    const real f0 = eval_at(forward_scalar, leaf, c.elem, v0);
    const real up = (eval_at(forward_scalar, leaf, c.elem, v0 + hk) - f0) / hk;
    const real dn = (f0 - eval_at(forward_scalar, leaf, c.elem, v0 - hk)) / hk;
    if (agree(a, up) || agree(a, dn)) {
      ++result.checked;
      const real side = std::abs(a - up) <= std::abs(a - dn) ? up : dn;
      const real scale = std::max({std::abs(a), std::abs(side), opts.abs_floor});
      result.worst_rel = std::max(result.worst_rel, std::abs(a - side) / scale);
      continue;
    }
    if (!agree(up, dn)) {
      ++result.excluded;
      continue;
    }

    ++result.checked;
    ++result.failed;
    const real scale = std::max({std::abs(a), std::abs(refined), opts.abs_floor});
    const real rel = std::abs(a - refined) / scale;
    result.worst_rel = std::max(result.worst_rel, rel);
    if (result.detail.empty()) {
      result.detail = str_cat("leaf ", c.leaf, " elem ", c.elem, ": analytic ", a,
                              " vs numeric ", refined, " (one-sided ", up, " / ", dn,
                              ")");
    }
  }

  const int64_t visited = result.checked + result.excluded;
  const bool too_many_excluded =
      visited > 0 && static_cast<real>(result.excluded) >
                         opts.max_excluded_fraction * static_cast<real>(visited);
  if (too_many_excluded && result.detail.empty()) {
    result.detail = str_cat("kink guard dropped ", result.excluded, " of ", visited,
                            " coordinates");
  }
  result.passed = result.failed == 0 && result.checked > 0 && !too_many_excluded;
  return result;
}

}  // namespace recal
