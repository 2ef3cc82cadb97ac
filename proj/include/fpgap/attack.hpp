#pragma once

#include "fpgap/backends.hpp"
#include "fpgap/milp.hpp"
#include "fpgap/rng.hpp"

namespace fpgap {

/// Tightened clamp images for the perturbation search. Starting from the
/// single-precision x_l = max(x0 - eps, 0) and x_u = min(x0 + eps, 1), the
/// whole tensor steps one ulp inward while either precision's distance to
/// x0 still exceeds eps, so every point of [x_l, x_u] satisfies the
/// single- and double-precision norm bounds simultaneously.
struct ClampBounds {
  ImageF x_l, x_u;
  int steps_lower = 0, steps_upper = 0;
};

namespace attack_detail {

inline bool norms_exceed(const ImageF& a, const ImageF& b, double eps) {
  // single-precision norm, exactly widened, and the exact widened norm,
  // both compared against the verifier's double eps
  float n32 = linf_distance(a, b);
  if (widen(n32) > eps) return true;
  double n64 = 0.0;
  for (int i = 0; i < a.size(); ++i)
    n64 = std::max(n64, std::abs(widen(a[i]) - widen(b[i])));
  return n64 > eps;
}

}  // namespace attack_detail

inline ClampBounds compute_clamp_bounds(const ImageF& x0, double eps) {
  require(eps >= 0 && std::isfinite(eps), "compute_clamp_bounds: bad eps");
  ClampBounds cb{ImageF(x0.shape()), ImageF(x0.shape())};
  float eps_f = to_single(eps);
  for (int i = 0; i < x0.size(); ++i) {
    cb.x_l[i] = std::max(x0[i] - eps_f, 0.0f);
    cb.x_u[i] = std::min(x0[i] + eps_f, 1.0f);
  }
  // A handful of steps suffice except when some x0[i] sits within an ulp of
  // eps itself, where x_l lands at a tiny magnitude and the ulp staircase
  // gets very fine. The cap guards that pathological zone.
  constexpr int kMaxSteps = 1 << 20;
  while (attack_detail::norms_exceed(x0, cb.x_l, eps)) {
    for (int i = 0; i < x0.size(); ++i) cb.x_l[i] = next_after(cb.x_l[i], 1.0f);
    if (++cb.steps_lower > kMaxSteps)
      throw std::logic_error("compute_clamp_bounds: lower tightening did not converge");
  }
  while (attack_detail::norms_exceed(cb.x_u, x0, eps)) {
    for (int i = 0; i < x0.size(); ++i) cb.x_u[i] = next_after(cb.x_u[i], 0.0f);
    if (++cb.steps_upper > kMaxSteps)
      throw std::logic_error("compute_clamp_bounds: upper tightening did not converge");
  }
  return cb;
}

struct AttackParams {
  double u = 2e-7;   // random perturbation bound
  int iters = 1000;  // N
  BackendId backend = BackendId::DIRECT_F32;
  bool record_iterates = false;  // keep accepted iterates (tests)

  void validate() const {
    require(u > 0 && std::isfinite(u), "AttackParams: u must be positive");
    require(iters >= 1, "AttackParams: need at least one iteration");
  }
};

struct AttackOutcome {
  bool success = false;
  ImageF x_adv;  // final iterate regardless of success
  double final_cw = 0.0;
  long accepted_steps = 0;
  int iterations = 0;
  std::vector<double> accepted_cw;  // strictly decreasing by construction
  std::vector<ImageF> iterates;     // only when record_iterates
};

/// Random-perturbation descent: for N rounds, every stride x stride tile's
/// sub-window [offset, stride) is perturbed by single-precision uniform
/// noise in [-u, u], clamped into [x_l, x_u], and accepted iff the
/// backend's CW loss strictly decreases. Succeeds when the final CW is
/// negative. The caller owns the seeded generator.
inline AttackOutcome random_perturb_attack(const Network& net, const ImageF& x0, int t,
                                           const ImageF& x1_init, double eps,
                                           const AttackParams& params, Rng& rng) {
  params.validate();
  require(x1_init.shape() == x0.shape(), "random_perturb_attack: shape mismatch");
  TileGeometry geom = tile_geometry(params.backend);
  ClampBounds cb = compute_clamp_bounds(x0, eps);

  AttackOutcome out;
  out.iterations = params.iters;
  ImageF x1 = x1_init;
  double cw_cur = cw_as_double(params.backend, net, x1, t);
  const Shape s = x0.shape();
  const float uf = to_single(params.u);
  ImageF cand = x1;
  for (int it = 0; it < params.iters; ++it) {
    for (int h = 0; h < s.h; h += geom.stride) {
      for (int w = 0; w < s.w; w += geom.stride) {
        cand = x1;
        for (int r = h + geom.offset; r < h + geom.stride && r < s.h; ++r)
          for (int c = w + geom.offset; c < w + geom.stride && c < s.w; ++c)
            for (int ch = 0; ch < s.c; ++ch) {
              float v = cand(r, c, ch) + rng.uniform_signed_f(uf);
              v = std::min(v, cb.x_u(r, c, ch));
              v = std::max(v, cb.x_l(r, c, ch));
              cand(r, c, ch) = v;
            }
        double cw_new = cw_as_double(params.backend, net, cand, t);
        if (cw_new < cw_cur) {
          x1 = cand;
          cw_cur = cw_new;
          ++out.accepted_steps;
          out.accepted_cw.push_back(cw_new);
          if (params.record_iterates) out.iterates.push_back(x1);
        }
      }
    }
  }
  out.x_adv = std::move(x1);
  out.final_cw = cw_cur;
  out.success = cw_cur < 0.0;
  return out;
}

/// Copy of the network with bias[t0] of the final dense layer decreased by
/// tau0 (single-precision rounding of the widened subtraction).
inline Network bias_shift(const Network& net, int t0, double tau0) {
  require(tau0 >= 0 && std::isfinite(tau0), "bias_shift: tau0 must be >= 0");
  require(!net.layers.empty(), "bias_shift: empty network");
  Network out = net;
  Dense* last = std::get_if<Dense>(&out.layers.back());
  require(last != nullptr, "bias_shift: final layer must be dense with a bias");
  require(t0 >= 0 && t0 < last->rows, "bias_shift: class out of range");
  last->bias[t0] = to_single(widen(last->bias[t0]) - tau0);
  return out;
}

struct VerifierConfig {
  ArithMode mode = ArithMode::Double;
  SolveLimits limits;
};

/// x0 = alpha * x_seed rounded to single precision.
inline ImageF scale_image(const ImageF& seed, double alpha) {
  ImageF out(seed.shape());
  for (int i = 0; i < seed.size(); ++i) out[i] = to_single(alpha * widen(seed[i]));
  return out;
}

struct AlphaSearchResult {
  double alpha = 1.0;
  double delta = 1.0;
  ImageF x0;
  bool reached_target = false;
  bool timed_out = false;  // a probe timed out and stopped the search
  struct Probe {
    double coeff;
    Verdict verdict;
  };
  std::vector<Probe> trail;
};

/// Step 1: search for the smallest-delta robust brightness coefficient.
/// Binary search between a Robust upper and NotRobust lower coefficient;
/// on a solver timeout the search switches to a grid that divides the best
/// known delta into 16 intervals and walks down from the robust end.
inline AlphaSearchResult alpha_search(const Network& net, const ImageF& x_seed, double eps,
                                      int t0, const VerifierConfig& cfg,
                                      double delta_target = 1e-7) {
  AlphaSearchResult out;
  auto probe = [&](double alpha) {
    VerifyResult r =
        verify_worst(net, PerturbationSet(scale_image(x_seed, alpha), eps), t0, 0.0, cfg.mode,
                     cfg.limits);
    out.trail.push_back({alpha, r.verdict});
    return r.verdict;
  };

  Verdict at_one = probe(1.0);
  require(at_one == Verdict::Robust, "alpha_search: x_seed must verify Robust at alpha = 1");
  Verdict at_zero = probe(0.0);
  if (at_zero != Verdict::NotRobust)
    throw std::invalid_argument("alpha_search: unbracketable seed (no NotRobust coefficient)");

  double lo = 0.0, hi = 1.0;
  bool grid_mode = false;
  while (hi - lo > delta_target) {
    if (!grid_mode) {
      double mid = 0.5 * (lo + hi);
      Verdict v = probe(mid);
      if (v == Verdict::Robust) {
        hi = mid;
      } else if (v == Verdict::NotRobust) {
        lo = mid;
      } else {
        grid_mode = true;  // solver too slow near the boundary
      }
      continue;
    }
    double step = (hi - lo) / 16.0;
    bool stopped = false;
    double walk = hi;
    for (int k = 1; k <= 15; ++k) {
      double a = hi - double(k) * step;
      Verdict v = probe(a);
      if (v == Verdict::Robust) {
        walk = a;
        continue;
      }
      if (v == Verdict::NotRobust) {
        lo = a;
        stopped = true;
        break;
      }
      out.timed_out = true;  // grid probe timed out: stop with best known
      stopped = true;
      break;
    }
    hi = walk;
    if (out.timed_out) break;
    if (!stopped) lo = std::max(lo, hi - step);  // all probes robust
  }
  out.alpha = hi;
  out.delta = hi - lo;
  out.x0 = scale_image(x_seed, hi);
  out.reached_target = out.delta <= delta_target;
  return out;
}

struct QuasiAdvResult {
  enum class Status { Found, Partial, Discarded };
  Status status = Status::Discarded;
  double tau0 = 0.0, tau1 = 0.0;
  ImageF x1;
  bool has_x1 = false;
  double solver_cw = 0.0;  // incumbent objective at the tau1 solve
  int solves = 0;
  double gap() const { return tau1 - tau0; }
};

namespace attack_detail {

inline ImageF round_into_clamp(const ImageD& cex, const ClampBounds& cb) {
  ImageF out(cex.shape());
  for (int i = 0; i < cex.size(); ++i) {
    float v = to_single(cex[i]);
    v = std::min(v, cb.x_u[i]);
    v = std::max(v, cb.x_l[i]);
    out[i] = v;
  }
  return out;
}

}  // namespace attack_detail

/// Step 2: bisect the CW tolerance until tau1 - tau0 < gap_target, keeping
/// the solver's incumbent (rounded to single precision and clamped into the
/// tightened bounds) as the quasi-adversarial image. A timeout on the
/// initial solves discards the input; a later timeout aborts with the best
/// tuple so far, flagged Partial.
inline QuasiAdvResult quasi_adv_search(const Network& net, const ImageF& x0, double eps, int t0,
                                       const VerifierConfig& cfg, double gap_target = 1e-7) {
  QuasiAdvResult out;
  PerturbationSet region(x0, eps);
  ClampBounds cb = compute_clamp_bounds(x0, eps);

  auto solve = [&](double tau) {
    ++out.solves;
    return verify_worst(net, region, t0, tau, cfg.mode, cfg.limits);
  };

  VerifyResult at_zero = solve(0.0);
  if (at_zero.verdict == Verdict::Timeout) {
    out.status = QuasiAdvResult::Status::Discarded;
    return out;
  }
  require(at_zero.verdict == Verdict::Robust, "quasi_adv_search: x0 must verify Robust at tau=0");

  double tau1 = cw_as_double(BackendId::REF_F64, net, x0, t0) + 1e-6;
  bool bracketed = false;
  for (int attempt = 0; attempt < 4 && !bracketed; ++attempt) {
    VerifyResult r = solve(tau1);
    if (r.verdict == Verdict::Timeout) {
      out.status = QuasiAdvResult::Status::Discarded;
      return out;
    }
    if (r.verdict == Verdict::NotRobust) {
      out.x1 = attack_detail::round_into_clamp(*r.counterexample, cb);
      out.has_x1 = true;
      out.solver_cw = r.margin;
      bracketed = true;
    } else {
      tau1 = 2.0 * std::abs(tau1) + 1.0;
    }
  }
  require(bracketed, "quasi_adv_search: failed to bracket a NotRobust tolerance");

  out.tau0 = 0.0;
  out.tau1 = tau1;
  while (out.tau1 - out.tau0 >= gap_target) {
    double mid = 0.5 * (out.tau0 + out.tau1);
    VerifyResult r = solve(mid);
    if (r.verdict == Verdict::Timeout) {
      out.status = QuasiAdvResult::Status::Partial;
      return out;
    }
    if (r.verdict == Verdict::Robust) {
      out.tau0 = mid;
    } else {
      out.tau1 = mid;
      out.x1 = attack_detail::round_into_clamp(*r.counterexample, cb);
      out.has_x1 = true;
      out.solver_cw = r.margin;
    }
  }
  out.status = QuasiAdvResult::Status::Found;
  return out;
}

/// The four adversarial-pair conditions, each checked bit-exactly and
/// reported separately: box membership of both images, the single- and
/// double-precision norm bounds against the verifier's eps, re-verified
/// robustness of x0, and a negative CW loss on the attacked backend.
struct PairReport {
  bool box_x0 = false, box_xadv = false;
  bool norm_single = false, norm_double = false;
  bool x0_robust = false;
  Verdict x0_verdict = Verdict::Timeout;
  bool cw_negative = false;
  double cw_value = 0.0;
  double norm_single_value = 0.0, norm_double_value = 0.0;

  bool all_pass() const {
    return box_x0 && box_xadv && norm_single && norm_double && x0_robust && cw_negative;
  }
};

inline PairReport validate_adversarial_pair(const Network& net, const ImageF& x0,
                                            const ImageF& x_adv, double eps, int t0,
                                            BackendId backend, const VerifierConfig& cfg) {
  require(x0.shape() == x_adv.shape(), "validate_adversarial_pair: shape mismatch");
  PairReport rep;
  rep.box_x0 = all_finite(x0) && in_unit_range(x0);
  rep.box_xadv = all_finite(x_adv) && in_unit_range(x_adv);
  rep.norm_single_value = widen(linf_distance(x_adv, x0));
  rep.norm_single = rep.norm_single_value <= eps;
  rep.norm_double_value = linf_distance(widen_to_double(x_adv), widen_to_double(x0));
  rep.norm_double = rep.norm_double_value <= eps;
  VerifyResult v =
      verify_worst(net, PerturbationSet(x0, eps), t0, 0.0, cfg.mode, cfg.limits);
  rep.x0_verdict = v.verdict;
  rep.x0_robust = v.verdict == Verdict::Robust;
  rep.cw_value = cw_as_double(backend, net, x_adv, t0);
  rep.cw_negative = rep.cw_value < 0.0;
  return rep;
}

}  // namespace fpgap
