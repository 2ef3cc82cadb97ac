#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <optional>
#include <sstream>

#include "fpgap/bounds.hpp"
#include "fpgap/lp.hpp"

namespace fpgap {

enum class Verdict { Robust, NotRobust, Timeout };
enum class ArithMode { Double, Exact };
enum class MilpObjective { Worst, Closest };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Robust: return "robust";
    case Verdict::NotRobust: return "not-robust";
    case Verdict::Timeout: return "timeout";
  }
  return "?";
}

struct VerifyStats {
  long nodes = 0;
  long lp_pivots = 0;
  long long work_cells = 0;
  double wall_ms = 0.0;

  void absorb(const VerifyStats& o) {
    nodes += o.nodes;
    lp_pivots += o.lp_pivots;
    work_cells += o.work_cells;
    wall_ms += o.wall_ms;
  }
};

/// Solver limits. Deterministic mode converts the time limit into a fixed
/// work budget (tableau cells touched) so verdicts are bit-reproducible;
/// otherwise the wall clock is enforced per node.
struct SolveLimits {
  double time_limit_s = 360.0;
  bool deterministic = true;
  // Rough single-core throughput of the dense simplex; fixes the meaning of
  // one "second" of deterministic budget.
  static constexpr long long kCellsPerSecond = 150'000'000;
  long long budget_cells() const {
    return (long long)(time_limit_s * double(kCellsPerSecond));
  }
};

/// Big-M MILP over the region: input box variables, one continuous output
/// and one binary per unstable ReLU (4 constraints each), stable ReLUs
/// folded as fixed linear maps into the affine expressions of downstream
/// neurons. The CW objective uses the identity
///   cw(y, t) = min_{j != t} (y_t - y_j),
/// so each model carries one adversary class and a plain linear objective;
/// callers take the minimum over adversary classes.
template <class T>
struct MilpModel {
  LpProblem<T> lp;
  struct Binary {
    int var;
    int neuron;  // global neuron index, forward order
  };
  std::vector<Binary> binaries;
  int n_inputs = 0;
  int relu_rows = 0;
  MilpObjective objective = MilpObjective::Worst;
  int target = -1;
  int adv_class = -1;
};

namespace milp_detail {

template <class T>
struct Affine {
  std::vector<T> coef;
  T constant{};

  void add(int var, const T& c) {
    if (int(coef.size()) <= var) coef.resize(var + 1, T(0));
    coef[var] = coef[var] + c;
  }
  static Affine unit(int var) {
    Affine a;
    a.add(var, T(1));
    return a;
  }
};

/// out = sum w_i * in_i + bias over affine expressions.
template <class T>
std::vector<Affine<T>> compose_linear(const std::vector<Affine<T>>& in, const Layer& layer,
                                      const Shape& ishape) {
  Shape oshape = Network::layer_output_shape(layer, ishape);
  std::vector<Affine<T>> out(size_t(oshape.size()));
  auto add_scaled = [](Affine<T>& acc, const T& w, const Affine<T>& x) {
    if (w == T(0)) return;
    if (int(acc.coef.size()) < int(x.coef.size())) acc.coef.resize(x.coef.size(), T(0));
    for (int j = 0; j < int(x.coef.size()); ++j) {
      if (x.coef[j] == T(0)) continue;
      T p = w * x.coef[j];
      acc.coef[j] = acc.coef[j] + p;
    }
    T pc = w * x.constant;
    acc.constant = acc.constant + pc;
  };
  if (const auto* cv = std::get_if<Conv2d>(&layer)) {
    const std::vector<T> w = kernels::weights_as<T>(cv->weights);
    const std::vector<T> b = kernels::weights_as<T>(cv->bias);
    for (int oy = 0; oy < oshape.h; ++oy)
      for (int ox = 0; ox < oshape.w; ++ox)
        for (int oc = 0; oc < oshape.c; ++oc) {
          Affine<T>& acc = out[(size_t(oy) * oshape.w + ox) * oshape.c + oc];
          acc.constant = b[oc];
          for (int ic = 0; ic < cv->in_ch; ++ic)
            for (int ky = 0; ky < cv->kh; ++ky)
              for (int kx = 0; kx < cv->kw; ++kx) {
                int iy = oy + ky - cv->pad;
                int ix = ox + kx - cv->pad;
                if (iy < 0 || iy >= ishape.h || ix < 0 || ix >= ishape.w) continue;
                add_scaled(acc, w[((size_t(oc) * cv->in_ch + ic) * cv->kh + ky) * cv->kw + kx],
                           in[(size_t(iy) * ishape.w + ix) * ishape.c + ic]);
              }
        }
    return out;
  }
  const auto* d = std::get_if<Dense>(&layer);
  const std::vector<T> w = kernels::weights_as<T>(d->weights);
  const std::vector<T> b = kernels::weights_as<T>(d->bias);
  for (int r = 0; r < d->rows; ++r) {
    out[r].constant = b[r];
    for (int j = 0; j < d->cols; ++j) add_scaled(out[r], w[size_t(r) * d->cols + j], in[j]);
  }
  return out;
}

template <class T>
std::vector<std::pair<int, T>> row_terms(const Affine<T>& e, int extra_var, const T& extra_coef) {
  std::vector<std::pair<int, T>> terms;
  if (extra_var >= 0) terms.emplace_back(extra_var, extra_coef);
  for (int j = 0; j < int(e.coef.size()); ++j)
    if (e.coef[j] != T(0)) terms.emplace_back(j, e.coef[j]);
  return terms;
}

// objective comparison tolerance (double mirrors a commercial solver)
template <class T>
T obj_tol() {
  if constexpr (is_rational_v<T>)
    return Rational(0);
  else
    return T(1e-9);
}

template <class T>
bool above_threshold(const T& v, const T& threshold) {
  return v > threshold + obj_tol<T>();
}

}  // namespace milp_detail

template <class T>
MilpModel<T> encode_milp(const Network& net, const PerturbationSet& region, int t0,
                         MilpObjective objective, int adv_class, const BoundsTable<T>& bounds) {
  using milp_detail::Affine;
  net.validate();
  int k = net.num_classes();
  require(t0 >= 0 && t0 < k, "encode_milp: target class out of range");
  require(adv_class >= 0 && adv_class < k && adv_class != t0,
          "encode_milp: adversary class out of range");

  MilpModel<T> model;
  model.objective = objective;
  model.target = t0;
  model.adv_class = adv_class;
  model.n_inputs = region.x0.size();

  // input variables
  for (int i = 0; i < region.x0.size(); ++i) {
    if (objective == MilpObjective::Closest) {
      model.lp.add_var(T(0), T(1));
    } else {
      T c = num::from_float<T>(region.x0[i]);
      T e = num::from_double<T>(region.eps);
      model.lp.add_var(num::max<T>(c - e, T(0)), num::min<T>(c + e, T(1)));
    }
  }

  std::vector<Affine<T>> exprs(size_t(model.n_inputs));
  for (int i = 0; i < model.n_inputs; ++i) exprs[i] = Affine<T>::unit(i);

  std::vector<Shape> shapes = net.activation_shapes();
  int neuron_base = 0;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    if (std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer)) {
      exprs = milp_detail::compose_linear<T>(exprs, layer, shapes[li]);
    } else if (std::holds_alternative<ReLU>(layer)) {
      require(li > 0, "encode_milp: ReLU as first layer");
      const auto& pre = bounds.layer[li - 1];
      require(pre.size() == exprs.size(), "encode_milp: bounds table mismatch");
      for (size_t i = 0; i < exprs.size(); ++i) {
        const T& l = pre[i].first;
        const T& u = pre[i].second;
        if (!(u > T(0))) {
          exprs[i] = Affine<T>{};  // stably inactive: identically zero
        } else if (!(l < T(0))) {
          // stably active: fixed linear, expression flows through
        } else {
          int y = model.lp.add_var(T(0), u);
          int a = model.lp.add_var(T(0), T(1));
          model.binaries.push_back({a, neuron_base + int(i)});
          const Affine<T>& z = exprs[i];
          // y >= 0
          model.lp.add_row({{y, T(1)}}, Rel::Ge, T(0));
          // y >= z
          {
            auto terms = milp_detail::row_terms<T>(z, y, T(1));
            for (auto& [v, c] : terms)
              if (v != y) c = -c;
            model.lp.add_row(std::move(terms), Rel::Ge, z.constant);
          }
          // y <= z - l(1-a)
          {
            auto terms = milp_detail::row_terms<T>(z, y, T(1));
            for (auto& [v, c] : terms)
              if (v != y) c = -c;
            terms.emplace_back(a, -l);
            model.lp.add_row(std::move(terms), Rel::Le, z.constant - l);
          }
          // y <= u a
          model.lp.add_row({{y, T(1)}, {a, -u}}, Rel::Le, T(0));
          model.relu_rows += 4;
          exprs[i] = Affine<T>::unit(y);
        }
      }
    }
    // Flatten leaves expressions untouched (row-major order already)
    neuron_base += shapes[li + 1].size();
  }

  const Affine<T>& yt = exprs[size_t(t0)];
  const Affine<T>& ya = exprs[size_t(adv_class)];
  Affine<T> diff;  // y_t - y_adv
  diff.coef.resize(std::max(yt.coef.size(), ya.coef.size()), T(0));
  for (int j = 0; j < int(yt.coef.size()); ++j) diff.coef[j] = yt.coef[j];
  for (int j = 0; j < int(ya.coef.size()); ++j) diff.coef[j] = diff.coef[j] - ya.coef[j];
  diff.constant = yt.constant - ya.constant;

  if (objective == MilpObjective::Worst) {
    for (int j = 0; j < int(diff.coef.size()); ++j)
      if (diff.coef[j] != T(0)) model.lp.set_objective_term(j, diff.coef[j]);
    model.lp.obj_offset = diff.constant;
  } else {
    // epigraph of the l-inf distance to x0, subject to misclassification
    int d = model.lp.add_var(T(0), T(1));
    for (int i = 0; i < model.n_inputs; ++i) {
      T c = num::from_float<T>(region.x0[i]);
      model.lp.add_row({{d, T(1)}, {i, T(-1)}}, Rel::Ge, -c);
      model.lp.add_row({{d, T(1)}, {i, T(1)}}, Rel::Ge, c);
    }
    {
      auto terms = milp_detail::row_terms<T>(diff, -1, T(0));
      model.lp.add_row(std::move(terms), Rel::Le, -diff.constant);
    }
    model.lp.set_objective_term(d, T(1));
  }
  return model;
}

template <class T>
struct BnbResult {
  Verdict verdict = Verdict::Timeout;
  T bound{};               // proven lower bound on the objective
  bool bound_infinite = false;  // model infeasible: minimum over empty set
  bool has_incumbent = false;
  T incumbent_value{};
  std::vector<T> incumbent_point;
  VerifyStats stats;
};

namespace milp_detail {

struct SolveContext {
  WorkBudget budget;
  bool deterministic = true;
  std::chrono::steady_clock::time_point deadline;

  static SolveContext make(const SolveLimits& limits) {
    SolveContext ctx;
    ctx.deterministic = limits.deterministic;
    if (limits.deterministic) {
      ctx.budget = WorkBudget::cells(limits.budget_cells());
    } else {
      ctx.budget = WorkBudget::unlimited();
      ctx.deadline = std::chrono::steady_clock::now() +
                     std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                         std::chrono::duration<double>(limits.time_limit_s));
    }
    return ctx;
  }

  bool out_of_time() const {
    if (deterministic) return budget.exhausted();
    return std::chrono::steady_clock::now() >= deadline;
  }
};

/// LP solve with the node's binary fixings applied; on double-mode
/// numerical failure the node is re-solved in exact rational arithmetic.
template <class T>
LpResult<T> solve_node(LpProblem<T>& lp, const std::vector<typename MilpModel<T>::Binary>& bins,
                       const std::vector<signed char>& fix, SolveContext& ctx) {
  std::vector<std::pair<int, std::pair<T, T>>> saved;
  saved.reserve(bins.size());
  for (size_t b = 0; b < bins.size(); ++b) {
    if (fix[b] < 0) continue;
    int v = bins[b].var;
    saved.push_back({v, {lp.lower[v], lp.upper[v]}});
    lp.lower[v] = T(fix[b]);
    lp.upper[v] = T(fix[b]);
  }
  LpResult<T> res;
  try {
    res = solve_lp(lp, ctx.budget);
  } catch (const NumericalError&) {
    if constexpr (is_rational_v<T>) {
      for (auto& [v, b] : saved) {
        lp.lower[v] = b.first;
        lp.upper[v] = b.second;
      }
      throw;
    } else {
      LpProblem<Rational> q = to_rational_problem(lp);
      LpResult<Rational> rq = solve_lp(q, ctx.budget);
      res.status = rq.status;
      res.pivots = rq.pivots;
      if (rq.status == LpStatus::Optimal) {
        res.value = to_double(rq.value);
        res.point.clear();
        for (const Rational& v : rq.point) res.point.push_back(to_double(v));
      }
    }
  }
  for (auto& [v, b] : saved) {
    lp.lower[v] = b.first;
    lp.upper[v] = b.second;
  }
  return res;
}

}  // namespace milp_detail

/// Best-first branch and bound over the ReLU binaries. Decides whether the
/// model's minimum exceeds `threshold`: Robust means every leaf bound does,
/// NotRobust returns the first incumbent at or below it (deterministic node
/// order), Timeout means the work budget or wall clock ran out first.
template <class T>
BnbResult<T> branch_and_bound(const MilpModel<T>& model, const T& threshold,
                              milp_detail::SolveContext& ctx) {
  using milp_detail::above_threshold;
  auto t_start = std::chrono::steady_clock::now();
  long long cells_before = ctx.budget.used();
  BnbResult<T> out;
  LpProblem<T> lp = model.lp;  // bounds are mutated per node, then restored

  struct Node {
    std::vector<signed char> fix;
    T bound;
    std::vector<T> point;
    long seq;
  };
  std::vector<Node> heap;
  auto cmp = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound > b.bound;  // min-heap
    return a.seq > b.seq;
  };
  long seq = 0;
  auto finish = [&](Verdict v) {
    out.verdict = v;
    out.stats.work_cells = ctx.budget.used() - cells_before;
    out.stats.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    return out;
  };

  {
    std::vector<signed char> root_fix(model.binaries.size(), -1);
    LpResult<T> root = milp_detail::solve_node<T>(lp, model.binaries, root_fix, ctx);
    out.stats.lp_pivots += root.pivots;
    if (root.status == LpStatus::WorkLimit) return finish(Verdict::Timeout);
    if (root.status == LpStatus::Infeasible) {
      out.bound_infinite = true;
      return finish(Verdict::Robust);
    }
    heap.push_back(Node{std::move(root_fix), root.value, std::move(root.point), seq++});
    std::push_heap(heap.begin(), heap.end(), cmp);
  }

  const T int_tol = is_rational_v<T> ? T(0) : T(1e-6);
  while (!heap.empty()) {
    if (ctx.out_of_time()) return finish(Verdict::Timeout);
    std::pop_heap(heap.begin(), heap.end(), cmp);
    Node node = std::move(heap.back());
    heap.pop_back();
    ++out.stats.nodes;

    // best-first: the popped bound is the global lower bound
    out.bound = node.bound;
    if (above_threshold(node.bound, threshold)) return finish(Verdict::Robust);

    // integrality of the node solution
    int branch_var = -1;
    T best_frac(0);
    for (size_t b = 0; b < model.binaries.size(); ++b) {
      int v = model.binaries[b].var;
      T val = v < int(node.point.size()) ? node.point[v] : T(0);
      T frac = num::min<T>(val, T(1) - val);
      if (frac < T(0)) frac = T(0);
      if (frac > int_tol && frac > best_frac) {
        best_frac = frac;
        branch_var = int(b);
      }
    }
    if (branch_var < 0) {
      out.has_incumbent = true;
      out.incumbent_value = node.bound;
      out.incumbent_point = std::move(node.point);
      return finish(Verdict::NotRobust);
    }

    for (signed char v = 0; v <= 1; ++v) {
      std::vector<signed char> fix = node.fix;
      fix[branch_var] = v;
      LpResult<T> r = milp_detail::solve_node<T>(lp, model.binaries, fix, ctx);
      out.stats.lp_pivots += r.pivots;
      if (r.status == LpStatus::WorkLimit) return finish(Verdict::Timeout);
      if (r.status == LpStatus::Infeasible) continue;
      heap.push_back(Node{std::move(fix), r.value, std::move(r.point), seq++});
      std::push_heap(heap.begin(), heap.end(), cmp);
    }
  }
  // every branch closed infeasible: minimum over an empty set
  out.bound_infinite = true;
  return finish(Verdict::Robust);
}

template <class T>
BnbResult<T> branch_and_bound(const MilpModel<T>& model, const T& threshold,
                              const SolveLimits& limits) {
  milp_detail::SolveContext ctx = milp_detail::SolveContext::make(limits);
  return branch_and_bound(model, threshold, ctx);
}

/// Typed verification outcome; the public VerifyResult is its double image.
template <class T>
struct TypedVerify {
  Verdict verdict = Verdict::Timeout;
  T margin{};
  bool margin_infinite = false;
  bool has_cex = false;
  std::vector<T> cex;  // input point
  VerifyStats stats;
};

/// min over Adv(x0) of cw(NN(x), t0) compared against tau, one MILP per
/// adversary class in ascending order.
template <class T>
TypedVerify<T> verify_worst_t(const Network& net, const PerturbationSet& region, int t0,
                              const T& tau, const SolveLimits& limits) {
  TypedVerify<T> out;
  BoundsTable<T> bounds = interval_bounds<T>(net, region);
  int k = net.num_classes();
  require(t0 >= 0 && t0 < k, "verify_worst: target class out of range");
  milp_detail::SolveContext ctx = milp_detail::SolveContext::make(limits);
  bool first_margin = true;
  for (int j = 0; j < k; ++j) {
    if (j == t0) continue;
    MilpModel<T> model = encode_milp<T>(net, region, t0, MilpObjective::Worst, j, bounds);
    BnbResult<T> r = branch_and_bound<T>(model, tau, ctx);
    out.stats.absorb(r.stats);
    if (r.verdict == Verdict::Timeout) {
      out.verdict = Verdict::Timeout;
      return out;
    }
    if (r.verdict == Verdict::NotRobust) {
      out.verdict = Verdict::NotRobust;
      out.margin = r.incumbent_value;
      out.has_cex = true;
      out.cex.assign(r.incumbent_point.begin(), r.incumbent_point.begin() + model.n_inputs);
      // exact box clamp for reporting
      for (int i = 0; i < model.n_inputs; ++i) {
        if (out.cex[i] < model.lp.lower[i]) out.cex[i] = model.lp.lower[i];
        if (out.cex[i] > model.lp.upper[i]) out.cex[i] = model.lp.upper[i];
      }
      return out;
    }
    if (!r.bound_infinite && (first_margin || r.bound < out.margin)) {
      out.margin = r.bound;
      first_margin = false;
    }
  }
  out.verdict = Verdict::Robust;
  out.margin_infinite = first_margin;
  return out;
}

/// min l-inf distance to x0 under misclassification; Robust iff the optimum
/// exceeds eps (or no misclassified point exists at all).
template <class T>
TypedVerify<T> verify_closest_t(const Network& net, const ImageF& x0, double eps, int t0,
                                const SolveLimits& limits) {
  TypedVerify<T> out;
  PerturbationSet full(x0, 1.0);  // distance search ranges over the unit box
  BoundsTable<T> bounds = interval_bounds<T>(net, full);
  int k = net.num_classes();
  require(t0 >= 0 && t0 < k, "verify_closest: target class out of range");
  milp_detail::SolveContext ctx = milp_detail::SolveContext::make(limits);
  T threshold = num::from_double<T>(eps);
  bool first_margin = true;
  for (int j = 0; j < k; ++j) {
    if (j == t0) continue;
    MilpModel<T> model = encode_milp<T>(net, full, t0, MilpObjective::Closest, j, bounds);
    BnbResult<T> r = branch_and_bound<T>(model, threshold, ctx);
    out.stats.absorb(r.stats);
    if (r.verdict == Verdict::Timeout) {
      out.verdict = Verdict::Timeout;
      return out;
    }
    if (r.verdict == Verdict::NotRobust) {
      out.verdict = Verdict::NotRobust;
      out.margin = r.incumbent_value;
      out.has_cex = true;
      out.cex.assign(r.incumbent_point.begin(), r.incumbent_point.begin() + model.n_inputs);
      return out;
    }
    if (!r.bound_infinite && (first_margin || r.bound < out.margin)) {
      out.margin = r.bound;
      first_margin = false;
    }
  }
  out.verdict = Verdict::Robust;
  out.margin_infinite = first_margin;
  return out;
}

/// Exhaustive ReLU-phase enumeration (test oracle): every unstable neuron is
/// pinned active or inactive via phase-consistency rows, no binaries at all.
template <class T>
TypedVerify<T> brute_force_verify_t(const Network& net, const PerturbationSet& region, int t0,
                                    const T& tau) {
  using milp_detail::Affine;
  TypedVerify<T> out;
  BoundsTable<T> bounds = interval_bounds<T>(net, region);
  int k = net.num_classes();
  require(t0 >= 0 && t0 < k, "brute_force_verify: target class out of range");

  // count unstable relus
  int unstable = 0;
  std::vector<Shape> shapes = net.activation_shapes();
  for (size_t li = 0; li < net.layers.size(); ++li) {
    if (!std::holds_alternative<ReLU>(net.layers[li])) continue;
    for (const auto& [l, u] : bounds.layer[li - 1])
      if (l < T(0) && u > T(0)) ++unstable;
  }
  require(unstable <= 20, "brute_force_verify: too many unstable ReLUs (" +
                              std::to_string(unstable) + " > 20)");

  bool found_any = false;
  bool best_set = false;
  for (unsigned long mask = 0; mask < (1ul << unstable); ++mask) {
    LpProblem<T> lp;
    int n = region.x0.size();
    for (int i = 0; i < n; ++i) {
      T c = num::from_float<T>(region.x0[i]);
      T e = num::from_double<T>(region.eps);
      lp.add_var(num::max<T>(c - e, T(0)), num::min<T>(c + e, T(1)));
    }
    std::vector<Affine<T>> exprs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) exprs[i] = Affine<T>::unit(i);
    int bit = 0;
    bool consistent_shape = true;
    for (size_t li = 0; li < net.layers.size(); ++li) {
      const Layer& layer = net.layers[li];
      if (std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer)) {
        exprs = milp_detail::compose_linear<T>(exprs, layer, shapes[li]);
      } else if (std::holds_alternative<ReLU>(layer)) {
        const auto& pre = bounds.layer[li - 1];
        for (size_t i = 0; i < exprs.size(); ++i) {
          const T& l = pre[i].first;
          const T& u = pre[i].second;
          if (!(u > T(0))) {
            exprs[i] = Affine<T>{};
          } else if (!(l < T(0))) {
            // stays linear
          } else {
            bool active = (mask >> bit) & 1;
            ++bit;
            auto terms = milp_detail::row_terms<T>(exprs[i], -1, T(0));
            if (terms.empty()) {
              // constant pre-activation: phase must match its sign
              bool pos = exprs[i].constant > T(0);
              if (pos != active) consistent_shape = false;
              if (!active) exprs[i] = Affine<T>{};
              continue;
            }
            if (active) {
              lp.add_row(std::move(terms), Rel::Ge, -exprs[i].constant);  // z >= 0
            } else {
              lp.add_row(std::move(terms), Rel::Le, -exprs[i].constant);  // z <= 0
              exprs[i] = Affine<T>{};
            }
          }
        }
      }
    }
    if (!consistent_shape) continue;
    for (int j = 0; j < k; ++j) {
      if (j == t0) continue;
      LpProblem<T> sub = lp;
      const Affine<T>& yt = exprs[size_t(t0)];
      const Affine<T>& ya = exprs[size_t(j)];
      Affine<T> diff;
      diff.coef.resize(std::max(yt.coef.size(), ya.coef.size()), T(0));
      for (int c = 0; c < int(yt.coef.size()); ++c) diff.coef[c] = yt.coef[c];
      for (int c = 0; c < int(ya.coef.size()); ++c) diff.coef[c] = diff.coef[c] - ya.coef[c];
      for (int c = 0; c < int(diff.coef.size()); ++c)
        if (diff.coef[c] != T(0)) sub.set_objective_term(c, diff.coef[c]);
      sub.obj_offset = yt.constant - ya.constant;
      LpResult<T> r = solve_lp(sub);
      out.stats.lp_pivots += r.pivots;
      ++out.stats.nodes;
      if (r.status != LpStatus::Optimal) continue;
      if (!best_set || r.value < out.margin) {
        out.margin = r.value;
        out.cex = r.point;
        out.cex.resize(size_t(n));
        best_set = true;
      }
      found_any = true;
    }
  }
  if (!found_any) {
    out.verdict = Verdict::Robust;
    out.margin_infinite = true;
    return out;
  }
  if (milp_detail::above_threshold(out.margin, tau)) {
    out.verdict = Verdict::Robust;
    out.cex.clear();
  } else {
    out.verdict = Verdict::NotRobust;
    out.has_cex = true;
  }
  return out;
}

// ---- public double-facing wrappers ----

struct VerifyResult {
  Verdict verdict = Verdict::Timeout;
  double margin = 0.0;
  bool margin_infinite = false;
  std::optional<ImageD> counterexample;
  VerifyStats stats;
};

namespace milp_detail {

template <class T>
VerifyResult to_public(const TypedVerify<T>& r, const Shape& input_shape) {
  VerifyResult out;
  out.verdict = r.verdict;
  out.margin_infinite = r.margin_infinite;
  out.margin = to_double(r.margin);
  out.stats = r.stats;
  if (r.has_cex) {
    ImageD img(input_shape);
    for (int i = 0; i < img.size(); ++i) img[i] = to_double(r.cex[i]);
    out.counterexample = std::move(img);
  }
  return out;
}

}  // namespace milp_detail

inline VerifyResult verify_worst(const Network& net, const PerturbationSet& region, int t0,
                                 double tau, ArithMode mode, const SolveLimits& limits) {
  if (mode == ArithMode::Exact)
    return milp_detail::to_public(
        verify_worst_t<Rational>(net, region, t0, rational_of(tau), limits),
        region.x0.shape());
  return milp_detail::to_public(verify_worst_t<double>(net, region, t0, tau, limits),
                                region.x0.shape());
}

inline VerifyResult verify_closest(const Network& net, const ImageF& x0, double eps, int t0,
                                   ArithMode mode, const SolveLimits& limits) {
  if (mode == ArithMode::Exact)
    return milp_detail::to_public(verify_closest_t<Rational>(net, x0, eps, t0, limits),
                                  x0.shape());
  return milp_detail::to_public(verify_closest_t<double>(net, x0, eps, t0, limits), x0.shape());
}

inline VerifyResult brute_force_verify(const Network& net, const PerturbationSet& region, int t0,
                                       double tau, ArithMode mode) {
  if (mode == ArithMode::Exact)
    return milp_detail::to_public(
        brute_force_verify_t<Rational>(net, region, t0, rational_of(tau)), region.x0.shape());
  return milp_detail::to_public(brute_force_verify_t<double>(net, region, t0, tau),
                                region.x0.shape());
}

/// Plain-text dump of a model (variables, bounds, constraints, objective)
/// for debugging; documented in the README.
template <class T>
std::string milp_to_text(const MilpModel<T>& m) {
  std::ostringstream os;
  auto fmt = [](const T& v) {
    if constexpr (is_rational_v<T>) {
      return num::to_string(v);
    } else {
      char buf[40];
      auto r = std::to_chars(buf, buf + sizeof(buf), v);
      return std::string(buf, r.ptr);
    }
  };
  auto var_name = [&](int v) {
    if (v < m.n_inputs) return "x" + std::to_string(v);
    for (size_t b = 0; b < m.binaries.size(); ++b)
      if (m.binaries[b].var == v) return "a" + std::to_string(b);
    return "v" + std::to_string(v);
  };
  os << "minimize";
  for (int j = 0; j < int(m.lp.objective.size()); ++j)
    if (m.lp.objective[j] != T(0)) os << " + " << fmt(m.lp.objective[j]) << " " << var_name(j);
  if (m.lp.obj_offset != T(0)) os << " + " << fmt(m.lp.obj_offset);
  os << "\nsubject to\n";
  for (const auto& row : m.lp.rows) {
    for (const auto& [v, c] : row.terms) os << " + " << fmt(c) << " " << var_name(v);
    os << (row.rel == Rel::Le ? " <= " : row.rel == Rel::Ge ? " >= " : " = ") << fmt(row.rhs)
       << "\n";
  }
  os << "bounds\n";
  for (int v = 0; v < m.lp.num_vars(); ++v)
    os << "  " << fmt(m.lp.lower[v]) << " <= " << var_name(v) << " <= " << fmt(m.lp.upper[v])
       << "\n";
  os << "binary\n ";
  for (const auto& b : m.binaries) os << " a" << (&b - m.binaries.data());
  os << "\n";
  return os.str();
}

}  // namespace fpgap
