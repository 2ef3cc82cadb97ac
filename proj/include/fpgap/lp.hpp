#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "fpgap/rational.hpp"

namespace fpgap {

enum class Rel { Le, Ge, Eq };

template <class T>
struct LpRow {
  std::vector<std::pair<int, T>> terms;
  Rel rel = Rel::Le;
  T rhs{};
};

/// Linear program in minimize form. Every variable carries finite box
/// bounds, which keeps the solver free of unbounded rays: slack ranges are
/// derived from the variable boxes.
template <class T>
struct LpProblem {
  std::vector<T> lower, upper;
  std::vector<LpRow<T>> rows;
  std::vector<T> objective;  // dense over variables; shorter means zeros
  T obj_offset{};

  int num_vars() const { return int(lower.size()); }

  int add_var(T lo, T hi) {
    require(!(hi < lo), "LpProblem: variable with empty bound interval");
    lower.push_back(std::move(lo));
    upper.push_back(std::move(hi));
    return int(lower.size()) - 1;
  }

  void add_row(std::vector<std::pair<int, T>> terms, Rel rel, T rhs) {
    for (const auto& [v, c] : terms)
      require(v >= 0 && v < num_vars(), "LpProblem: row references undeclared variable");
    rows.push_back(LpRow<T>{std::move(terms), rel, std::move(rhs)});
  }

  void set_objective_term(int var, T coef) {
    if (int(objective.size()) <= var) objective.resize(var + 1, T(0));
    objective[var] = std::move(coef);
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, WorkLimit };

template <class T>
struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  T value{};
  std::vector<T> point;  // structural variables only
  long pivots = 0;
};

/// Deterministic work accounting: one unit per tableau cell touched by a
/// pivot. Substitutes for wall-clock limits so verdicts are reproducible.
class WorkBudget {
 public:
  static WorkBudget unlimited() { return WorkBudget(); }
  static WorkBudget cells(long long n) {
    WorkBudget b;
    b.limited_ = true;
    b.remaining_ = n;
    return b;
  }
  bool charge(long long c) {
    used_ += c;
    if (!limited_) return true;
    remaining_ -= c;
    return remaining_ > 0;
  }
  bool exhausted() const { return limited_ && remaining_ <= 0; }
  long long used() const { return used_; }

 private:
  bool limited_ = false;
  long long remaining_ = 0;
  long long used_ = 0;
};

namespace lp_detail {

template <class T>
struct Tol {
  // double mode mirrors a commercial double-precision solver
  static T feas() { return T(1e-9); }
  static T reduced_cost() { return T(1e-9); }
  static T pivot() { return T(1e-11); }
};
template <>
struct Tol<Rational> {
  static Rational feas() { return Rational(0); }
  static Rational reduced_cost() { return Rational(0); }
  static Rational pivot() { return Rational(0); }
};

enum class VarState : unsigned char { AtLower, AtUpper, Basic };

/// Two-phase primal simplex over box-bounded variables, dense tableau.
/// Pricing is Dantzig (most violating reduced cost) until a degenerate
/// stall, after which Bland's least-index rule takes over for the rest of
/// the solve, preserving the anti-cycling guarantee.
template <class T>
class Simplex {
 public:
  Simplex(const LpProblem<T>& p, WorkBudget& budget) : prob_(p), budget_(budget) {
    n_struct_ = p.num_vars();
    m_ = int(p.rows.size());
    build();
  }

  LpResult<T> solve() {
    LpResult<T> res;
    if (!run_phase1(res)) return res;
    if (!run_phase2(res)) return res;
    res.status = LpStatus::Optimal;
    res.point.assign(prob_.lower.begin(), prob_.lower.end());
    for (int j = 0; j < n_struct_; ++j) res.point[j] = value_of(j);
    if constexpr (!is_rational_v<T>) {
      for (int j = 0; j < n_struct_; ++j) {  // repair solver drift, <= feas tol
        if (res.point[j] < prob_.lower[j]) res.point[j] = prob_.lower[j];
        if (res.point[j] > prob_.upper[j]) res.point[j] = prob_.upper[j];
      }
    }
    T v = prob_.obj_offset;
    for (int j = 0; j < int(prob_.objective.size()); ++j) {
      T p = prob_.objective[j] * res.point[j];
      v = v + p;
    }
    res.value = v;
    res.pivots = pivots_;
    return res;
  }

 private:
  const LpProblem<T>& prob_;
  WorkBudget& budget_;
  int n_struct_ = 0, n_ = 0, m_ = 0;
  std::vector<T> tab_;  // m x n, row-major; columns of basic vars are e_i
  std::vector<T> lo_, hi_, xb_, d_;
  std::vector<int> basis_;
  std::vector<VarState> state_;
  std::vector<int> art_;  // artificial column per row
  long pivots_ = 0;

  T& tab(int i, int j) { return tab_[size_t(i) * n_ + j]; }

  T bound_value(int j) const { return state_[j] == VarState::AtUpper ? hi_[j] : lo_[j]; }

  T value_of(int j) const {
    if (state_[j] == VarState::Basic) {
      for (int i = 0; i < m_; ++i)
        if (basis_[i] == j) return xb_[i];
    }
    return bound_value(j);
  }

  void build() {
    lo_ = prob_.lower;
    hi_ = prob_.upper;
    // slack per inequality row, with range derived from the variable boxes
    std::vector<int> slack(m_, -1);
    for (int i = 0; i < m_; ++i) {
      if (prob_.rows[i].rel == Rel::Eq) continue;
      T rmin(0), rmax(0);
      for (const auto& [v, c] : prob_.rows[i].terms) {
        if (c > T(0)) {
          rmin = rmin + c * prob_.lower[v];
          rmax = rmax + c * prob_.upper[v];
        } else {
          rmin = rmin + c * prob_.upper[v];
          rmax = rmax + c * prob_.lower[v];
        }
      }
      T span(0);
      if (prob_.rows[i].rel == Rel::Le) {
        span = prob_.rows[i].rhs - rmin;  // slack = rhs - ax >= 0
      } else {
        span = rmax - prob_.rows[i].rhs;  // surplus = ax - rhs >= 0
      }
      if (span < T(0)) span = T(0);
      slack[i] = int(lo_.size());
      lo_.push_back(T(0));
      hi_.push_back(span);
    }
    int n_slack_end = int(lo_.size());
    art_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      art_[i] = int(lo_.size());
      lo_.push_back(T(0));
      hi_.push_back(T(0));  // widened per-row once the residual is known
    }
    n_ = int(lo_.size());

    tab_.assign(size_t(m_) * n_, T(0));
    state_.assign(n_, VarState::AtLower);
    basis_.assign(m_, -1);
    xb_.assign(m_, T(0));

    for (int i = 0; i < m_; ++i) {
      const LpRow<T>& row = prob_.rows[i];
      for (const auto& [v, c] : row.terms) tab(i, v) = tab(i, v) + c;
      if (slack[i] >= 0) tab(i, slack[i]) = row.rel == Rel::Le ? T(1) : T(-1);
      // residual with all non-artificial vars at lower bound
      T r = row.rhs;
      for (int j = 0; j < n_slack_end; ++j) {
        if (tab(i, j) == T(0)) continue;
        T p = tab(i, j) * lo_[j];
        r = r - p;
      }
      // negate the row when the residual is negative so the artificial
      // column is +1 and basic columns stay identity columns
      if (r < T(0)) {
        for (int j = 0; j < n_slack_end; ++j)
          if (tab(i, j) != T(0)) tab(i, j) = -tab(i, j);
        r = -r;
      }
      hi_[art_[i]] = r;
      tab(i, art_[i]) = T(1);
      basis_[i] = art_[i];
      state_[art_[i]] = VarState::Basic;
      xb_[i] = r;
    }
  }

  // reduced costs for cost vector c (dense over all columns)
  void compute_reduced(const std::vector<T>& c) {
    d_ = c;
    for (int i = 0; i < m_; ++i) {
      const T& cb = c[basis_[i]];
      if (cb == T(0)) continue;
      for (int j = 0; j < n_; ++j) {
        if (tab(i, j) == T(0)) continue;
        T p = cb * tab(i, j);
        d_[j] = d_[j] - p;
      }
    }
  }

  bool iterate(LpResult<T>& res) {
    const T dj_tol = Tol<T>::reduced_cost();
    const T piv_tol = Tol<T>::pivot();
    // Dantzig pricing until a degenerate stall, then Bland's least-index
    // rule permanently: fast in the common case, cycling-free always.
    bool bland = false;
    int degenerate_streak = 0;
    const int stall_limit = 4 * (m_ + 16);
    while (true) {
      int e = -1;
      int dir = 0;
      T best_score(0);
      for (int j = 0; j < n_; ++j) {
        if (state_[j] == VarState::Basic) continue;
        if (!(lo_[j] < hi_[j])) continue;
        T viol(0);
        int d = 0;
        if (state_[j] == VarState::AtLower && d_[j] < -dj_tol) {
          viol = -d_[j];
          d = 1;
        } else if (state_[j] == VarState::AtUpper && d_[j] > dj_tol) {
          viol = d_[j];
          d = -1;
        } else {
          continue;
        }
        if (bland) {
          e = j;
          dir = d;
          break;
        }
        if (viol > best_score) {
          best_score = viol;
          e = j;
          dir = d;
        }
      }
      if (e < 0) return true;  // optimal for this phase

      // ratio test; ties go to the lowest basis variable index under Bland,
      // to the largest pivot magnitude otherwise
      T t_best = hi_[e] - lo_[e];
      int leave = -1;
      bool leave_at_lower = false;
      for (int i = 0; i < m_; ++i) {
        T a = tab(i, e);
        if (dir < 0) a = -a;
        T t;
        bool at_lower;
        if (a > piv_tol) {
          t = (xb_[i] - lo_[basis_[i]]) / a;
          at_lower = true;
        } else if (a < -piv_tol) {
          t = (hi_[basis_[i]] - xb_[i]) / (-a);
          at_lower = false;
        } else {
          continue;
        }
        if (t < T(0)) t = T(0);  // degenerate, clipped
        bool take = t < t_best;
        if (!take && t == t_best && leave >= 0) {
          if (bland) {
            take = basis_[i] < basis_[leave];
          } else {
            T cur = num::abs<T>(tab(leave, e));
            T cand = num::abs<T>(tab(i, e));
            take = cand > cur || (cand == cur && basis_[i] < basis_[leave]);
          }
        }
        if (take) {
          t_best = t;
          leave = i;
          leave_at_lower = at_lower;
        }
      }
      if (t_best == T(0)) {
        if (!bland && ++degenerate_streak > stall_limit) bland = true;
      } else {
        degenerate_streak = 0;
      }

      // move
      for (int i = 0; i < m_; ++i) {
        if (tab(i, e) == T(0)) continue;
        T delta = tab(i, e) * t_best;
        if (dir > 0)
          xb_[i] = xb_[i] - delta;
        else
          xb_[i] = xb_[i] + delta;
      }
      if (leave < 0) {  // bound flip
        state_[e] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
        if (!budget_.charge(m_)) {
          res.status = LpStatus::WorkLimit;
          res.pivots = pivots_;
          return false;
        }
        continue;
      }

      int lv = basis_[leave];
      T pivot = tab(leave, e);
      if constexpr (!is_rational_v<T>) {
        if (std::abs(pivot) < 1e-12) throw NumericalError("simplex: vanishing pivot");
      }
      // entering value; leaving variable lands exactly on the bound it hit
      T enter_val = bound_value(e);
      if (dir > 0)
        enter_val = enter_val + t_best;
      else
        enter_val = enter_val - t_best;
      state_[lv] = leave_at_lower ? VarState::AtLower : VarState::AtUpper;
      basis_[leave] = e;
      state_[e] = VarState::Basic;
      xb_[leave] = enter_val;

      // Gauss-Jordan elimination of column e
      T inv = T(1) / pivot;
      for (int j = 0; j < n_; ++j) {
        if (tab(leave, j) == T(0)) continue;
        tab(leave, j) = tab(leave, j) * inv;
      }
      tab(leave, e) = T(1);
      for (int i = 0; i < m_; ++i) {
        if (i == leave) continue;
        T f = tab(i, e);
        if (f == T(0)) continue;
        for (int j = 0; j < n_; ++j) {
          if (tab(leave, j) == T(0)) continue;
          T p = f * tab(leave, j);
          tab(i, j) = tab(i, j) - p;
        }
        tab(i, e) = T(0);
      }
      {
        T f = d_[e];
        if (f != T(0)) {
          for (int j = 0; j < n_; ++j) {
            if (tab(leave, j) == T(0)) continue;
            T p = f * tab(leave, j);
            d_[j] = d_[j] - p;
          }
          d_[e] = T(0);
        }
      }
      ++pivots_;
      if constexpr (!is_rational_v<T>) {
        if (!std::isfinite(xb_[leave]))
          throw NumericalError("simplex: non-finite basic value");
      }
      if (!budget_.charge((long long)(m_)*n_)) {
        res.status = LpStatus::WorkLimit;
        res.pivots = pivots_;
        return false;
      }
    }
  }

  bool run_phase1(LpResult<T>& res) {
    bool any_positive = false;
    for (int i = 0; i < m_; ++i)
      if (xb_[i] > T(0)) any_positive = true;
    if (any_positive) {
      std::vector<T> c1(n_, T(0));
      for (int i = 0; i < m_; ++i) c1[art_[i]] = T(1);
      compute_reduced(c1);
      if (!iterate(res)) return false;
    }
    T infeas(0);
    for (int i = 0; i < m_; ++i) {
      T v = value_of(art_[i]);
      if (v > T(0)) infeas = infeas + v;
    }
    if (infeas > Tol<T>::feas()) {
      res.status = LpStatus::Infeasible;
      res.pivots = pivots_;
      return false;
    }
    for (int i = 0; i < m_; ++i) hi_[art_[i]] = T(0);  // pin artificials
    return true;
  }

  bool run_phase2(LpResult<T>& res) {
    std::vector<T> c(n_, T(0));
    for (int j = 0; j < int(prob_.objective.size()) && j < n_struct_; ++j)
      c[j] = prob_.objective[j];
    compute_reduced(c);
    return iterate(res);
  }
};

}  // namespace lp_detail

/// Primal simplex with Bland's rule. Double mode uses a 1e-9 feasibility
/// tolerance; rational mode is exact. Throws NumericalError when a pivot
/// degenerates in double mode (callers may retry in rational arithmetic).
template <class T>
LpResult<T> solve_lp(const LpProblem<T>& p, WorkBudget& budget) {
  lp_detail::Simplex<T> s(p, budget);
  return s.solve();
}

template <class T>
LpResult<T> solve_lp(const LpProblem<T>& p) {
  WorkBudget b = WorkBudget::unlimited();
  return solve_lp(p, b);
}

/// Exact rational copy of a double problem (coefficients converted exactly).
inline LpProblem<Rational> to_rational_problem(const LpProblem<double>& p) {
  LpProblem<Rational> q;
  for (int i = 0; i < p.num_vars(); ++i) q.add_var(rational_of(p.lower[i]), rational_of(p.upper[i]));
  for (const LpRow<double>& row : p.rows) {
    std::vector<std::pair<int, Rational>> terms;
    for (const auto& [v, c] : row.terms) terms.emplace_back(v, rational_of(c));
    q.add_row(std::move(terms), row.rel, rational_of(row.rhs));
  }
  q.objective.reserve(p.objective.size());
  for (double c : p.objective) q.objective.push_back(rational_of(c));
  q.obj_offset = rational_of(p.obj_offset);
  return q;
}

}  // namespace fpgap
