// SPDX-License-Identifier: Apache-2.0
//
// Bounded-variable primal simplex on a dense tableau. Columns can be added
// between solves, which is how the branch-and-bound prices in assignment
// variables lazily.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace twostage::lp {

enum class RowSense { Le, Eq, Ge };

struct SparseColumn {
  std::vector<int> row;
  std::vector<double> value;
};

enum class LpStatus { Optimal, Infeasible, IterationLimit };

class SingularBasis : public std::runtime_error {
 public:
  SingularBasis() : std::runtime_error("simplex: singular basis") {}
};

struct SimplexTolerances {
  double primal = 1e-9;
  double dual = 1e-9;
  double pivot = 1e-9;
};

class BoundedSimplex {
 public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  BoundedSimplex(std::vector<RowSense> sense, std::vector<double> rhs, SimplexTolerances tol = {})
      : m_(static_cast<int>(rhs.size())), sense_(std::move(sense)), rhs_(std::move(rhs)), tol_(tol) {
    if (static_cast<int>(sense_.size()) != m_) throw std::invalid_argument("simplex: sense/rhs length mismatch");
    basis_.assign(m_, -1);
    xb_.assign(m_, 0.0);
    art_.assign(m_, -1);
    art_sign_.assign(m_, 1.0);
    // slack columns first, then one artificial per row
    std::vector<int> slack(m_, -1);
    for (int i = 0; i < m_; ++i) {
      if (sense_[i] == RowSense::Eq) continue;
      const double s = sense_[i] == RowSense::Le ? 1.0 : -1.0;
      slack[i] = push_column(Kind::Slack, 0.0, kInf, SparseColumn{{i}, {s}});
    }
    for (int i = 0; i < m_; ++i) {
      const bool slack_feasible = slack[i] >= 0 && (sense_[i] == RowSense::Le ? rhs_[i] >= 0.0 : rhs_[i] <= 0.0);
      art_sign_[i] = slack_feasible ? 1.0 : (rhs_[i] >= 0.0 ? 1.0 : -1.0);
      art_[i] = push_column(Kind::Artificial, 0.0, slack_feasible ? 0.0 : kInf, SparseColumn{{i}, {art_sign_[i]}});
      basis_[i] = slack_feasible ? slack[i] : art_[i];
    }
    refactor();
  }

  int rows() const { return m_; }
  int columns() const { return static_cast<int>(kind_.size()); }

  /// Adds a structural column with bounds [0, upper], nonbasic at zero.
  int add_column(double cost, double upper, SparseColumn col) {
    const int j = push_column(Kind::Structural, cost, upper, std::move(col));
    std::vector<double> t(m_, 0.0);
    const auto& a = orig_[j];
    for (std::size_t k = 0; k < a.row.size(); ++k) {
      const int i = a.row[k];
      const double f = a.value[k] * art_sign_[i];
      const auto& binv = tab_[art_[i]];
      for (int r = 0; r < m_; ++r) t[r] += f * binv[r];
    }
    tab_[j] = std::move(t);
    d_[j] = active_cost(j) - dot_duals(a);
    return j;
  }

  /// Phase one followed by phase two on the current column set.
  LpStatus solve(long iteration_limit = 200000) {
    phase_ = 1;
    reset_costs();
    auto st = iterate(iteration_limit);
    if (st != LpStatus::Optimal) return st;
    if (infeasibility() > tol_.primal * 10) return LpStatus::Infeasible;
    enter_phase_two();
    return iterate(iteration_limit);
  }

  /// Continues the current phase after columns were added.
  LpStatus resume(long iteration_limit = 200000) {
    auto st = iterate(iteration_limit);
    if (st != LpStatus::Optimal) return st;
    if (phase_ == 1) {
      if (infeasibility() > tol_.primal * 10) return LpStatus::Infeasible;
      enter_phase_two();
      return iterate(iteration_limit);
    }
    return st;
  }

  int phase() const { return phase_; }

  /// Sum of artificial values (phase-one objective).
  double infeasibility() const {
    double s = 0.0;
    for (int r = 0; r < m_; ++r)
      if (kind_[basis_[r]] == Kind::Artificial) s += std::max(0.0, xb_[r]);
    return s;
  }

  /// Row duals of the active phase's objective: y_i = c_B^T B^{-1} e_i.
  std::vector<double> duals() const {
    std::vector<double> y(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const auto& binv = tab_[art_[i]];
      double s = 0.0;
      for (int r = 0; r < m_; ++r) s += active_cost(basis_[r]) * binv[r];
      y[i] = s * art_sign_[i];
    }
    return y;
  }

  double value(int j) const {
    if (pos_[j] >= 0) return xb_[pos_[j]];
    return at_upper_[j] ? upper_[j] : 0.0;
  }

  double reduced_cost(int j) const { return d_[j]; }
  bool is_basic(int j) const { return pos_[j] >= 0; }
  bool is_structural(int j) const { return kind_[j] == Kind::Structural; }

  double objective() const {
    double s = 0.0;
    for (int j = 0; j < columns(); ++j)
      if (kind_[j] == Kind::Structural) s += cost_[j] * value(j);
    return s;
  }

  long iterations() const { return iterations_; }

  /// Rebuilds B^{-1}, the tableau, basic values and reduced costs from the
  /// original columns.
  void refactor() {
    const int n = columns();
    // dense B
    std::vector<double> b(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int r = 0; r < m_; ++r) {
      const auto& a = orig_[basis_[r]];
      for (std::size_t k = 0; k < a.row.size(); ++k) b[static_cast<std::size_t>(a.row[k]) * m_ + r] = a.value[k];
    }
    std::vector<double> inv = invert(b);
    pos_.assign(n, -1);
    for (int r = 0; r < m_; ++r) pos_[basis_[r]] = r;
    tab_.resize(n);
    for (int j = 0; j < n; ++j) {
      std::vector<double> t(m_, 0.0);
      const auto& a = orig_[j];
      for (std::size_t k = 0; k < a.row.size(); ++k) {
        const int i = a.row[k];
        const double f = a.value[k];
        for (int r = 0; r < m_; ++r) t[r] += f * inv[static_cast<std::size_t>(r) * m_ + i];
      }
      tab_[j] = std::move(t);
    }
    // x_B = B^{-1} (b - N x_N)
    std::vector<double> resid = rhs_;
    for (int j = 0; j < n; ++j) {
      if (pos_[j] >= 0 || !at_upper_[j]) continue;
      const auto& a = orig_[j];
      for (std::size_t k = 0; k < a.row.size(); ++k) resid[a.row[k]] -= a.value[k] * upper_[j];
    }
    for (int r = 0; r < m_; ++r) {
      double s = 0.0;
      for (int i = 0; i < m_; ++i) s += inv[static_cast<std::size_t>(r) * m_ + i] * resid[i];
      xb_[r] = s;
    }
    recompute_reduced_costs();
    pivots_since_refactor_ = 0;
  }

 private:
  enum class Kind : std::uint8_t { Structural, Slack, Artificial };

  int push_column(Kind kind, double cost, double upper, SparseColumn col) {
    kind_.push_back(kind);
    cost_.push_back(cost);
    upper_.push_back(upper);
    at_upper_.push_back(0);
    pos_.push_back(-1);
    d_.push_back(0.0);
    orig_.push_back(std::move(col));
    tab_.emplace_back();
    return static_cast<int>(kind_.size()) - 1;
  }

  double active_cost(int j) const {
    if (phase_ == 1) return kind_[j] == Kind::Artificial ? 1.0 : 0.0;
    return kind_[j] == Kind::Structural ? cost_[j] : 0.0;
  }

  double dot_duals(const SparseColumn& a) const {
    // y^T a with y from the artificial reduced costs: d_art = c_art - sign * y_i
    double s = 0.0;
    for (std::size_t k = 0; k < a.row.size(); ++k) {
      const int i = a.row[k];
      const int art = art_[i];
      s += a.value[k] * (active_cost(art) - d_[art]) * art_sign_[i];
    }
    return s;
  }

  void recompute_reduced_costs() {
    const auto y = duals();
    for (int j = 0; j < columns(); ++j) {
      double s = 0.0;
      const auto& a = orig_[j];
      for (std::size_t k = 0; k < a.row.size(); ++k) s += y[a.row[k]] * a.value[k];
      d_[j] = pos_[j] >= 0 ? 0.0 : active_cost(j) - s;
    }
  }

  void reset_costs() { recompute_reduced_costs(); }

  void enter_phase_two() {
    phase_ = 2;
    for (int i = 0; i < m_; ++i) {
      const int a = art_[i];
      upper_[a] = 0.0;
      at_upper_[a] = 0;
      if (pos_[a] >= 0 && xb_[pos_[a]] < tol_.primal * 10) xb_[pos_[a]] = 0.0;
    }
    drive_out_artificials();
    recompute_reduced_costs();
  }

  void drive_out_artificials() {
    for (int r = 0; r < m_; ++r) {
      if (kind_[basis_[r]] != Kind::Artificial) continue;
      int best = -1;
      double best_abs = 1e-7;
      for (int j = 0; j < columns(); ++j) {
        if (pos_[j] >= 0 || kind_[j] == Kind::Artificial || upper_[j] <= 0.0) continue;
        if (std::abs(tab_[j][r]) > best_abs) {
          best_abs = std::abs(tab_[j][r]);
          best = j;
        }
      }
      if (best < 0) continue;  // redundant row; the artificial stays basic at zero
      // degenerate pivot: the artificial sits at zero
      const double entering_value = at_upper_[best] ? upper_[best] : 0.0;
      pivot(r, best, 0.0, +1);
      xb_[r] = entering_value;
    }
  }

  bool eligible(int j, int& dir) const {
    if (pos_[j] >= 0 || upper_[j] <= 0.0) return false;
    if (!at_upper_[j] && d_[j] < -tol_.dual) {
      dir = +1;
      return true;
    }
    if (at_upper_[j] && d_[j] > tol_.dual) {
      dir = -1;
      return true;
    }
    return false;
  }

  double lower_of(int) const { return 0.0; }

  LpStatus iterate(long iteration_limit) {
    int degenerate_run = 0;
    bool bland = false;
    for (long it = 0; it < iteration_limit; ++it) {
      if (pivots_since_refactor_ >= 64) refactor();
      int enter = -1;
      int dir = 0;
      double best = 0.0;
      for (int j = 0; j < columns(); ++j) {
        int dj = 0;
        if (!eligible(j, dj)) continue;
        if (bland) {
          enter = j;
          dir = dj;
          break;
        }
        const double score = std::abs(d_[j]);
        if (score > best) {
          best = score;
          enter = j;
          dir = dj;
        }
      }
      if (enter < 0) {
        if (pivots_since_refactor_ > 0) {
          refactor();
          bool again = false;
          for (int j = 0; j < columns() && !again; ++j) {
            int dj = 0;
            again = eligible(j, dj);
          }
          if (again) continue;
        }
        return LpStatus::Optimal;
      }

      // Harris ratio test: bound the step with slightly relaxed bounds, then
      // take the largest pivot among the rows blocking within that step
      const auto& col = tab_[enter];
      auto row_limit = [&](int r, double alpha, double slack_tol, bool& to_upper) {
        const int b = basis_[r];
        if (alpha > 0.0) {
          to_upper = false;
          return (std::max(0.0, xb_[r] - lower_of(b)) + slack_tol) / alpha;
        }
        to_upper = true;
        if (!std::isfinite(upper_[b])) return kInf;
        return (std::max(0.0, upper_[b] - xb_[r]) + slack_tol) / (-alpha);
      };
      double relaxed = upper_[enter];
      for (int r = 0; r < m_; ++r) {
        const double alpha = dir * col[r];
        if (std::abs(alpha) <= tol_.pivot) continue;
        bool up = false;
        relaxed = std::min(relaxed, row_limit(r, alpha, tol_.primal, up));
      }
      double step = upper_[enter];
      int leave_row = -1;
      bool leave_to_upper = false;
      double leave_pivot = 0.0;
      if (relaxed < upper_[enter]) {
        for (int r = 0; r < m_; ++r) {
          const double alpha = dir * col[r];
          if (std::abs(alpha) <= tol_.pivot) continue;
          bool up = false;
          const double limit = row_limit(r, alpha, 0.0, up);
          if (limit > relaxed) continue;
          const bool take = leave_row < 0 ||
                            (bland ? basis_[r] < basis_[leave_row] : std::abs(alpha) > std::abs(leave_pivot));
          if (take) {
            step = limit;
            leave_row = r;
            leave_to_upper = up;
            leave_pivot = alpha;
          }
        }
      }
      if (!std::isfinite(step)) throw std::runtime_error("simplex: unbounded direction in a bounded problem");

      ++iterations_;
      if (step <= 1e-12) {
        if (++degenerate_run > 50) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      if (leave_row < 0) {
        // bound flip of the entering variable
        for (int r = 0; r < m_; ++r) xb_[r] -= dir * step * col[r];
        at_upper_[enter] = dir > 0 ? 1 : 0;
        continue;
      }
      const double entering_value = (at_upper_[enter] ? upper_[enter] : 0.0) + dir * step;
      for (int r = 0; r < m_; ++r) xb_[r] -= dir * step * col[r];
      // tolerated overshoot of other basics is clipped back onto their bounds
      for (int r = 0; r < m_; ++r) {
        if (r == leave_row) continue;
        const int b = basis_[r];
        if (xb_[r] < 0.0 && xb_[r] > -tol_.primal) xb_[r] = 0.0;
        if (std::isfinite(upper_[b]) && xb_[r] > upper_[b] && xb_[r] < upper_[b] + tol_.primal) xb_[r] = upper_[b];
      }
      const int leaving = basis_[leave_row];
      at_upper_[leaving] = leave_to_upper ? 1 : 0;
      pivot(leave_row, enter, entering_value, dir);
    }
    return LpStatus::IterationLimit;
  }

  void pivot(int r, int enter, double entering_value, int) {
    const std::vector<double> pc = tab_[enter];
    const double p = pc[r];
    const int leaving = basis_[r];
    const int n = columns();
    for (int j = 0; j < n; ++j) {
      auto& t = tab_[j];
      const double f = t[r];
      if (f == 0.0) continue;
      const double g = f / p;
      for (int i = 0; i < m_; ++i) t[i] -= pc[i] * g;
      t[r] = g;
    }
    const double dq = d_[enter];
    if (dq != 0.0) {
      for (int j = 0; j < n; ++j) {
        const double f = tab_[j][r];
        if (f != 0.0) d_[j] -= dq * f;
      }
    }
    d_[enter] = 0.0;
    pos_[leaving] = -1;
    pos_[enter] = r;
    basis_[r] = enter;
    xb_[r] = entering_value;
    ++pivots_since_refactor_;
  }

  static std::vector<double> invert(std::vector<double> a) {
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(a.size()))));
    std::vector<double> inv(a.size(), 0.0);
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i) * n + i] = 1.0;
    for (int c = 0; c < n; ++c) {
      int piv = c;
      for (int r = c + 1; r < n; ++r)
        if (std::abs(a[static_cast<std::size_t>(r) * n + c]) > std::abs(a[static_cast<std::size_t>(piv) * n + c])) piv = r;
      const double pv = a[static_cast<std::size_t>(piv) * n + c];
      if (std::abs(pv) < 1e-11) throw SingularBasis();
      if (piv != c) {
        for (int k = 0; k < n; ++k) {
          std::swap(a[static_cast<std::size_t>(piv) * n + k], a[static_cast<std::size_t>(c) * n + k]);
          std::swap(inv[static_cast<std::size_t>(piv) * n + k], inv[static_cast<std::size_t>(c) * n + k]);
        }
      }
      for (int k = 0; k < n; ++k) {
        a[static_cast<std::size_t>(c) * n + k] /= pv;
        inv[static_cast<std::size_t>(c) * n + k] /= pv;
      }
      for (int r = 0; r < n; ++r) {
        if (r == c) continue;
        const double f = a[static_cast<std::size_t>(r) * n + c];
        if (f == 0.0) continue;
        for (int k = 0; k < n; ++k) {
          a[static_cast<std::size_t>(r) * n + k] -= f * a[static_cast<std::size_t>(c) * n + k];
          inv[static_cast<std::size_t>(r) * n + k] -= f * inv[static_cast<std::size_t>(c) * n + k];
        }
      }
    }
    return inv;
  }

  int m_;
  std::vector<RowSense> sense_;
  std::vector<double> rhs_;
  SimplexTolerances tol_;
  int phase_ = 1;

  std::vector<Kind> kind_;
  std::vector<double> cost_;
  std::vector<double> upper_;
  std::vector<std::uint8_t> at_upper_;
  std::vector<int> pos_;
  std::vector<double> d_;
  std::vector<SparseColumn> orig_;
  std::vector<std::vector<double>> tab_;

  std::vector<int> basis_;
  std::vector<double> xb_;
  std::vector<int> art_;
  std::vector<double> art_sign_;
  long iterations_ = 0;
  int pivots_since_refactor_ = 0;
};

}  // namespace twostage::lp
