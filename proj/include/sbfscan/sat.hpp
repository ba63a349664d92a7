#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <vector>

namespace sbfscan {

// Small CDCL SAT solver: two-watched literals, 1UIP learning, VSIDS with
// phase saving, geometric restarts. Incremental in the sense that clauses may
// be added between solve() calls.
class SatSolver {
 public:
  enum class Result { Sat, Unsat, Unknown };

  int new_var() {
    int v = static_cast<int>(assigns_.size());
    assigns_.push_back(kUndef);
    phase_.push_back(false);
    level_.push_back(0);
    reason_.push_back(-1);
    activity_.push_back(0.0);
    seen_.push_back(0);
    watches_.emplace_back();
    watches_.emplace_back();
    order_.push({0.0, v});
    return v;
  }

  static int pos(int var) { return var << 1; }
  static int neg(int var) { return (var << 1) | 1; }
  static int negate(int lit) { return lit ^ 1; }
  static int var_of(int lit) { return lit >> 1; }

  // Returns false if the formula is already unsatisfiable.
  bool add_clause(std::vector<int> lits) {
    if (failed_) return false;
    cancel_until(0);
    std::sort(lits.begin(), lits.end());
    lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
    std::vector<int> out;
    for (size_t i = 0; i < lits.size(); ++i) {
      if (i + 1 < lits.size() && lits[i + 1] == negate(lits[i]) &&
          var_of(lits[i]) == var_of(lits[i + 1]))
        return true;  // tautology
      int8_t v = lit_value(lits[i]);
      if (v == kTrue) return true;
      if (v == kUndef) out.push_back(lits[i]);
    }
    if (out.empty()) {
      failed_ = true;
      return false;
    }
    if (out.size() == 1) {
      enqueue(out[0], -1);
      if (propagate() >= 0) {
        failed_ = true;
        return false;
      }
      return true;
    }
    int ci = static_cast<int>(clauses_.size());
    clauses_.push_back(std::move(out));
    attach(ci);
    return true;
  }

  Result solve(uint64_t conflict_budget = 200000) {
    if (failed_) return Result::Unsat;
    cancel_until(0);
    uint64_t conflicts = 0;
    uint64_t restart_limit = 100;
    uint64_t restart_at = conflicts + restart_limit;
    while (true) {
      int confl = propagate();
      if (confl >= 0) {
        ++conflicts;
        if (decision_level() == 0) {
          failed_ = true;
          return Result::Unsat;
        }
        if (conflicts > conflict_budget) {
          cancel_until(0);
          return Result::Unknown;
        }
        std::vector<int> learnt;
        int bt = analyze(confl, learnt);
        cancel_until(bt);
        if (learnt.size() == 1) {
          enqueue(learnt[0], -1);
        } else {
          int ci = static_cast<int>(clauses_.size());
          clauses_.push_back(learnt);
          attach(ci);
          enqueue(learnt[0], ci);
        }
        var_decay();
      } else {
        if (conflicts >= restart_at && decision_level() > 0) {
          restart_limit = restart_limit * 3 / 2;
          restart_at = conflicts + restart_limit;
          cancel_until(0);
          continue;
        }
        int next = pick_branch_var();
        if (next < 0) return Result::Sat;
        trail_lim_.push_back(static_cast<int>(trail_.size()));
        enqueue(phase_[next] ? pos(next) : neg(next), -1);
      }
    }
  }

  bool model_value(int var) const { return assigns_[var] == kTrue; }
  size_t num_vars() const { return assigns_.size(); }

 private:
  static constexpr int8_t kTrue = 1, kFalse = -1, kUndef = 0;

  struct Watcher {
    int clause;
    int blocker;
  };

  int8_t lit_value(int lit) const {
    int8_t v = assigns_[var_of(lit)];
    if (v == kUndef) return kUndef;
    return (lit & 1) ? static_cast<int8_t>(-v) : v;
  }

  int decision_level() const { return static_cast<int>(trail_lim_.size()); }

  void attach(int ci) {
    const auto& c = clauses_[ci];
    watches_[negate(c[0])].push_back({ci, c[1]});
    watches_[negate(c[1])].push_back({ci, c[0]});
  }

  void enqueue(int lit, int reason) {
    int v = var_of(lit);
    assigns_[v] = (lit & 1) ? kFalse : kTrue;
    phase_[v] = !(lit & 1);
    level_[v] = decision_level();
    reason_[v] = reason;
    trail_.push_back(lit);
  }

  // Returns conflicting clause index, or -1.
  int propagate() {
    while (qhead_ < trail_.size()) {
      int lit = trail_[qhead_++];
      auto& ws = watches_[lit];
      size_t i = 0, j = 0;
      int confl = -1;
      for (; i < ws.size(); ++i) {
        Watcher w = ws[i];
        if (lit_value(w.blocker) == kTrue) {
          ws[j++] = w;
          continue;
        }
        auto& c = clauses_[w.clause];
        // Ensure c[0] is the other watched literal.
        if (c[0] == negate(lit)) std::swap(c[0], c[1]);
        if (lit_value(c[0]) == kTrue) {
          ws[j++] = {w.clause, c[0]};
          continue;
        }
        bool moved = false;
        for (size_t k = 2; k < c.size(); ++k) {
          if (lit_value(c[k]) != kFalse) {
            std::swap(c[1], c[k]);
            watches_[negate(c[1])].push_back({w.clause, c[0]});
            moved = true;
            break;
          }
        }
        if (moved) continue;
        ws[j++] = {w.clause, c[0]};
        if (lit_value(c[0]) == kFalse) {
          confl = w.clause;
          qhead_ = trail_.size();
          for (++i; i < ws.size(); ++i) ws[j++] = ws[i];
          break;
        }
        enqueue(c[0], w.clause);
      }
      ws.resize(j);
      if (confl >= 0) return confl;
    }
    return -1;
  }

  int analyze(int confl, std::vector<int>& learnt) {
    learnt.push_back(0);  // placeholder for the asserting literal
    int counter = 0;
    int lit = -1;
    size_t index = trail_.size();
    do {
      const auto& c = clauses_[confl];
      for (size_t k = (lit == -1 ? 0 : 1); k < c.size(); ++k) {
        int q = c[k];
        if (lit != -1 && q == lit) continue;
        int v = var_of(q);
        if (!seen_[v] && level_[v] > 0) {
          seen_[v] = 1;
          bump(v);
          if (level_[v] >= decision_level())
            ++counter;
          else
            learnt.push_back(q);
        }
      }
      // Walk back the trail to the next marked literal.
      while (!seen_[var_of(trail_[index - 1])]) --index;
      --index;
      lit = trail_[index];
      seen_[var_of(lit)] = 0;
      confl = reason_[var_of(lit)];
      --counter;
    } while (counter > 0);
    learnt[0] = negate(lit);
    for (size_t k = 1; k < learnt.size(); ++k) seen_[var_of(learnt[k])] = 0;

    int bt = 0;
    if (learnt.size() > 1) {
      size_t max_i = 1;
      for (size_t k = 2; k < learnt.size(); ++k)
        if (level_[var_of(learnt[k])] > level_[var_of(learnt[max_i])]) max_i = k;
      std::swap(learnt[1], learnt[max_i]);
      bt = level_[var_of(learnt[1])];
    }
    return bt;
  }

  void cancel_until(int lvl) {
    if (decision_level() <= lvl) return;
    int bound = trail_lim_[lvl];
    for (int i = static_cast<int>(trail_.size()) - 1; i >= bound; --i) {
      int v = var_of(trail_[i]);
      assigns_[v] = kUndef;
      reason_[v] = -1;
      order_.push({activity_[v], v});
    }
    trail_.resize(bound);
    trail_lim_.resize(lvl);
    qhead_ = trail_.size();
  }

  int pick_branch_var() {
    while (!order_.empty()) {
      auto [act, v] = order_.top();
      if (assigns_[v] == kUndef && act == activity_[v]) return v;
      order_.pop();
    }
    for (size_t v = 0; v < assigns_.size(); ++v)
      if (assigns_[v] == kUndef) return static_cast<int>(v);
    return -1;
  }

  void bump(int v) {
    activity_[v] += inc_;
    if (activity_[v] > 1e100) {
      for (auto& a : activity_) a *= 1e-100;
      inc_ *= 1e-100;
    }
    order_.push({activity_[v], v});
  }

  void var_decay() { inc_ *= 1.0 / 0.95; }

  std::vector<int8_t> assigns_;
  std::vector<bool> phase_;
  std::vector<int> level_;
  std::vector<int> reason_;
  std::vector<double> activity_;
  std::vector<int8_t> seen_;
  std::vector<std::vector<Watcher>> watches_;  // indexed by literal
  std::vector<std::vector<int>> clauses_;
  std::vector<int> trail_;
  std::vector<int> trail_lim_;
  size_t qhead_ = 0;
  double inc_ = 1.0;
  bool failed_ = false;
  std::priority_queue<std::pair<double, int>> order_;  // (activity, var), lazy
};

}  // namespace sbfscan
