#pragma once

// Minimal tape-based reverse-mode automatic differentiation over doubles.
//
// Every operation records at most two parents and the local partial
// derivatives; `Tape::adjoints` sweeps the tape backwards once.

#include <cmath>
#include <cstddef>
#include <vector>

namespace hmfpc::ad {

class Tape {
 public:
  struct Node {
    int lhs = -1;
    int rhs = -1;
    double d_lhs = 0.0;
    double d_rhs = 0.0;
  };

  int push(int lhs = -1, double d_lhs = 0.0, int rhs = -1, double d_rhs = 0.0) {
    nodes_.push_back(Node{lhs, rhs, d_lhs, d_rhs});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// d output / d node for every node recorded so far.
  std::vector<double> adjoints(int output, double seed = 1.0) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output < 0) return adj;
    adj[static_cast<std::size_t>(output)] = seed;
    for (int i = output; i >= 0; --i) {
      const double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.lhs >= 0) adj[static_cast<std::size_t>(n.lhs)] += a * n.d_lhs;
      if (n.rhs >= 0) adj[static_cast<std::size_t>(n.rhs)] += a * n.d_rhs;
    }
    return adj;
  }

 private:
  std::vector<Node> nodes_;
};

/// Active scalar. A default-constructed or double-constructed Var is a
/// constant and does not touch any tape.
class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: implicit constants
  Var(Tape* tape, int index, double value) : tape_(tape), index_(index), value_(value) {}

  static Var independent(Tape& tape, double value) {
    return Var(&tape, tape.push(), value);
  }

  double value() const { return value_; }
  int index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool active() const { return tape_ != nullptr; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var unary(const Var& a, double value, double d) {
    if (!a.active()) return Var(value);
    return Var(a.tape_, a.tape_->push(a.index_, d), value);
  }

  friend Var binary(const Var& a, const Var& b, double value, double da, double db) {
    Tape* t = a.active() ? a.tape_ : b.tape_;
    if (t == nullptr) return Var(value);
    const int ia = a.active() ? a.index_ : -1;
    const int ib = b.active() ? b.index_ : -1;
    return Var(t, t->push(ia, da, ib, db), value);
  }

  friend Var operator+(const Var& a, const Var& b) {
    return binary(a, b, a.value_ + b.value_, 1.0, 1.0);
  }
  friend Var operator-(const Var& a, const Var& b) {
    return binary(a, b, a.value_ - b.value_, 1.0, -1.0);
  }
  friend Var operator*(const Var& a, const Var& b) {
    return binary(a, b, a.value_ * b.value_, b.value_, a.value_);
  }
  friend Var operator/(const Var& a, const Var& b) {
    const double q = a.value_ / b.value_;
    return binary(a, b, q, 1.0 / b.value_, -q / b.value_);
  }
  friend Var operator-(const Var& a) { return unary(a, -a.value_, -1.0); }

  friend bool operator<(const Var& a, const Var& b) { return a.value_ < b.value_; }
  friend bool operator>(const Var& a, const Var& b) { return a.value_ > b.value_; }

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
  double value_ = 0.0;
};

inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return unary(a, s, 0.5 / s);
}
inline Var log(const Var& a) { return unary(a, std::log(a.value()), 1.0 / a.value()); }
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return unary(a, e, e);
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

}  // namespace hmfpc::ad
