#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "claps/geometry.hpp"
#include "claps/util.hpp"

namespace claps::spectrl {

/// Named region table; all entries must share one dimension count.
class RegionTable {
 public:
  RegionTable() = default;

  void define(const std::string& name, Region region);
  bool has(const std::string& name) const;
  const Region& at(const std::string& name) const;  // throws DomainError if missing
  std::size_t dims() const { return dims_; }        // 0 until first define
  const std::map<std::string, Region>& entries() const { return regions_; }

 private:
  std::size_t dims_ = 0;
  std::map<std::string, Region> regions_;
};

/// Boolean combination of named atomic predicates.
struct Predicate {
  enum class Kind { Atom, And, Or, Not };

  Kind kind = Kind::Atom;
  std::string atom;                      // Kind::Atom
  std::vector<Predicate> children;       // And/Or: 2, Not: 1

  static Predicate make_atom(std::string name);
  static Predicate make_and(Predicate a, Predicate b);
  static Predicate make_or(Predicate a, Predicate b);
  static Predicate make_not(Predicate a);

  bool eval(const RegionTable& table, std::span<const double> x) const;

  /// The set of states satisfying this predicate, as a box-union region.
  Region to_region(const RegionTable& table, const Box& state_space) const;

  std::string print() const;
  bool operator==(const Predicate&) const = default;
};

/// SpectRL formula: achieve / ensuring / sequence / or.
struct Formula {
  enum class Kind { Achieve, Ensuring, Seq, Or };

  Kind kind = Kind::Achieve;
  Predicate pred;                            // Achieve: goal; Ensuring: constraint
  std::vector<Formula> children;             // Ensuring: 1, Seq/Or: 2

  static Formula achieve(Predicate p);
  static Formula ensuring(Formula f, Predicate p);
  static Formula seq(Formula a, Formula b);
  static Formula alt(Formula a, Formula b);  // "or"

  std::size_t size() const;  // node count (formula + predicate nodes)

  /// Canonical concrete syntax; parse(print(f)) is structurally f.
  std::string print() const;

  bool operator==(const Formula&) const = default;
};

struct ParseError : Error {
  ParseError(std::string msg, int line, int column);
  int line;
  int column;
};

/// Parse the concrete grammar. Keywords: achieve, ensuring, `;`, or,
/// parentheses; precedence ensuring > `;` > or, with `;`/or left-associative.
/// Predicates use identifiers with `&`, `|`, `!` (precedence ! > & > |).
/// Every atom must resolve in `table`.
Formula parse(const std::string& text, const RegionTable& table);

/// Finite-prefix satisfaction of the inductive semantics on exactly this
/// prefix: Achieve holds if witnessed at any step; Ensuring constrains every
/// step of the prefix; Seq splits at a shared state (prefix [0..t], suffix
/// [t..K]); Or is disjunction. Seq split points are searched with memoization
/// over (node, start, end).
bool eval_prefix(const Formula& f, const RegionTable& table,
                 const std::vector<std::vector<double>>& prefix);

/// Trajectory-level satisfaction restricted to the observed prefix: true iff
/// some leading sub-prefix satisfies the formula exactly. This is the notion
/// that matches abstract-graph reachability.
bool eval_prefix_witnessed(const Formula& f, const RegionTable& table,
                           const std::vector<std::vector<double>>& prefix);

/// Translate a finitary word language (all words of equal length H over
/// atomic predicate names) into the disjunction of per-word sequences
/// p(w_1); ...; p(w_H).
Formula finitary_to_spectrl(const std::vector<std::vector<std::string>>& words);

}  // namespace claps::spectrl
