#include "claps/spectrl.hpp"

#include <cctype>
#include <sstream>
#include <unordered_map>

#include "claps/util.hpp"

namespace claps::spectrl {

// -- RegionTable --------------------------------------------------------------

void RegionTable::define(const std::string& name, Region region) {
  if (name.empty()) throw DomainError("region name must be nonempty");
  if (dims_ == 0)
    dims_ = region.dims();
  else if (region.dims() != dims_)
    throw DomainError("region '" + name + "' dimension mismatch with table");
  regions_.insert_or_assign(name, std::move(region));
}

bool RegionTable::has(const std::string& name) const { return regions_.count(name) > 0; }

const Region& RegionTable::at(const std::string& name) const {
  auto it = regions_.find(name);
  if (it == regions_.end()) throw DomainError("unknown region name: " + name);
  return it->second;
}

// -- Predicate ----------------------------------------------------------------

Predicate Predicate::make_atom(std::string name) {
  Predicate p;
  p.kind = Kind::Atom;
  p.atom = std::move(name);
  return p;
}

Predicate Predicate::make_and(Predicate a, Predicate b) {
  Predicate p;
  p.kind = Kind::And;
  p.children = {std::move(a), std::move(b)};
  return p;
}

Predicate Predicate::make_or(Predicate a, Predicate b) {
  Predicate p;
  p.kind = Kind::Or;
  p.children = {std::move(a), std::move(b)};
  return p;
}

Predicate Predicate::make_not(Predicate a) {
  Predicate p;
  p.kind = Kind::Not;
  p.children = {std::move(a)};
  return p;
}

bool Predicate::eval(const RegionTable& table, std::span<const double> x) const {
  switch (kind) {
    case Kind::Atom: return table.at(atom).contains(x);
    case Kind::And: return children[0].eval(table, x) && children[1].eval(table, x);
    case Kind::Or: return children[0].eval(table, x) || children[1].eval(table, x);
    case Kind::Not: return !children[0].eval(table, x);
  }
  return false;
}

Region Predicate::to_region(const RegionTable& table, const Box& state_space) const {
  switch (kind) {
    case Kind::Atom: return table.at(atom).intersected(state_space);
    case Kind::And:
      return children[0].to_region(table, state_space)
          .intersected(children[1].to_region(table, state_space));
    case Kind::Or:
      return children[0].to_region(table, state_space)
          .unioned(children[1].to_region(table, state_space));
    case Kind::Not: return children[0].to_region(table, state_space).complement_within(state_space);
  }
  return Region::empty(state_space.dims());
}

std::string Predicate::print() const {
  switch (kind) {
    case Kind::Atom: return atom;
    case Kind::And: return "(" + children[0].print() + " & " + children[1].print() + ")";
    case Kind::Or: return "(" + children[0].print() + " | " + children[1].print() + ")";
    case Kind::Not: return "!" + children[0].print();
  }
  return {};
}

// -- Formula ------------------------------------------------------------------

Formula Formula::achieve(Predicate p) {
  Formula f;
  f.kind = Kind::Achieve;
  f.pred = std::move(p);
  return f;
}

Formula Formula::ensuring(Formula inner, Predicate p) {
  Formula f;
  f.kind = Kind::Ensuring;
  f.pred = std::move(p);
  f.children = {std::move(inner)};
  return f;
}

Formula Formula::seq(Formula a, Formula b) {
  Formula f;
  f.kind = Kind::Seq;
  f.children = {std::move(a), std::move(b)};
  return f;
}

Formula Formula::alt(Formula a, Formula b) {
  Formula f;
  f.kind = Kind::Or;
  f.children = {std::move(a), std::move(b)};
  return f;
}

static std::size_t pred_size(const Predicate& p) {
  std::size_t n = 1;
  for (const auto& c : p.children) n += pred_size(c);
  return n;
}

std::size_t Formula::size() const {
  std::size_t n = 1;
  if (kind == Kind::Achieve || kind == Kind::Ensuring) n += pred_size(pred);
  for (const auto& c : children) n += c.size();
  return n;
}

std::string Formula::print() const {
  switch (kind) {
    case Kind::Achieve: return "achieve " + pred.print();
    case Kind::Ensuring: return "(" + children[0].print() + " ensuring " + pred.print() + ")";
    case Kind::Seq: return "(" + children[0].print() + " ; " + children[1].print() + ")";
    case Kind::Or: return "(" + children[0].print() + " or " + children[1].print() + ")";
  }
  return {};
}

// -- Parser -------------------------------------------------------------------

ParseError::ParseError(std::string msg, int line_, int column_)
    : Error(msg + " at " + std::to_string(line_) + ":" + std::to_string(column_)),
      line(line_),
      column(column_) {}

namespace {

struct Token {
  enum class Type { Ident, KwAchieve, KwEnsuring, KwOr, Semi, LParen, RParen, Amp, Pipe, Bang, End };
  Type type;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++col_;
        ++pos_;
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    int line = line_, col = col_;
    if (pos_ >= src_.size()) {
      tok_ = {Token::Type::End, "", line, col};
      return;
    }
    char c = src_[pos_];
    auto single = [&](Token::Type t) {
      ++pos_;
      ++col_;
      tok_ = {t, std::string(1, c), line, col};
    };
    switch (c) {
      case ';': return single(Token::Type::Semi);
      case '(': return single(Token::Type::LParen);
      case ')': return single(Token::Type::RParen);
      case '&': return single(Token::Type::Amp);
      case '|': return single(Token::Type::Pipe);
      case '!': return single(Token::Type::Bang);
      default: break;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        ++pos_;
        ++col_;
      }
      std::string word = src_.substr(start, pos_ - start);
      Token::Type t = Token::Type::Ident;
      if (word == "achieve") t = Token::Type::KwAchieve;
      else if (word == "ensuring") t = Token::Type::KwEnsuring;
      else if (word == "or") t = Token::Type::KwOr;
      tok_ = {t, std::move(word), line, col};
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line, col);
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_{Token::Type::End, "", 1, 1};
};

class Parser {
 public:
  Parser(const std::string& src, const RegionTable& table) : lex_(src), table_(table) {}

  Formula parse_all() {
    Formula f = parse_or();
    const Token& t = lex_.peek();
    if (t.type != Token::Type::End)
      throw ParseError("unexpected trailing input '" + t.text + "'", t.line, t.column);
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    const Token& t = lex_.peek();
    std::string where = t.type == Token::Type::End ? "end of input" : "'" + t.text + "'";
    throw ParseError(msg + ", found " + where, t.line, t.column);
  }

  void expect(Token::Type type, const char* what) {
    if (lex_.peek().type != type) fail(std::string("expected ") + what);
    lex_.take();
  }

  Formula parse_or() {
    Formula f = parse_seq();
    while (lex_.peek().type == Token::Type::KwOr) {
      lex_.take();
      f = Formula::alt(std::move(f), parse_seq());
    }
    return f;
  }

  Formula parse_seq() {
    Formula f = parse_ensuring();
    while (lex_.peek().type == Token::Type::Semi) {
      lex_.take();
      f = Formula::seq(std::move(f), parse_ensuring());
    }
    return f;
  }

  Formula parse_ensuring() {
    Formula f = parse_primary();
    while (lex_.peek().type == Token::Type::KwEnsuring) {
      lex_.take();
      f = Formula::ensuring(std::move(f), parse_pred());
    }
    return f;
  }

  Formula parse_primary() {
    const Token& t = lex_.peek();
    if (t.type == Token::Type::KwAchieve) {
      lex_.take();
      return Formula::achieve(parse_pred());
    }
    if (t.type == Token::Type::LParen) {
      lex_.take();
      Formula f = parse_or();
      expect(Token::Type::RParen, "')'");
      return f;
    }
    fail("expected 'achieve' or '('");
  }

  Predicate parse_pred() { return parse_pred_or(); }

  Predicate parse_pred_or() {
    Predicate p = parse_pred_and();
    while (lex_.peek().type == Token::Type::Pipe) {
      lex_.take();
      p = Predicate::make_or(std::move(p), parse_pred_and());
    }
    return p;
  }

  Predicate parse_pred_and() {
    Predicate p = parse_pred_unary();
    while (lex_.peek().type == Token::Type::Amp) {
      lex_.take();
      p = Predicate::make_and(std::move(p), parse_pred_unary());
    }
    return p;
  }

  Predicate parse_pred_unary() {
    const Token& t = lex_.peek();
    if (t.type == Token::Type::Bang) {
      lex_.take();
      return Predicate::make_not(parse_pred_unary());
    }
    if (t.type == Token::Type::LParen) {
      lex_.take();
      Predicate p = parse_pred_or();
      expect(Token::Type::RParen, "')'");
      return p;
    }
    if (t.type == Token::Type::Ident) {
      Token tok = lex_.take();
      if (!table_.has(tok.text))
        throw ParseError("unknown region name '" + tok.text + "'", tok.line, tok.column);
      return Predicate::make_atom(tok.text);
    }
    fail("expected a predicate");
  }

  Lexer lex_;
  const RegionTable& table_;
};

}  // namespace

Formula parse(const std::string& text, const RegionTable& table) {
  return Parser(text, table).parse_all();
}

// -- Prefix semantics -----------------------------------------------------------

namespace {

// Per-node evaluation over sub-prefixes [i..j], memoized. Seq is the only
// connective that needs split-point search; the memo keeps the whole thing
// polynomial in prefix length.
class PrefixEvaluator {
 public:
  PrefixEvaluator(const RegionTable& table, const std::vector<std::vector<double>>& prefix)
      : table_(table), prefix_(prefix) {}

  bool eval(const Formula& f, std::size_t i, std::size_t j) {
    auto key = std::make_tuple(&f, i, j);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    bool value = false;
    switch (f.kind) {
      case Formula::Kind::Achieve: {
        for (std::size_t t = i; t <= j && !value; ++t) value = pred_at(f.pred, t);
        break;
      }
      case Formula::Kind::Ensuring: {
        value = true;
        for (std::size_t t = i; t <= j && value; ++t) value = pred_at(f.pred, t);
        if (value) value = eval(f.children[0], i, j);
        break;
      }
      case Formula::Kind::Seq: {
        for (std::size_t t = i; t <= j && !value; ++t)
          value = eval(f.children[0], i, t) && eval(f.children[1], t, j);
        break;
      }
      case Formula::Kind::Or: {
        value = eval(f.children[0], i, j) || eval(f.children[1], i, j);
        break;
      }
    }
    memo_.emplace(key, value);
    return value;
  }

 private:
  bool pred_at(const Predicate& p, std::size_t t) {
    auto key = std::make_pair(&p, t);
    auto it = pred_memo_.find(key);
    if (it != pred_memo_.end()) return it->second;
    bool v = p.eval(table_, prefix_[t]);
    pred_memo_.emplace(key, v);
    return v;
  }

  struct TupleHash {
    std::size_t operator()(const std::tuple<const Formula*, std::size_t, std::size_t>& k) const {
      auto [f, i, j] = k;
      std::size_t h = std::hash<const void*>()(f);
      h ^= std::hash<std::size_t>()(i) + 0x9e3779b9 + (h << 6) + (h >> 2);
      h ^= std::hash<std::size_t>()(j) + 0x9e3779b9 + (h << 6) + (h >> 2);
      return h;
    }
  };
  struct PairHash {
    std::size_t operator()(const std::pair<const Predicate*, std::size_t>& k) const {
      return std::hash<const void*>()(k.first) ^ (k.second * 0x9e3779b97f4a7c15ULL);
    }
  };

  const RegionTable& table_;
  const std::vector<std::vector<double>>& prefix_;
  std::unordered_map<std::tuple<const Formula*, std::size_t, std::size_t>, bool, TupleHash> memo_;
  std::unordered_map<std::pair<const Predicate*, std::size_t>, bool, PairHash> pred_memo_;
};

void check_prefix(const RegionTable& table, const std::vector<std::vector<double>>& prefix) {
  if (prefix.empty()) throw DomainError("prefix must contain at least one state");
  for (const auto& x : prefix)
    if (x.size() != table.dims()) throw DomainError("prefix state dimension mismatch");
}

}  // namespace

bool eval_prefix(const Formula& f, const RegionTable& table,
                 const std::vector<std::vector<double>>& prefix) {
  check_prefix(table, prefix);
  PrefixEvaluator ev(table, prefix);
  return ev.eval(f, 0, prefix.size() - 1);
}

bool eval_prefix_witnessed(const Formula& f, const RegionTable& table,
                           const std::vector<std::vector<double>>& prefix) {
  check_prefix(table, prefix);
  PrefixEvaluator ev(table, prefix);
  for (std::size_t k = 0; k < prefix.size(); ++k)
    if (ev.eval(f, 0, k)) return true;
  return false;
}

Formula finitary_to_spectrl(const std::vector<std::vector<std::string>>& words) {
  if (words.empty()) throw DomainError("finitary language must contain at least one word");
  const std::size_t h = words.front().size();
  if (h == 0) throw DomainError("finitary words must have length >= 1");
  for (const auto& w : words)
    if (w.size() != h) throw DomainError("finitary words must all share one length");

  Formula result;
  bool first_word = true;
  for (const auto& w : words) {
    Formula seq = Formula::achieve(Predicate::make_atom(w[0]));
    for (std::size_t i = 1; i < h; ++i)
      seq = Formula::seq(std::move(seq), Formula::achieve(Predicate::make_atom(w[i])));
    if (first_word) {
      result = std::move(seq);
      first_word = false;
    } else {
      result = Formula::alt(std::move(result), std::move(seq));
    }
  }
  return result;
}

}  // namespace claps::spectrl
