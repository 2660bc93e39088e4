#ifndef MORAN_EXPRESSION_HPP
#define MORAN_EXPRESSION_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "moran/kernel.hpp"

namespace moran {

// Mini-grammar for kernel entries written in model files:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '[' expr ']' | name '(' expr (',' expr)* ')'
//            | '(' expr ')'
//
// Names: x, y (1-based state labels), K (number of states), mu[i] (weight of
// the current measure at state i), scalar parameters, and array parameters
// indexed from 1. Functions: min, max, pos, neg, abs, exp, log, sqrt, eq (1 if
// the two arguments are equal, else 0), mu_mean(array) = sum_z mu[z] array[z].

class ExpressionError : public Error {
 public:
  using Error::Error;
};

struct ParameterTable {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<double>> arrays;
};

class Expression {
 public:
  struct Node;
  struct Context {
    double x = 0.0;
    double y = 0.0;
    const Measure* mu = nullptr;
    std::size_t size = 0;
  };

  static Expression parse(const std::string& text, ParameterTable params);

  double evaluate(const Context& ctx) const;
  bool uses_mu() const { return uses_mu_; }
  bool uses_y() const { return uses_y_; }
  const std::string& text() const { return text_; }

  /// Site function x -> value (y is not allowed).
  SiteFunction site_function(std::size_t size) const;
  /// Pair function (x, y) -> value.
  PairFunction pair_function(std::size_t size) const;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
  std::shared_ptr<const ParameterTable> params_;
  bool uses_mu_ = false;
  bool uses_y_ = false;
};

}  // namespace moran

#endif  // MORAN_EXPRESSION_HPP
