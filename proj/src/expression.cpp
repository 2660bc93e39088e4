#include "moran/expression.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <cmath>
#include <cstdlib>
#include <functional>

namespace moran {

struct Expression::Node {
  enum class Kind { Number, Var, Index, Call, Neg, Binary };
  Kind kind = Kind::Number;
  double number = 0.0;
  std::string name;  // variable, array or function name
  char op = 0;       // for Binary
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

class Parser {
 public:
  Parser(const std::string& text, const ParameterTable& params)
      : text_(text), params_(params) {}

  NodePtr parse_all() {
    NodePtr n = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return n;
  }

  bool uses_mu = false;
  bool uses_y = false;

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ExpressionError("expression '" + text_ + "' at column " +
                          std::to_string(pos_ + 1) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr binary(char op, NodePtr lhs, NodePtr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Binary;
    n->op = op;
    n->args = {std::move(lhs), std::move(rhs)};
    return n;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) lhs = binary('+', lhs, parse_term());
      else if (accept('-')) lhs = binary('-', lhs, parse_term());
      else return lhs;
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (accept('*')) lhs = binary('*', lhs, parse_unary());
      else if (accept('/')) lhs = binary('/', lhs, parse_unary());
      else return lhs;
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Neg;
      n->args = {parse_unary()};
      return n;
    }
    if (accept('+')) return parse_unary();
    NodePtr base = parse_primary();
    if (accept('^')) return binary('^', base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = parse_expr();
      expect(')');
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = std::make_shared<Node>();
      n->number = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string name = text_.substr(start, pos_ - start);
      if (accept('(')) return parse_call(name);
      if (accept('[')) {
        if (name != "mu" && !params_.arrays.count(name)) fail("unknown array '" + name + "'");
        if (name == "mu") uses_mu = true;
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Index;
        n->name = name;
        n->args = {parse_expr()};
        expect(']');
        return n;
      }
      if (name == "y") uses_y = true;
      if (name != "x" && name != "y" && name != "K" && !params_.scalars.count(name))
        fail("unknown identifier '" + name + "'");
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Var;
      n->name = name;
      return n;
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr parse_call(const std::string& name) {
    static const std::map<std::string, std::pair<int, int>> arity = {
        {"min", {2, 64}}, {"max", {2, 64}}, {"pos", {1, 1}},    {"neg", {1, 1}},
        {"abs", {1, 1}},  {"eq", {2, 2}},   {"mu_mean", {1, 1}}, {"exp", {1, 1}},
        {"log", {1, 1}},  {"sqrt", {1, 1}}};
    auto it = arity.find(name);
    if (it == arity.end()) fail("unknown function '" + name + "'");
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Call;
    n->name = name;
    if (name == "mu_mean") {
      uses_mu = true;
      skip_ws();
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      auto arg = std::make_shared<Node>();
      arg->kind = Node::Kind::Var;
      arg->name = text_.substr(start, pos_ - start);
      if (!params_.arrays.count(arg->name)) fail("mu_mean expects an array parameter");
      n->args.push_back(arg);
      expect(')');
      return n;
    }
    do {
      n->args.push_back(parse_expr());
    } while (accept(','));
    expect(')');
    const int count = static_cast<int>(n->args.size());
    if (count < it->second.first || count > it->second.second)
      fail("wrong number of arguments to '" + name + "'");
    return n;
  }

  const std::string& text_;
  const ParameterTable& params_;
  std::size_t pos_ = 0;
};

std::size_t to_index(double v, std::size_t size, const std::string& what) {
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-9 || r < 1.0 || r > static_cast<double>(size))
    throw ExpressionError(what + " index " + std::to_string(v) + " out of range 1.." +
                          std::to_string(size));
  return static_cast<std::size_t>(r) - 1;
}

double eval_node(const Node& n, const Expression::Context& ctx, const ParameterTable& p) {
  switch (n.kind) {
    case Node::Kind::Number:
      return n.number;
    case Node::Kind::Var:
      if (n.name == "x") return ctx.x;
      if (n.name == "y") return ctx.y;
      if (n.name == "K") return static_cast<double>(ctx.size);
      return p.scalars.at(n.name);
    case Node::Kind::Index: {
      const double i = eval_node(*n.args[0], ctx, p);
      if (n.name == "mu") {
        if (!ctx.mu) throw ExpressionError("mu[] used without a measure");
        return (*ctx.mu)[to_index(i, ctx.mu->size(), "mu")];
      }
      const auto& arr = p.arrays.at(n.name);
      return arr[to_index(i, arr.size(), n.name)];
    }
    case Node::Kind::Neg:
      return -eval_node(*n.args[0], ctx, p);
    case Node::Kind::Binary: {
      const double a = eval_node(*n.args[0], ctx, p);
      const double b = eval_node(*n.args[1], ctx, p);
      switch (n.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '^': return std::pow(a, b);
        default: return a / b;
      }
    }
    case Node::Kind::Call: {
      if (n.name == "mu_mean") {
        if (!ctx.mu) throw ExpressionError("mu_mean used without a measure");
        const auto& arr = p.arrays.at(n.args[0]->name);
        if (arr.size() != ctx.mu->size())
          throw ExpressionError("mu_mean array size differs from state space");
        double s = 0.0;
        for (std::size_t z = 0; z < arr.size(); ++z) s += (*ctx.mu)[z] * arr[z];
        return s;
      }
      std::vector<double> v;
      for (const auto& a : n.args) v.push_back(eval_node(*a, ctx, p));
      if (n.name == "min") return *std::min_element(v.begin(), v.end());
      if (n.name == "max") return *std::max_element(v.begin(), v.end());
      if (n.name == "pos") return std::max(v[0], 0.0);
      if (n.name == "neg") return -std::min(v[0], 0.0);
      if (n.name == "abs") return std::abs(v[0]);
      if (n.name == "exp") return std::exp(v[0]);
      if (n.name == "log") return std::log(v[0]);
      if (n.name == "sqrt") return std::sqrt(v[0]);
      return v[0] == v[1] ? 1.0 : 0.0;  // eq
    }
  }
  return 0.0;
}

}  // namespace

Expression Expression::parse(const std::string& text, ParameterTable params) {
  Expression e;
  e.text_ = text;
  e.params_ = std::make_shared<const ParameterTable>(std::move(params));
  Parser parser(e.text_, *e.params_);
  e.root_ = parser.parse_all();
  e.uses_mu_ = parser.uses_mu;
  e.uses_y_ = parser.uses_y;
  return e;
}

double Expression::evaluate(const Context& ctx) const {
  return eval_node(*root_, ctx, *params_);
}

SiteFunction Expression::site_function(std::size_t size) const {
  if (uses_y_) throw ExpressionError("expression '" + text_ + "' uses y in a site function");
  auto self = *this;
  auto eval_all = [self, size](const Measure* mu) {
    Vector v(static_cast<Eigen::Index>(size));
    Context ctx;
    ctx.mu = mu;
    ctx.size = size;
    for (std::size_t x = 0; x < size; ++x) {
      ctx.x = static_cast<double>(x + 1);
      v[static_cast<Eigen::Index>(x)] = self.evaluate(ctx);
    }
    return v;
  };
  if (!uses_mu_) return SiteFunction::constant(eval_all(nullptr));
  return SiteFunction::dynamic(size, [eval_all](const Measure& mu) { return eval_all(&mu); });
}

PairFunction Expression::pair_function(std::size_t size) const {
  auto self = *this;
  auto eval_all = [self, size](const Measure* mu) {
    const auto n = static_cast<Eigen::Index>(size);
    Matrix m(n, n);
    Context ctx;
    ctx.mu = mu;
    ctx.size = size;
    for (Eigen::Index x = 0; x < n; ++x)
      for (Eigen::Index y = 0; y < n; ++y) {
        ctx.x = static_cast<double>(x + 1);
        ctx.y = static_cast<double>(y + 1);
        m(x, y) = self.evaluate(ctx);
      }
    return m;
  };
  if (!uses_mu_) return PairFunction::constant(eval_all(nullptr));
  return PairFunction::dynamic(size, [eval_all](const Measure& mu) { return eval_all(&mu); });
}

}  // namespace moran
