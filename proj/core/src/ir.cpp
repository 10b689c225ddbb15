#include "pplforge/ir/ir.hpp"

#include <sstream>

namespace ppl {

bool ScalarType::operator==(const ScalarType& o) const {
  if (kind != o.kind) return false;
  if (kind != Kind::Tuple) return true;
  if (elems.size() != o.elems.size()) return false;
  for (std::size_t i = 0; i < elems.size(); ++i)
    if (elems[i] != o.elems[i]) return false;
  return true;
}

int ScalarType::lanes() const {
  if (kind != Kind::Tuple) return 1;
  int n = 0;
  for (const auto& e : elems) n += e.lanes();
  return n;
}

int ScalarType::bits() const {
  switch (kind) {
    case Kind::Int:
    case Kind::Float: return 32;
    case Kind::Bool: return 1;
    case Kind::Tuple: {
      int n = 0;
      for (const auto& e : elems) n += e.bits();
      return n;
    }
  }
  return 32;
}

int ScalarType::laneOffset(int i) const {
  int off = 0;
  for (int j = 0; j < i; ++j) off += elems.at(j).lanes();
  return off;
}

std::string ScalarType::str() const {
  switch (kind) {
    case Kind::Int: return "int";
    case Kind::Float: return "float";
    case Kind::Bool: return "bool";
    case Kind::Tuple: {
      std::string s = "(";
      for (std::size_t i = 0; i < elems.size(); ++i) {
        if (i) s += ", ";
        s += elems[i].str();
      }
      return s + ")";
    }
  }
  return "?";
}

std::string Value::str() const {
  std::ostringstream os;
  if (lanes.size() != 1) os << "(";
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if (i) os << ", ";
    std::visit(
        [&](auto x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, bool>) os << (x ? "true" : "false");
          else os << x;
        },
        lanes[i]);
  }
  if (lanes.size() != 1) os << ")";
  return os.str();
}

Value zeroValue(const ScalarType& t) {
  Value v;
  switch (t.kind) {
    case ScalarType::Kind::Int: v.lanes.push_back(std::int64_t{0}); break;
    case ScalarType::Kind::Float: v.lanes.push_back(0.0); break;
    case ScalarType::Kind::Bool: v.lanes.push_back(false); break;
    case ScalarType::Kind::Tuple:
      for (const auto& e : t.elems) {
        Value sub = zeroValue(e);
        v.lanes.insert(v.lanes.end(), sub.lanes.begin(), sub.lanes.end());
      }
      break;
  }
  return v;
}

const char* binOpName(BinOpKind k) {
  switch (k) {
    case BinOpKind::Add: return "+";
    case BinOpKind::Sub: return "-";
    case BinOpKind::Mul: return "*";
    case BinOpKind::Div: return "/";
    case BinOpKind::Lt: return "<";
    case BinOpKind::Eq: return "==";
    case BinOpKind::Min: return "min";
    case BinOpKind::Max: return "max";
  }
  return "?";
}

static Expr mkExpr(ExprNode n) {
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

Expr makeConst(Value v, ScalarType t) { return mkExpr({ConstE{std::move(v), std::move(t)}}); }
Expr constInt(std::int64_t v) { return makeConst(Value::ofInt(v), ScalarType::Int()); }
Expr constFloat(double v) { return makeConst(Value::ofFloat(v), ScalarType::Float()); }
Expr constBool(bool v) { return makeConst(Value::ofBool(v), ScalarType::Bool()); }
Expr indexRef(const std::string& name) { return mkExpr({IndexRefE{name}}); }
Expr varRef(const std::string& name) { return mkExpr({VarRefE{name}}); }
Expr arrayRead(const std::string& arr, std::vector<Expr> idx, bool nonAffine) {
  return mkExpr({ArrayReadE{arr, std::move(idx), nonAffine}});
}
Expr binOp(BinOpKind k, Expr a, Expr b) { return mkExpr({BinOpE{k, std::move(a), std::move(b)}}); }
Expr ifExpr(Expr c, Expr t, Expr e) { return mkExpr({IfE{std::move(c), std::move(t), std::move(e)}}); }
Expr tupleMake(std::vector<Expr> es) { return mkExpr({TupleMakeE{std::move(es)}}); }
Expr tupleProj(Expr t, int i) { return mkExpr({TupleProjE{std::move(t), i}}); }
Expr letExpr(const std::string& id, Expr bound, Expr body) {
  return mkExpr({LetE{id, std::move(bound), std::move(body)}});
}

Pattern makePattern(PatternNode n) {
  return Pattern(std::make_shared<const PatternNode>(std::move(n)));
}

Pattern mapP(Shape domain, std::vector<std::string> binders, Block body) {
  PatternNode n;
  n.v = MapNode{std::move(domain), std::move(binders), std::move(body)};
  return makePattern(std::move(n));
}

Pattern multiFoldP(Shape domain, std::vector<std::string> binders,
                   std::vector<Binding> lets, std::vector<Accumulator> accs,
                   bool strided) {
  PatternNode n;
  n.strided = strided;
  n.v = MultiFoldNode{std::move(domain), std::move(binders), std::move(lets),
                      std::move(accs)};
  return makePattern(std::move(n));
}

Pattern flatMapP(Shape domain, std::vector<std::string> binders, Block body,
                 bool strided) {
  PatternNode n;
  n.strided = strided;
  n.v = FlatMapNode{std::move(domain), std::move(binders), std::move(body)};
  return makePattern(std::move(n));
}

Pattern groupByFoldP(GroupByFoldNode g) {
  PatternNode n;
  n.v = std::move(g);
  return makePattern(std::move(n));
}

Pattern arrayCopyP(std::string source, std::vector<CopyDim> dims,
                   std::optional<int> reuse) {
  PatternNode n;
  n.v = ArrayCopyNode{std::move(source), std::move(dims), reuse};
  return makePattern(std::move(n));
}

Pattern sliceP(std::string source, std::vector<SliceDim> dims) {
  PatternNode n;
  n.v = SliceNode{std::move(source), std::move(dims)};
  return makePattern(std::move(n));
}

Pattern arrayRefP(std::string name) {
  PatternNode n;
  n.v = ArrayRefNode{std::move(name)};
  return makePattern(std::move(n));
}

Pattern elemsP(std::vector<Expr> es) {
  PatternNode n;
  n.v = ElemsNode{std::move(es)};
  return makePattern(std::move(n));
}

Pattern ifP(Expr cond, Node t, Node e) {
  PatternNode n;
  n.v = IfNode{std::move(cond), std::move(t), std::move(e)};
  return makePattern(std::move(n));
}

Pattern withStrided(const Pattern& p, bool strided) {
  PatternNode n = p.get();
  n.strided = strided;
  return makePattern(std::move(n));
}

const InputDecl* Program::findInput(const std::string& id) const {
  for (const auto& in : inputs)
    if (in.id == id) return &in;
  return nullptr;
}

const Binding* Program::findBinding(const std::string& id) const {
  for (const auto& b : bindings)
    for (const auto& bid : b.ids)
      if (bid == id) return &b;
  return nullptr;
}

}  // namespace ppl
