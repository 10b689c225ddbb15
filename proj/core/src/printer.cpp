#include "pplforge/text/printer.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "pplforge/ir/validate.hpp"
#include "pplforge/ir/walk.hpp"

namespace ppl {

namespace {

std::string ind(int n) { return std::string(2 * n, ' '); }

std::string floatLit(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos)
    s += ".0";
  return s;
}

std::string constStr(const ConstE& c) {
  std::function<std::string(const ScalarType&, int&)> go = [&](const ScalarType& t,
                                                               int& lane) -> std::string {
    switch (t.kind) {
      case ScalarType::Kind::Int: return std::to_string(std::get<std::int64_t>(c.v.lanes[lane++]));
      case ScalarType::Kind::Float: return floatLit(std::get<double>(c.v.lanes[lane++]));
      case ScalarType::Kind::Bool: return std::get<bool>(c.v.lanes[lane++]) ? "true" : "false";
      case ScalarType::Kind::Tuple: {
        std::string out = "(";
        for (std::size_t i = 0; i < t.elems.size(); ++i) {
          if (i) out += ", ";
          out += go(t.elems[i], lane);
        }
        return out + ")";
      }
    }
    return "?";
  };
  int lane = 0;
  return go(c.type, lane);
}

// precedence: 0 compare, 1 additive, 2 multiplicative, 3 atom
int precOf(BinOpKind k) {
  switch (k) {
    case BinOpKind::Lt:
    case BinOpKind::Eq: return 0;
    case BinOpKind::Add:
    case BinOpKind::Sub: return 1;
    case BinOpKind::Mul:
    case BinOpKind::Div: return 2;
    default: return 3;
  }
}

std::string exprStr(const Expr& e, int prec);

std::string exprAtomOrParen(const Expr& e, int prec) { return exprStr(e, prec); }

std::string exprStr(const Expr& e, int prec) {
  return std::visit(
      overloaded{
          [&](const ConstE& c) { return constStr(c); },
          [&](const IndexRefE& x) { return x.name; },
          [&](const VarRefE& x) { return x.name; },
          [&](const ArrayReadE& x) {
            std::string out = x.array + "(";
            for (std::size_t i = 0; i < x.indices.size(); ++i) {
              if (i) out += ", ";
              out += exprStr(x.indices[i], 0);
            }
            return out + ")";
          },
          [&](const BinOpE& x) {
            if (x.op == BinOpKind::Min || x.op == BinOpKind::Max) {
              return std::string(x.op == BinOpKind::Min ? "min" : "max") + "(" +
                     exprStr(x.lhs, 0) + ", " + exprStr(x.rhs, 0) + ")";
            }
            int p = precOf(x.op);
            std::string s = exprStr(x.lhs, p) + " " + binOpName(x.op) + " " +
                            exprStr(x.rhs, p + 1);
            if (p < prec) return "(" + s + ")";
            return s;
          },
          [&](const IfE& x) {
            std::string s = "if (" + exprStr(x.cond, 0) + ") " + exprStr(x.thenE, 1) +
                            " else " + exprStr(x.elseE, 1);
            if (prec > 0) return "(" + s + ")";
            return s;
          },
          [&](const TupleMakeE& x) {
            std::string out = "(";
            for (std::size_t i = 0; i < x.elems.size(); ++i) {
              if (i) out += ", ";
              out += exprStr(x.elems[i], 0);
            }
            return out + ")";
          },
          [&](const TupleProjE& x) {
            return exprStr(x.tuple, 3) + "._" + std::to_string(x.index + 1);
          },
          [&](const LetE& x) {
            // no surface form; inline the binding
            std::map<std::string, Expr> sub;
            sub[x.id] = x.bound;
            return exprStr(substExpr(x.body, sub), prec);
          },
      },
      e.get().v);
}

std::string sizeStr(const SizeExpr& s) { return normalizeSize(s).str(); }

std::string shapeList(const Shape& sh) {
  std::string out;
  for (std::size_t i = 0; i < sh.size(); ++i) {
    if (i) out += ", ";
    out += sizeStr(sh[i]);
  }
  return out;
}

std::string binderList(const std::vector<std::string>& bs) {
  if (bs.size() == 1) return bs[0];
  std::string out = "(";
  for (std::size_t i = 0; i < bs.size(); ++i) {
    if (i) out += ", ";
    out += bs[i];
  }
  return out + ")";
}

bool isZerosMap(const Pattern& p, bool* isInt) {
  const auto* m = std::get_if<MapNode>(&p.get().v);
  if (!m || !m->body.lets.empty() || !m->body.result.isExpr()) return false;
  const auto* c = std::get_if<ConstE>(&m->body.result.expr().get().v);
  if (!c) return false;
  if (c->type.kind == ScalarType::Kind::Float && c->v.asFloat() == 0.0) {
    *isInt = false;
    return true;
  }
  if (c->type.kind == ScalarType::Kind::Int && c->v.asInt() == 0) {
    *isInt = true;
    return true;
  }
  return false;
}

std::string nodeStr(const Node& n, int indent);
std::string patternStr(const Pattern& p, int indent);

std::string blockBody(const Block& b, int indent) {
  std::string out;
  for (const auto& let : b.lets) {
    out += ind(indent);
    if (let.ids.size() > 1) {
      out += "(";
      for (std::size_t i = 0; i < let.ids.size(); ++i) {
        if (i) out += ", ";
        out += let.ids[i];
      }
      out += ")";
    } else {
      out += let.ids[0];
    }
    out += " = " + nodeStr(let.value, indent) + "\n";
  }
  out += ind(indent) + nodeStr(b.result, indent) + "\n";
  return out;
}

std::string combineStr(const std::optional<Combine>& c) {
  if (!c) return "(_)";
  return "{ (" + c->lhs + ", " + c->rhs + ") => " + exprStr(c->body, 0) + " }";
}

std::string updateBody(const Block& b, int indent) {
  if (b.lets.empty()) return nodeStr(b.result, indent);
  std::string out = "{\n";
  out += blockBody(b, indent + 1);
  out += ind(indent) + "}";
  return out;
}

std::string accSpecStr(const Accumulator& a, int indent) {
  std::string loc;
  if (a.loc.size() == 1) {
    loc = exprStr(a.loc[0], 0);
  } else {
    loc = "(";
    for (std::size_t i = 0; i < a.loc.size(); ++i) {
      if (i) loc += ", ";
      loc += exprStr(a.loc[i], 0);
    }
    loc += ")";
  }
  return "(" + loc + ", " + a.sliceBinder + " => " + updateBody(a.update, indent) + ")";
}

std::string patternStr(const Pattern& p, int indent) {
  bool zinT = false;
  if (isZerosMap(p, &zinT)) {
    const auto& m = std::get<MapNode>(p.get().v);
    return std::string(zinT ? "zerosi" : "zeros") + "(" + shapeList(m.domain) + ")";
  }
  return std::visit(
      overloaded{
          [&](const MapNode& m) {
            std::string out = "map(" + shapeList(m.domain) + "){ " + binderList(m.binders) +
                              " =>\n";
            out += blockBody(m.body, indent + 1);
            out += ind(indent) + "}";
            return out;
          },
          [&](const MultiFoldNode& m) {
            bool foldForm = m.accs.size() == 1 && isFold(m);
            if (foldForm) {
              const Accumulator& a = m.accs[0];
              std::string init;
              if (a.init.isExpr()) {
                init = exprStr(a.init.expr(), 0);
              } else {
                bool zi = false;
                if (isZerosMap(a.init.pattern(), &zi))
                  init = std::string(zi ? "zerosi" : "zeros") + "(" +
                         shapeList(std::get<MapNode>(a.init.pattern().get().v).domain) + ")";
                else
                  foldForm = false;
              }
              if (foldForm) {
                std::string out = "fold(" + shapeList(m.domain) + ")(" + init + "){ " +
                                  binderList(m.binders) + " =>\n";
                for (const auto& let : m.lets) {
                  out += ind(indent + 1);
                  if (let.ids.size() > 1) {
                    out += "(";
                    for (std::size_t i = 0; i < let.ids.size(); ++i) {
                      if (i) out += ", ";
                      out += let.ids[i];
                    }
                    out += ")";
                  } else {
                    out += let.ids[0];
                  }
                  out += " = " + nodeStr(let.value, indent + 1) + "\n";
                }
                out += ind(indent + 1) + a.sliceBinder + " => " +
                       updateBody(a.update, indent + 1) + "\n";
                out += ind(indent) + "}" + combineStr(a.combine);
                return out;
              }
            }
            std::string out = "multiFold(" + shapeList(m.domain) + ")(";
            for (std::size_t i = 0; i < m.accs.size(); ++i) {
              if (i) out += ", ";
              const Shape& r = m.accs[i].range;
              if (r.size() == 1) out += sizeStr(r[0]);
              else out += "(" + shapeList(r) + ")";
            }
            out += ")(";
            for (std::size_t i = 0; i < m.accs.size(); ++i) {
              if (i) out += ", ";
              out += nodeStr(m.accs[i].init, indent);
            }
            out += "){ " + binderList(m.binders) + " =>\n";
            for (const auto& let : m.lets) {
              out += ind(indent + 1);
              if (let.ids.size() > 1) {
                out += "(";
                for (std::size_t i = 0; i < let.ids.size(); ++i) {
                  if (i) out += ", ";
                  out += let.ids[i];
                }
                out += ")";
              } else {
                out += let.ids[0];
              }
              out += " = " + nodeStr(let.value, indent + 1) + "\n";
            }
            out += ind(indent + 1);
            if (m.accs.size() == 1) {
              out += accSpecStr(m.accs[0], indent + 1);
            } else {
              out += "(";
              for (std::size_t i = 0; i < m.accs.size(); ++i) {
                if (i) out += ",\n" + ind(indent + 2);
                out += accSpecStr(m.accs[i], indent + 2);
              }
              out += ")";
            }
            out += "\n" + ind(indent) + "}";
            for (const auto& a : m.accs) out += combineStr(a.combine);
            return out;
          },
          [&](const FlatMapNode& f) {
            std::string out = "flatMap(" + shapeList(f.domain) + "){ " +
                              binderList(f.binders) + " =>\n";
            out += blockBody(f.body, indent + 1);
            out += ind(indent) + "}";
            return out;
          },
          [&](const GroupByFoldNode& g) {
            std::string out = "groupByFold(" + shapeList(g.domain) + ")(" +
                              exprStr(g.init, 0) + "){ " + binderList(g.binders) + " =>\n";
            for (const auto& let : g.lets)
              out += ind(indent + 1) + let.ids[0] + " = " + nodeStr(let.value, indent + 1) +
                     "\n";
            if (g.leaf) {
              out += ind(indent + 1) + "(" + exprStr(g.leaf->key, 0) + ", " +
                     g.leaf->valBinder + " => " + updateBody(g.leaf->update, indent + 1) +
                     ")\n";
            } else if (g.merge) {
              out += ind(indent + 1) + nodeStr(*g.merge, indent + 1) + "\n";
            }
            out += ind(indent) + "}" + combineStr(std::optional<Combine>(g.combine));
            return out;
          },
          [&](const ArrayCopyNode& a) {
            std::string out = a.source + ".copy(";
            for (std::size_t i = 0; i < a.dims.size(); ++i) {
              if (i) out += ", ";
              out += exprStr(a.dims[i].offset, 0) + " : " + sizeStr(a.dims[i].extent);
            }
            out += ")";
            if (a.reuse) out += " reuse(" + std::to_string(*a.reuse) + ")";
            return out;
          },
          [&](const SliceNode& s) {
            std::string out = s.source + ".slice(";
            for (std::size_t i = 0; i < s.dims.size(); ++i) {
              if (i) out += ", ";
              out += s.dims[i].fixed ? exprStr(*s.dims[i].fixed, 0) : std::string("*");
            }
            return out + ")";
          },
          [&](const ArrayRefNode& a) { return a.name; },
          [&](const ElemsNode& e) {
            std::string out = "[";
            for (std::size_t i = 0; i < e.elems.size(); ++i) {
              if (i) out += ", ";
              out += exprStr(e.elems[i], 0);
            }
            return out + "]";
          },
          [&](const IfNode& i) {
            return "if (" + exprStr(i.cond, 0) + ") " + nodeStr(i.thenN, indent) + " else " +
                   nodeStr(i.elseN, indent);
          },
      },
      p.get().v);
}

std::string nodeStr(const Node& n, int indent) {
  if (n.isExpr()) return exprStr(n.expr(), 0);
  return patternStr(n.pattern(), indent);
}

}  // namespace

std::string pretty(const Expr& e) { return exprStr(e, 0); }

std::string pretty(const Pattern& p, int indent) { return patternStr(p, indent); }

std::string pretty(const Node& n, int indent) { return nodeStr(n, indent); }

std::string pretty(const Program& p) {
  std::ostringstream os;
  for (const auto& in : p.inputs) {
    os << "input " << in.id << " : " << in.type.str() << "[" << shapeList(in.shape) << "] "
       << (in.sizeClass == SizeClass::Static ? "static" : "dynamic") << "\n";
  }
  if (!p.inputs.empty()) os << "\n";
  for (const auto& b : p.bindings) {
    if (b.ids.size() > 1) {
      os << "(";
      for (std::size_t i = 0; i < b.ids.size(); ++i) {
        if (i) os << ", ";
        os << b.ids[i];
      }
      os << ")";
    } else {
      os << b.ids[0];
    }
    os << " = " << nodeStr(b.value, 0) << "\n";
  }
  if (!p.outputs.empty()) {
    os << "\noutput ";
    for (std::size_t i = 0; i < p.outputs.size(); ++i) {
      if (i) os << ", ";
      os << p.outputs[i];
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace ppl
