#include "pplforge/ir/structural.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "pplforge/ir/walk.hpp"

namespace ppl {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct Canon {
  std::map<std::string, std::string> ren;
  int binders = 0;
  int lets = 0;

  std::string render(const std::string& n) const {
    auto it = ren.find(n);
    return it == ren.end() ? n : it->second;
  }

  std::string bindBinder(const std::string& n) {
    std::string c = "b" + std::to_string(binders++);
    ren[n] = c;
    return c;
  }

  std::string bindLet(const std::string& n) {
    std::string c = "v" + std::to_string(lets++);
    ren[n] = c;
    return c;
  }

  std::string expr(const Expr& e) const {
    if (!e.valid()) return "<nil>";
    return std::visit(
        overloaded{
            [&](const ConstE& c) {
              std::string out = "#" + c.type.str() + ":";
              for (std::size_t i = 0; i < c.v.lanes.size(); ++i) {
                if (i) out += ",";
                std::visit(
                    [&](auto x) {
                      using T = std::decay_t<decltype(x)>;
                      if constexpr (std::is_same_v<T, double>) {
                        char buf[40];
                        std::snprintf(buf, sizeof buf, "%.17g", x);
                        out += buf;
                      } else if constexpr (std::is_same_v<T, bool>) {
                        out += x ? "T" : "F";
                      } else {
                        out += std::to_string(x);
                      }
                    },
                    c.v.lanes[i]);
              }
              return out;
            },
            [&](const IndexRefE& x) { return render(x.name); },
            [&](const VarRefE& x) { return render(x.name); },
            [&](const ArrayReadE& x) {
              std::string out = "(rd " + render(x.array);
              for (const auto& i : x.indices) out += " " + expr(i);
              if (x.nonAffine) out += " !na";
              return out + ")";
            },
            [&](const BinOpE& x) {
              return "(" + std::string(binOpName(x.op)) + " " + expr(x.lhs) + " " +
                     expr(x.rhs) + ")";
            },
            [&](const IfE& x) {
              return "(if " + expr(x.cond) + " " + expr(x.thenE) + " " + expr(x.elseE) + ")";
            },
            [&](const TupleMakeE& x) {
              std::string out = "(tup";
              for (const auto& i : x.elems) out += " " + expr(i);
              return out + ")";
            },
            [&](const TupleProjE& x) {
              return "(prj" + std::to_string(x.index) + " " + expr(x.tuple) + ")";
            },
            [&](const LetE& x) {
              Canon c2 = *this;
              std::string bound = expr(x.bound);
              std::string nm = c2.bindLet(x.id);
              return "(let " + nm + " " + bound + " " + c2.expr(x.body) + ")";
            },
        },
        e.get().v);
  }

  std::string size(const SizeExpr& s) const {
    SizeExpr n = normalizeSize(s);
    switch (n.op) {
      case SizeExpr::Op::Lit: return std::to_string(n.lit);
      case SizeExpr::Op::Sym: return n.name;
      case SizeExpr::Op::Idx: return render(n.name);
      case SizeExpr::Op::Len: return "(len " + render(n.name) + ")";
      case SizeExpr::Op::Add: return "(s+ " + size(n.args[0]) + " " + size(n.args[1]) + ")";
      case SizeExpr::Op::Sub: return "(s- " + size(n.args[0]) + " " + size(n.args[1]) + ")";
      case SizeExpr::Op::Mul: return "(s* " + size(n.args[0]) + " " + size(n.args[1]) + ")";
      case SizeExpr::Op::CeilDiv:
        return "(s/ " + size(n.args[0]) + " " + size(n.args[1]) + ")";
      case SizeExpr::Op::Min:
        return "(smin " + size(n.args[0]) + " " + size(n.args[1]) + ")";
    }
    return "?";
  }

  std::string shape(const Shape& sh) const {
    std::string out = "[";
    for (std::size_t i = 0; i < sh.size(); ++i) {
      if (i) out += " ";
      out += size(sh[i]);
    }
    return out + "]";
  }

  std::string node(const Node& n) const {
    return n.isExpr() ? expr(n.expr()) : pattern(n.pattern());
  }

  // Canonical ordering of block-local lets: sort by (dependency level,
  // refined color); colors are iterated so chains of references settle.
  std::vector<std::size_t> orderLets(const std::vector<Binding>& lets) const {
    const std::size_t n = lets.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (n < 2) return order;

    std::map<std::string, std::size_t> owner;
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& id : lets[i].ids) owner[id] = i;

    std::vector<std::set<std::size_t>> dep(n);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& fid : freeIds(lets[i].value)) {
        auto it = owner.find(fid);
        if (it != owner.end() && it->second != i) dep[i].insert(it->second);
      }

    std::vector<int> level(n, 0);
    for (std::size_t i = 0; i < n; ++i)  // lets come in definition order: deps precede
      for (auto d : dep[i]) level[i] = std::max(level[i], level[d] + 1);

    std::vector<std::uint64_t> color(n, 0);
    for (int round = 0; round < 3; ++round) {
      std::vector<std::uint64_t> next(n);
      for (std::size_t i = 0; i < n; ++i) {
        Canon c2 = *this;
        for (const auto& [id, own] : owner)
          c2.ren[id] = "L" + std::to_string(color[own]);
        next[i] = fnv1a(c2.node(lets[i].value));
      }
      color = std::move(next);
    }

    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (level[a] != level[b]) return level[a] < level[b];
      return color[a] < color[b];
    });
    return order;
  }

  static std::string emitLets(Canon& c, const std::vector<Binding>& lets) {
    std::string out;
    auto order = c.orderLets(lets);
    for (auto i : order) {
      std::string val = c.node(lets[i].value);
      out += "(= (";
      for (std::size_t k = 0; k < lets[i].ids.size(); ++k) {
        if (k) out += " ";
        out += c.bindLet(lets[i].ids[k]);
      }
      out += ") " + val + ")";
    }
    return out;
  }

  std::string block(const Block& b, const std::vector<std::string>& binders) const {
    Canon c = *this;
    std::string out = "(blk (";
    for (std::size_t i = 0; i < binders.size(); ++i) {
      if (i) out += " ";
      out += c.bindBinder(binders[i]);
    }
    out += ")";
    out += emitLets(c, b.lets);
    out += " " + c.node(b.result) + ")";
    return out;
  }

  std::string combine(const Combine& cb) const {
    Canon c = *this;
    std::string l = c.bindBinder(cb.lhs), r = c.bindBinder(cb.rhs);
    return "(comb " + l + " " + r + " " + c.expr(cb.body) + ")";
  }

  std::string pattern(const Pattern& p) const {
    const PatternNode& pn = p.get();
    std::string tag = pn.strided ? "!s" : "";
    return std::visit(
        overloaded{
            [&](const MapNode& m) {
              return "(map" + tag + " " + shape(m.domain) + " " + block(m.body, m.binders) + ")";
            },
            [&](const MultiFoldNode& m) {
              std::string out = "(mfold" + tag + " " + shape(m.domain);
              for (const auto& a : m.accs) {
                out += " {r=" + shape(a.range) + " z=" + node(a.init);
                out += a.combine ? " c=" + combine(*a.combine) : " c=_";
                out += "}";
              }
              Canon c = *this;
              out += " (";
              for (std::size_t i = 0; i < m.binders.size(); ++i) {
                if (i) out += " ";
                out += c.bindBinder(m.binders[i]);
              }
              out += ")";
              out += emitLets(c, m.lets);
              for (const auto& a : m.accs) {
                out += " (upd (";
                for (std::size_t i = 0; i < a.loc.size(); ++i) {
                  if (i) out += " ";
                  out += c.expr(a.loc[i]);
                }
                out += ") " + c.shape(a.sliceShape) + " ";
                Canon c2 = c;
                std::string sb = c2.bindBinder(a.sliceBinder);
                out += sb + " ";
                out += c2.block(a.update, {});
                out += ")";
              }
              return out + ")";
            },
            [&](const FlatMapNode& f) {
              return "(fmap" + tag + " " + shape(f.domain) + " " + block(f.body, f.binders) + ")";
            },
            [&](const GroupByFoldNode& g) {
              std::string out = "(gbf" + tag + " " + shape(g.domain) + " z=" + expr(g.init) +
                                " c=" + combine(g.combine);
              Canon c = *this;
              out += " (";
              for (std::size_t i = 0; i < g.binders.size(); ++i) {
                if (i) out += " ";
                out += c.bindBinder(g.binders[i]);
              }
              out += ")";
              out += emitLets(c, g.lets);
              if (g.leaf) {
                out += " (leaf " + c.expr(g.leaf->key) + " ";
                Canon c2 = c;
                std::string vb = c2.bindBinder(g.leaf->valBinder);
                out += vb + " " + c2.block(g.leaf->update, {}) + ")";
              }
              if (g.merge) out += " (merge " + c.node(*g.merge) + ")";
              return out + ")";
            },
            [&](const ArrayCopyNode& a) {
              std::string out = "(copy " + render(a.source);
              for (const auto& d : a.dims)
                out += " [" + expr(d.offset) + " : " + size(d.extent) + "]";
              if (a.reuse) out += " reuse=" + std::to_string(*a.reuse);
              return out + ")";
            },
            [&](const SliceNode& s) {
              std::string out = "(slice " + render(s.source);
              for (const auto& d : s.dims) out += d.fixed ? " " + expr(*d.fixed) : " *";
              return out + ")";
            },
            [&](const ArrayRefNode& a) { return "(ref " + render(a.name) + ")"; },
            [&](const ElemsNode& e) {
              std::string out = "(elems";
              for (const auto& x : e.elems) out += " " + expr(x);
              return out + ")";
            },
            [&](const IfNode& i) {
              return "(pif " + expr(i.cond) + " " + node(i.thenN) + " " + node(i.elseN) + ")";
            },
        },
        pn.v);
  }
};

}  // namespace

std::string canonicalText(const Node& n) {
  Canon c;
  return c.node(n);
}

std::string canonicalText(const Pattern& p) {
  Canon c;
  return c.pattern(p);
}

std::string canonicalText(const Program& p) {
  std::string out;
  for (const auto& in : p.inputs) {
    Canon c;
    out += "(in " + in.id + " " + c.shape(in.shape) + " " + in.type.str() +
           (in.sizeClass == SizeClass::Static ? " static" : " dynamic") + ")\n";
  }
  for (const auto& b : p.bindings) {
    Canon c;
    out += "(def (";
    for (std::size_t i = 0; i < b.ids.size(); ++i) {
      if (i) out += " ";
      out += b.ids[i];
    }
    out += ") " + c.node(b.value) + ")\n";
  }
  out += "(out";
  for (const auto& o : p.outputs) out += " " + o;
  out += ")\n";
  return out;
}

std::uint64_t structuralHash(const Node& n) { return fnv1a(canonicalText(n)); }
std::uint64_t structuralHash(const Pattern& p) { return fnv1a(canonicalText(p)); }

bool alphaEqual(const Node& a, const Node& b) { return canonicalText(a) == canonicalText(b); }
bool alphaEqual(const Pattern& a, const Pattern& b) {
  return canonicalText(a) == canonicalText(b);
}
bool alphaEqual(const Program& a, const Program& b) {
  return canonicalText(a) == canonicalText(b);
}

DepGraph deps(const Program& p) {
  DepGraph g;
  std::set<std::string> top;
  for (const auto& in : p.inputs) top.insert(in.id);
  for (const auto& b : p.bindings)
    for (const auto& id : b.ids) top.insert(id);
  for (const auto& b : p.bindings) {
    std::set<std::string> used;
    for (const auto& fid : freeIds(b.value))
      if (top.count(fid)) used.insert(fid);
    for (const auto& id : b.ids) {
      g.uses[id] = used;
      for (const auto& u : used) g.users[u].insert(id);
    }
  }
  return g;
}

}  // namespace ppl
