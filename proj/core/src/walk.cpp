#include "pplforge/ir/walk.hpp"

#include <stdexcept>

namespace ppl {

// --------------------------------------------------------------------------
// free identifiers
// --------------------------------------------------------------------------

namespace {

struct FreeCtx {
  std::set<std::string> bound;
  std::set<std::string> free;

  void ref(const std::string& n) {
    if (!bound.count(n)) free.insert(n);
  }
};

void walkSize(const SizeExpr& s, FreeCtx& c) {
  if (s.op == SizeExpr::Op::Idx || s.op == SizeExpr::Op::Len) c.ref(s.name);
  for (const auto& a : s.args) walkSize(a, c);
}

void walkExpr(const Expr& e, FreeCtx& c);
void walkNode(const Node& n, FreeCtx& c);

void walkBlock(const Block& b, FreeCtx& c, const std::vector<std::string>& binders) {
  auto saved = c.bound;
  for (const auto& bn : binders) c.bound.insert(bn);
  for (const auto& let : b.lets) {
    walkNode(let.value, c);
    for (const auto& id : let.ids) c.bound.insert(id);
  }
  walkNode(b.result, c);
  c.bound = std::move(saved);
}

void walkExpr(const Expr& e, FreeCtx& c) {
  if (!e.valid()) return;
  std::visit(overloaded{
                 [&](const ConstE&) {},
                 [&](const IndexRefE& x) { c.ref(x.name); },
                 [&](const VarRefE& x) { c.ref(x.name); },
                 [&](const ArrayReadE& x) {
                   c.ref(x.array);
                   for (const auto& i : x.indices) walkExpr(i, c);
                 },
                 [&](const BinOpE& x) {
                   walkExpr(x.lhs, c);
                   walkExpr(x.rhs, c);
                 },
                 [&](const IfE& x) {
                   walkExpr(x.cond, c);
                   walkExpr(x.thenE, c);
                   walkExpr(x.elseE, c);
                 },
                 [&](const TupleMakeE& x) {
                   for (const auto& i : x.elems) walkExpr(i, c);
                 },
                 [&](const TupleProjE& x) { walkExpr(x.tuple, c); },
                 [&](const LetE& x) {
                   walkExpr(x.bound, c);
                   auto saved = c.bound;
                   c.bound.insert(x.id);
                   walkExpr(x.body, c);
                   c.bound = std::move(saved);
                 },
             },
             e.get().v);
}

void walkCombine(const Combine& cb, FreeCtx& c) {
  auto saved = c.bound;
  c.bound.insert(cb.lhs);
  c.bound.insert(cb.rhs);
  walkExpr(cb.body, c);
  c.bound = std::move(saved);
}

void walkPattern(const Pattern& p, FreeCtx& c) {
  std::visit(
      overloaded{
          [&](const MapNode& m) {
            for (const auto& d : m.domain) walkSize(d, c);
            walkBlock(m.body, c, m.binders);
          },
          [&](const MultiFoldNode& m) {
            for (const auto& d : m.domain) walkSize(d, c);
            for (const auto& a : m.accs) {
              for (const auto& r : a.range) walkSize(r, c);
              walkNode(a.init, c);
              if (a.combine) walkCombine(*a.combine, c);
            }
            auto saved = c.bound;
            for (const auto& b : m.binders) c.bound.insert(b);
            for (const auto& let : m.lets) {
              walkNode(let.value, c);
              for (const auto& id : let.ids) c.bound.insert(id);
            }
            for (const auto& a : m.accs) {
              for (const auto& l : a.loc) walkExpr(l, c);
              for (const auto& s : a.sliceShape) walkSize(s, c);
              walkBlock(a.update, c, {a.sliceBinder});
            }
            c.bound = std::move(saved);
          },
          [&](const FlatMapNode& f) {
            for (const auto& d : f.domain) walkSize(d, c);
            walkBlock(f.body, c, f.binders);
          },
          [&](const GroupByFoldNode& g) {
            for (const auto& d : g.domain) walkSize(d, c);
            walkExpr(g.init, c);
            walkCombine(g.combine, c);
            auto saved = c.bound;
            for (const auto& b : g.binders) c.bound.insert(b);
            for (const auto& let : g.lets) {
              walkNode(let.value, c);
              for (const auto& id : let.ids) c.bound.insert(id);
            }
            if (g.leaf) {
              walkExpr(g.leaf->key, c);
              walkBlock(g.leaf->update, c, {g.leaf->valBinder});
            }
            if (g.merge) walkNode(*g.merge, c);
            c.bound = std::move(saved);
          },
          [&](const ArrayCopyNode& a) {
            c.ref(a.source);
            for (const auto& d : a.dims) {
              walkExpr(d.offset, c);
              walkSize(d.extent, c);
            }
          },
          [&](const SliceNode& s) {
            c.ref(s.source);
            for (const auto& d : s.dims)
              if (d.fixed) walkExpr(*d.fixed, c);
          },
          [&](const ArrayRefNode& a) { c.ref(a.name); },
          [&](const ElemsNode& e) {
            for (const auto& x : e.elems) walkExpr(x, c);
          },
          [&](const IfNode& i) {
            walkExpr(i.cond, c);
            walkNode(i.thenN, c);
            walkNode(i.elseN, c);
          },
      },
      p.get().v);
}

void walkNode(const Node& n, FreeCtx& c) {
  if (n.isExpr()) walkExpr(n.expr(), c);
  else walkPattern(n.pattern(), c);
}

}  // namespace

std::set<std::string> freeIds(const Node& n) {
  FreeCtx c;
  walkNode(n, c);
  return c.free;
}
std::set<std::string> freeIds(const Expr& e) {
  FreeCtx c;
  walkExpr(e, c);
  return c.free;
}
std::set<std::string> freeIds(const Pattern& p) {
  FreeCtx c;
  walkPattern(p, c);
  return c.free;
}

// --------------------------------------------------------------------------
// substitution
// --------------------------------------------------------------------------

namespace {

std::optional<SizeExpr> exprToSize(const Expr& e) {
  using R = std::optional<SizeExpr>;
  return std::visit(
      overloaded{
          [&](const ConstE& k) -> R {
            if (k.type.kind != ScalarType::Kind::Int) return std::nullopt;
            return SizeExpr::Lit(k.v.asInt());
          },
          [&](const IndexRefE& x) -> R { return SizeExpr::Idx(x.name); },
          [&](const VarRefE& x) -> R { return SizeExpr::Idx(x.name); },
          [&](const BinOpE& b) -> R {
            auto l = exprToSize(b.lhs), r = exprToSize(b.rhs);
            if (!l || !r) return std::nullopt;
            switch (b.op) {
              case BinOpKind::Add: return SizeExpr::Add(*l, *r);
              case BinOpKind::Sub: return SizeExpr::Sub(*l, *r);
              case BinOpKind::Mul: return SizeExpr::Mul(*l, *r);
              case BinOpKind::Min: return SizeExpr::Min(*l, *r);
              default: return std::nullopt;
            }
          },
          [&](const auto&) -> R { return std::nullopt; },
      },
      e.get().v);
}

struct Subst {
  const std::map<std::string, Expr>& sub;

  Expr expr(const Expr& e) {
    if (!e.valid()) return e;
    return std::visit(
        overloaded{
            [&](const ConstE&) { return e; },
            [&](const IndexRefE& x) {
              auto it = sub.find(x.name);
              return it == sub.end() ? e : it->second;
            },
            [&](const VarRefE& x) {
              auto it = sub.find(x.name);
              return it == sub.end() ? e : it->second;
            },
            [&](const ArrayReadE& x) {
              std::vector<Expr> idx;
              idx.reserve(x.indices.size());
              for (const auto& i : x.indices) idx.push_back(expr(i));
              return arrayRead(x.array, std::move(idx), x.nonAffine);
            },
            [&](const BinOpE& x) { return binOp(x.op, expr(x.lhs), expr(x.rhs)); },
            [&](const IfE& x) {
              return ifExpr(expr(x.cond), expr(x.thenE), expr(x.elseE));
            },
            [&](const TupleMakeE& x) {
              std::vector<Expr> es;
              for (const auto& i : x.elems) es.push_back(expr(i));
              return tupleMake(std::move(es));
            },
            [&](const TupleProjE& x) { return tupleProj(expr(x.tuple), x.index); },
            [&](const LetE& x) { return letExpr(x.id, expr(x.bound), expr(x.body)); },
        },
        e.get().v);
  }

  SizeExpr size(const SizeExpr& s) {
    if (s.op == SizeExpr::Op::Idx) {
      auto it = sub.find(s.name);
      if (it != sub.end()) {
        auto conv = exprToSize(it->second);
        if (!conv)
          throw std::runtime_error("cannot substitute non-affine expression into extent of " + s.name);
        return *conv;
      }
      return s;
    }
    SizeExpr r = s;
    for (auto& a : r.args) a = size(a);
    return r;
  }

  Shape shape(const Shape& sh) {
    Shape r;
    r.reserve(sh.size());
    for (const auto& s : sh) r.push_back(normalizeSize(size(s)));
    return r;
  }

  Block block(const Block& b) {
    Block r;
    for (const auto& let : b.lets) r.lets.push_back({let.ids, node(let.value)});
    r.result = node(b.result);
    return r;
  }

  Combine combine(const Combine& c) { return {c.lhs, c.rhs, expr(c.body)}; }

  Pattern pattern(const Pattern& p) {
    PatternNode out;
    out.strided = p.get().strided;
    out.v = std::visit(
        overloaded{
            [&](const MapNode& m) -> decltype(out.v) {
              return MapNode{shape(m.domain), m.binders, block(m.body)};
            },
            [&](const MultiFoldNode& m) -> decltype(out.v) {
              MultiFoldNode r;
              r.domain = shape(m.domain);
              r.binders = m.binders;
              for (const auto& let : m.lets) r.lets.push_back({let.ids, node(let.value)});
              for (const auto& a : m.accs) {
                Accumulator na;
                na.range = shape(a.range);
                na.init = node(a.init);
                if (a.combine) na.combine = combine(*a.combine);
                for (const auto& l : a.loc) na.loc.push_back(expr(l));
                na.sliceShape = shape(a.sliceShape);
                na.sliceBinder = a.sliceBinder;
                na.update = block(a.update);
                r.accs.push_back(std::move(na));
              }
              return r;
            },
            [&](const FlatMapNode& f) -> decltype(out.v) {
              return FlatMapNode{shape(f.domain), f.binders, block(f.body)};
            },
            [&](const GroupByFoldNode& g) -> decltype(out.v) {
              GroupByFoldNode r;
              r.domain = shape(g.domain);
              r.binders = g.binders;
              r.init = expr(g.init);
              r.combine = combine(g.combine);
              for (const auto& let : g.lets) r.lets.push_back({let.ids, node(let.value)});
              if (g.leaf)
                r.leaf = GroupByLeaf{expr(g.leaf->key), g.leaf->valBinder, block(g.leaf->update)};
              if (g.merge) r.merge = node(*g.merge);
              return r;
            },
            [&](const ArrayCopyNode& a) -> decltype(out.v) {
              ArrayCopyNode r;
              r.source = a.source;
              r.reuse = a.reuse;
              for (const auto& d : a.dims)
                r.dims.push_back({expr(d.offset), normalizeSize(size(d.extent))});
              return r;
            },
            [&](const SliceNode& s) -> decltype(out.v) {
              SliceNode r;
              r.source = s.source;
              for (const auto& d : s.dims) {
                SliceDim nd;
                if (d.fixed) nd.fixed = expr(*d.fixed);
                r.dims.push_back(std::move(nd));
              }
              return r;
            },
            [&](const ArrayRefNode& a) -> decltype(out.v) { return a; },
            [&](const ElemsNode& e) -> decltype(out.v) {
              ElemsNode r;
              for (const auto& x : e.elems) r.elems.push_back(expr(x));
              return r;
            },
            [&](const IfNode& i) -> decltype(out.v) {
              return IfNode{expr(i.cond), node(i.thenN), node(i.elseN)};
            },
        },
        p.get().v);
    return makePattern(std::move(out));
  }

  Node node(const Node& n) {
    if (n.isExpr()) return Node(expr(n.expr()));
    return Node(pattern(n.pattern()));
  }
};

}  // namespace

Expr substExpr(const Expr& e, const std::map<std::string, Expr>& sub) {
  Subst s{sub};
  return s.expr(e);
}
Node substNode(const Node& n, const std::map<std::string, Expr>& sub) {
  Subst s{sub};
  return s.node(n);
}
Block substBlock(const Block& b, const std::map<std::string, Expr>& sub) {
  Subst s{sub};
  return s.block(b);
}
SizeExpr substSize(const SizeExpr& sz, const std::map<std::string, Expr>& sub) {
  Subst s{sub};
  return normalizeSize(s.size(sz));
}

// --------------------------------------------------------------------------
// array renaming / binder refreshing
// --------------------------------------------------------------------------

namespace {

// Renames identifier *references* by name: scalar refs, index refs, array
// sources, and extent references alike. Used both for array renaming and as
// the engine of refreshBinders (where binder definitions are renamed too).
struct Renamer {
  std::map<std::string, std::string> ren;

  std::string look(const std::string& n) const {
    auto it = ren.find(n);
    return it == ren.end() ? n : it->second;
  }

  Expr exprImpl(const Expr& e) {
    if (!e.valid()) return e;
    return std::visit(
        overloaded{
            [&](const ConstE&) { return e; },
            [&](const IndexRefE& x) { return indexRef(look(x.name)); },
            [&](const VarRefE& x) { return varRef(look(x.name)); },
            [&](const ArrayReadE& x) {
              std::vector<Expr> idx;
              for (const auto& i : x.indices) idx.push_back(exprImpl(i));
              return arrayRead(look(x.array), std::move(idx), x.nonAffine);
            },
            [&](const BinOpE& x) { return binOp(x.op, exprImpl(x.lhs), exprImpl(x.rhs)); },
            [&](const IfE& x) {
              return ifExpr(exprImpl(x.cond), exprImpl(x.thenE), exprImpl(x.elseE));
            },
            [&](const TupleMakeE& x) {
              std::vector<Expr> es;
              for (const auto& i : x.elems) es.push_back(exprImpl(i));
              return tupleMake(std::move(es));
            },
            [&](const TupleProjE& x) { return tupleProj(exprImpl(x.tuple), x.index); },
            [&](const LetE& x) {
              return letExpr(look(x.id), exprImpl(x.bound), exprImpl(x.body));
            },
        },
        e.get().v);
  }

  SizeExpr size(const SizeExpr& s) {
    SizeExpr r = s;
    if (s.op == SizeExpr::Op::Idx || s.op == SizeExpr::Op::Len) r.name = look(s.name);
    for (auto& a : r.args) a = size(a);
    return r;
  }

  Shape shape(const Shape& sh) {
    Shape r;
    for (const auto& s : sh) r.push_back(size(s));
    return r;
  }

  Block block(const Block& b) {
    Block r;
    for (const auto& let : b.lets) {
      std::vector<std::string> ids;
      for (const auto& id : let.ids) ids.push_back(look(id));
      r.lets.push_back({std::move(ids), node(let.value)});
    }
    r.result = node(b.result);
    return r;
  }

  Pattern pattern(const Pattern& p) {
    PatternNode out;
    out.strided = p.get().strided;
    out.v = std::visit(
        overloaded{
            [&](const MapNode& m) -> decltype(out.v) {
              std::vector<std::string> bs;
              for (const auto& b : m.binders) bs.push_back(look(b));
              return MapNode{shape(m.domain), std::move(bs), block(m.body)};
            },
            [&](const MultiFoldNode& m) -> decltype(out.v) {
              MultiFoldNode r;
              r.domain = shape(m.domain);
              for (const auto& b : m.binders) r.binders.push_back(look(b));
              for (const auto& let : m.lets) {
                std::vector<std::string> ids;
                for (const auto& id : let.ids) ids.push_back(look(id));
                r.lets.push_back({std::move(ids), node(let.value)});
              }
              for (const auto& a : m.accs) {
                Accumulator na;
                na.range = shape(a.range);
                na.init = node(a.init);
                if (a.combine)
                  na.combine = Combine{look(a.combine->lhs), look(a.combine->rhs),
                                       exprImpl(a.combine->body)};
                for (const auto& l : a.loc) na.loc.push_back(exprImpl(l));
                na.sliceShape = shape(a.sliceShape);
                na.sliceBinder = look(a.sliceBinder);
                na.update = block(a.update);
                r.accs.push_back(std::move(na));
              }
              return r;
            },
            [&](const FlatMapNode& f) -> decltype(out.v) {
              std::vector<std::string> bs;
              for (const auto& b : f.binders) bs.push_back(look(b));
              return FlatMapNode{shape(f.domain), std::move(bs), block(f.body)};
            },
            [&](const GroupByFoldNode& g) -> decltype(out.v) {
              GroupByFoldNode r;
              r.domain = shape(g.domain);
              for (const auto& b : g.binders) r.binders.push_back(look(b));
              r.init = exprImpl(g.init);
              r.combine = Combine{look(g.combine.lhs), look(g.combine.rhs),
                                  exprImpl(g.combine.body)};
              for (const auto& let : g.lets) {
                std::vector<std::string> ids;
                for (const auto& id : let.ids) ids.push_back(look(id));
                r.lets.push_back({std::move(ids), node(let.value)});
              }
              if (g.leaf)
                r.leaf = GroupByLeaf{exprImpl(g.leaf->key), look(g.leaf->valBinder),
                                     block(g.leaf->update)};
              if (g.merge) r.merge = node(*g.merge);
              return r;
            },
            [&](const ArrayCopyNode& a) -> decltype(out.v) {
              ArrayCopyNode r;
              r.source = look(a.source);
              r.reuse = a.reuse;
              for (const auto& d : a.dims) r.dims.push_back({exprImpl(d.offset), size(d.extent)});
              return r;
            },
            [&](const SliceNode& s) -> decltype(out.v) {
              SliceNode r;
              r.source = look(s.source);
              for (const auto& d : s.dims) {
                SliceDim nd;
                if (d.fixed) nd.fixed = exprImpl(*d.fixed);
                r.dims.push_back(std::move(nd));
              }
              return r;
            },
            [&](const ArrayRefNode& a) -> decltype(out.v) { return ArrayRefNode{look(a.name)}; },
            [&](const ElemsNode& e) -> decltype(out.v) {
              ElemsNode r;
              for (const auto& x : e.elems) r.elems.push_back(exprImpl(x));
              return r;
            },
            [&](const IfNode& i) -> decltype(out.v) {
              return IfNode{exprImpl(i.cond), node(i.thenN), node(i.elseN)};
            },
        },
        p.get().v);
    return makePattern(std::move(out));
  }

  Node node(const Node& n) {
    if (n.isExpr()) return Node(exprImpl(n.expr()));
    return Node(pattern(n.pattern()));
  }
};

void collectBoundIds(const Node& n, std::set<std::string>& out);

void collectBoundIdsBlock(const Block& b, std::set<std::string>& out) {
  for (const auto& let : b.lets) {
    for (const auto& id : let.ids) out.insert(id);
    collectBoundIds(let.value, out);
  }
  collectBoundIds(b.result, out);
}

void collectBoundIdsExpr(const Expr& e, std::set<std::string>& out) {
  if (!e.valid()) return;
  std::visit(overloaded{
                 [&](const LetE& x) {
                   out.insert(x.id);
                   collectBoundIdsExpr(x.bound, out);
                   collectBoundIdsExpr(x.body, out);
                 },
                 [&](const ArrayReadE& x) {
                   for (const auto& i : x.indices) collectBoundIdsExpr(i, out);
                 },
                 [&](const BinOpE& x) {
                   collectBoundIdsExpr(x.lhs, out);
                   collectBoundIdsExpr(x.rhs, out);
                 },
                 [&](const IfE& x) {
                   collectBoundIdsExpr(x.cond, out);
                   collectBoundIdsExpr(x.thenE, out);
                   collectBoundIdsExpr(x.elseE, out);
                 },
                 [&](const TupleMakeE& x) {
                   for (const auto& i : x.elems) collectBoundIdsExpr(i, out);
                 },
                 [&](const TupleProjE& x) { collectBoundIdsExpr(x.tuple, out); },
                 [&](const auto&) {},
             },
             e.get().v);
}

void collectBoundIds(const Node& n, std::set<std::string>& out) {
  if (n.isExpr()) {
    collectBoundIdsExpr(n.expr(), out);
    return;
  }
  std::visit(
      overloaded{
          [&](const MapNode& m) {
            for (const auto& b : m.binders) out.insert(b);
            collectBoundIdsBlock(m.body, out);
          },
          [&](const MultiFoldNode& m) {
            for (const auto& b : m.binders) out.insert(b);
            for (const auto& let : m.lets) {
              for (const auto& id : let.ids) out.insert(id);
              collectBoundIds(let.value, out);
            }
            for (const auto& a : m.accs) {
              collectBoundIds(a.init, out);
              if (a.combine) {
                out.insert(a.combine->lhs);
                out.insert(a.combine->rhs);
                collectBoundIdsExpr(a.combine->body, out);
              }
              for (const auto& l : a.loc) collectBoundIdsExpr(l, out);
              out.insert(a.sliceBinder);
              collectBoundIdsBlock(a.update, out);
            }
          },
          [&](const FlatMapNode& f) {
            for (const auto& b : f.binders) out.insert(b);
            collectBoundIdsBlock(f.body, out);
          },
          [&](const GroupByFoldNode& g) {
            for (const auto& b : g.binders) out.insert(b);
            collectBoundIdsExpr(g.init, out);
            out.insert(g.combine.lhs);
            out.insert(g.combine.rhs);
            collectBoundIdsExpr(g.combine.body, out);
            for (const auto& let : g.lets) {
              for (const auto& id : let.ids) out.insert(id);
              collectBoundIds(let.value, out);
            }
            if (g.leaf) {
              collectBoundIdsExpr(g.leaf->key, out);
              out.insert(g.leaf->valBinder);
              collectBoundIdsBlock(g.leaf->update, out);
            }
            if (g.merge) collectBoundIds(*g.merge, out);
          },
          [&](const ArrayCopyNode& a) {
            for (const auto& d : a.dims) collectBoundIdsExpr(d.offset, out);
          },
          [&](const SliceNode& s) {
            for (const auto& d : s.dims)
              if (d.fixed) collectBoundIdsExpr(*d.fixed, out);
          },
          [&](const ArrayRefNode&) {},
          [&](const ElemsNode& e) {
            for (const auto& x : e.elems) collectBoundIdsExpr(x, out);
          },
          [&](const IfNode& i) {
            collectBoundIdsExpr(i.cond, out);
            collectBoundIds(i.thenN, out);
            collectBoundIds(i.elseN, out);
          },
      },
      n.pattern().get().v);
}

}  // namespace

Node renameArrays(const Node& n, const std::map<std::string, std::string>& ren) {
  Renamer r;
  r.ren = ren;
  return r.node(n);
}

std::string NameGen::fresh(const std::string& base) {
  if (!used_.count(base)) {
    used_.insert(base);
    return base;
  }
  for (int i = 2;; ++i) {
    std::string cand = base + "_" + std::to_string(i);
    if (!used_.count(cand)) {
      used_.insert(cand);
      return cand;
    }
  }
}

std::set<std::string> allBoundIds(const Program& p) {
  std::set<std::string> out;
  for (const auto& in : p.inputs) out.insert(in.id);
  for (const auto& b : p.bindings) {
    for (const auto& id : b.ids) out.insert(id);
    collectBoundIds(b.value, out);
  }
  return out;
}

Node refreshBinders(const Node& n, NameGen& gen) {
  std::set<std::string> bound;
  collectBoundIds(n, bound);
  Renamer r;
  for (const auto& id : bound) r.ren[id] = gen.fresh(id);
  return r.node(n);
}

namespace {

void forEachPatternNode(const Node& n, const std::string& path,
                        const std::function<void(const Pattern&, const std::string&)>& fn);

void forEachPatternBlock(const Block& b, const std::string& path,
                         const std::function<void(const Pattern&, const std::string&)>& fn) {
  for (std::size_t i = 0; i < b.lets.size(); ++i)
    forEachPatternNode(b.lets[i].value, path + "." + b.lets[i].ids[0], fn);
  forEachPatternNode(b.result, path + ".result", fn);
}

void forEachPatternNode(const Node& n, const std::string& path,
                        const std::function<void(const Pattern&, const std::string&)>& fn) {
  if (n.isExpr()) return;
  const Pattern& p = n.pattern();
  fn(p, path);
  std::visit(overloaded{
                 [&](const MapNode& m) { forEachPatternBlock(m.body, path, fn); },
                 [&](const MultiFoldNode& m) {
                   for (const auto& let : m.lets)
                     forEachPatternNode(let.value, path + "." + let.ids[0], fn);
                   for (std::size_t i = 0; i < m.accs.size(); ++i) {
                     forEachPatternNode(m.accs[i].init, path + ".init" + std::to_string(i), fn);
                     forEachPatternBlock(m.accs[i].update, path + ".upd" + std::to_string(i), fn);
                   }
                 },
                 [&](const FlatMapNode& f) { forEachPatternBlock(f.body, path, fn); },
                 [&](const GroupByFoldNode& g) {
                   for (const auto& let : g.lets)
                     forEachPatternNode(let.value, path + "." + let.ids[0], fn);
                   if (g.leaf) forEachPatternBlock(g.leaf->update, path + ".upd", fn);
                   if (g.merge) forEachPatternNode(*g.merge, path + ".merge", fn);
                 },
                 [&](const IfNode& i) {
                   forEachPatternNode(i.thenN, path + ".then", fn);
                   forEachPatternNode(i.elseN, path + ".else", fn);
                 },
                 [&](const auto&) {},
             },
             p.get().v);
}

}  // namespace

void forEachPattern(const Program& p,
                    const std::function<void(const Pattern&, const std::string&)>& fn) {
  for (const auto& b : p.bindings) forEachPatternNode(b.value, b.ids[0], fn);
}

}  // namespace ppl
