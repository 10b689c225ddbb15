#include <algorithm>

#include "pplforge/ir/validate.hpp"
#include "pplforge/ir/walk.hpp"
#include "pplforge/transform/passes.hpp"

namespace ppl {

namespace {

struct TiledDim {
  bool tiled = false;
  std::int64_t b = 0;
};

struct StripMiner {
  const TileConfig& cfg;
  NameGen gen;

  TiledDim dimOf(const SizeExpr& e) const {
    SizeExpr n = normalizeSize(e);
    if (n.op == SizeExpr::Op::Sym) {
      auto it = cfg.tiles.find(n.name);
      if (it != cfg.tiles.end()) return {true, it->second};
    }
    return {};
  }

  bool anyTiled(const Shape& domain) const {
    for (const auto& e : domain)
      if (dimOf(e).tiled) return true;
    return false;
  }

  Pattern zerosLike(const Shape& shape, const ScalarType& t) {
    std::vector<std::string> binders;
    for (std::size_t i = 0; i < shape.size(); ++i) binders.push_back(gen.fresh("zz"));
    Block body;
    body.result = Node(makeConst(zeroValue(t), t));
    return mapP(shape, binders, body);
  }

  Combine refreshCombine(const Combine& c) {
    std::string l = gen.fresh(c.lhs), r = gen.fresh(c.rhs);
    std::map<std::string, Expr> sub;
    sub[c.lhs] = varRef(l);
    sub[c.rhs] = varRef(r);
    return {l, r, substExpr(c.body, sub)};
  }

  // Per-dimension partition data for a tiled pattern.
  struct Partition {
    std::vector<std::string> outerBinders;  // tiled dims only
    Shape outerDomain;
    std::vector<std::string> innerBinders;  // all dims
    Shape innerDomain;
    std::map<std::string, Expr> subst;      // original binder -> global index
    std::vector<TiledDim> dims;
  };

  Partition partition(const Shape& domain, const std::vector<std::string>& binders) {
    Partition part;
    for (std::size_t d = 0; d < domain.size(); ++d) {
      TiledDim td = dimOf(domain[d]);
      part.dims.push_back(td);
      std::string inner = gen.fresh(binders[d]);
      part.innerBinders.push_back(inner);
      if (td.tiled) {
        std::string outer = gen.fresh(binders[d] + binders[d]);
        part.outerBinders.push_back(outer);
        part.outerDomain.push_back(SizeExpr::CeilDiv(domain[d], SizeExpr::Lit(td.b)));
        part.innerDomain.push_back(normalizeSize(SizeExpr::Min(
            SizeExpr::Lit(td.b),
            SizeExpr::Sub(domain[d], SizeExpr::Mul(SizeExpr::Lit(td.b), SizeExpr::Idx(outer))))));
        part.subst[binders[d]] =
            binOp(BinOpKind::Add, binOp(BinOpKind::Mul, constInt(td.b), indexRef(outer)),
                  indexRef(inner));
      } else {
        part.innerDomain.push_back(domain[d]);
        part.subst[binders[d]] = indexRef(inner);
      }
    }
    return part;
  }

  // ---- recursion over the tree -------------------------------------------

  Node node(const Node& n, const TypeScope& sc) {
    if (n.isExpr()) return n;
    return Node(pattern(n.pattern(), sc));
  }

  void bindLetInfos(TypeScope& sc, const Binding& let, const Node& value) {
    auto infos = inferNode(value, sc);
    for (std::size_t i = 0; i < let.ids.size() && i < infos.size(); ++i) {
      NodeInfo info = infos[i];
      if (info.isScalar()) sc.bindScalar(let.ids[i], info.type);
      else {
        if (info.dynamicLen && info.shape.size() == 1)
          info.shape = {SizeExpr::Len(let.ids[i])};
        sc.bindTensor(let.ids[i], info);
      }
    }
  }

  std::vector<Binding> lets(const std::vector<Binding>& ls, TypeScope& sc) {
    std::vector<Binding> out;
    for (const auto& let : ls) {
      Node v = node(let.value, sc);
      out.push_back({let.ids, v});
      bindLetInfos(sc, let, v);
    }
    return out;
  }

  Block block(const Block& b, TypeScope sc, const std::vector<std::string>& binders) {
    for (const auto& bn : binders) sc.bindIndex(bn);
    Block out;
    out.lets = lets(b.lets, sc);
    out.result = node(b.result, sc);
    return out;
  }

  Pattern pattern(const Pattern& p, const TypeScope& outer) {
    return std::visit(
        overloaded{
            [&](const MapNode& m) -> Pattern {
              if (!anyTiled(m.domain)) {
                Pattern r = mapP(m.domain, m.binders, block(m.body, outer, m.binders));
                return withStrided(r, p.get().strided);
              }
              return stripMap(m, outer);
            },
            [&](const MultiFoldNode& m) -> Pattern {
              if (!anyTiled(m.domain)) {
                MultiFoldNode r;
                r.domain = m.domain;
                r.binders = m.binders;
                TypeScope sc = outer;
                for (const auto& b : m.binders) sc.bindIndex(b);
                r.lets = lets(m.lets, sc);
                for (const auto& a : m.accs) {
                  Accumulator na = a;
                  na.update = rebuildUpdate(a, sc, outer);
                  r.accs.push_back(std::move(na));
                }
                Pattern rp = multiFoldP(r.domain, r.binders, r.lets, r.accs);
                return withStrided(rp, p.get().strided);
              }
              return stripMultiFold(m, outer);
            },
            [&](const FlatMapNode& f) -> Pattern {
              if (!anyTiled(f.domain)) {
                Pattern r = flatMapP(f.domain, f.binders, block(f.body, outer, f.binders));
                return withStrided(r, p.get().strided);
              }
              return stripFlatMap(f, outer);
            },
            [&](const GroupByFoldNode& g) -> Pattern {
              if (!anyTiled(g.domain)) {
                GroupByFoldNode r = g;
                TypeScope sc = outer;
                for (const auto& b : g.binders) sc.bindIndex(b);
                r.lets = lets(g.lets, sc);
                if (g.leaf) {
                  GroupByLeaf lf = *g.leaf;
                  TypeScope usc = sc;
                  usc.bindScalar(lf.valBinder, inferExpr(g.init, outer));
                  lf.update = block(g.leaf->update, usc, {});
                  r.leaf = std::move(lf);
                }
                if (g.merge) r.merge = node(*g.merge, sc);
                return withStrided(groupByFoldP(std::move(r)), p.get().strided);
              }
              return stripGroupByFold(g, outer);
            },
            [&](const IfNode& i) -> Pattern {
              return withStrided(ifP(i.cond, node(i.thenN, outer), node(i.elseN, outer)),
                                 p.get().strided);
            },
            [&](const auto&) -> Pattern { return p; },
        },
        p.get().v);
  }

  Block rebuildUpdate(const Accumulator& a, const TypeScope& indexScope,
                      const TypeScope& outer) {
    TypeScope upd = indexScope;
    NodeInfo zi = inferSingle(a.init, outer);
    Shape sq = squeezeShape(a.sliceShape);
    if (sq.empty()) {
      upd.bindScalar(a.sliceBinder, zi.type);
    } else {
      NodeInfo info;
      info.shape = sq;
      info.type = zi.type;
      upd.bindTensor(a.sliceBinder, info);
    }
    return block(a.update, upd, {});
  }

  // Map(d)(m)  ->  MultiFold(d/b)(d)(zeros(d)){ ii => (ii*b, acc => Map(b)(T[m])) }(_)
  Pattern stripMap(const MapNode& m, const TypeScope& outer) {
    Partition part = partition(m.domain, m.binders);

    TypeScope bodyScope = outer;
    for (const auto& b : m.binders) bodyScope.bindIndex(b);
    ScalarType elemType = inferScalarResult(m.body, bodyScope);

    // Strip-mine the body first, then rebase its indices into the tile.
    Block stripped = block(m.body, outer, m.binders);
    Block innerBody = substBlock(stripped, part.subst);
    Pattern innerMap = mapP(part.innerDomain, part.innerBinders, innerBody);

    Accumulator acc;
    acc.range = m.domain;
    acc.init = Node(zerosLike(m.domain, elemType));
    acc.combine = std::nullopt;
    std::size_t t = 0;
    for (std::size_t d = 0; d < m.domain.size(); ++d) {
      if (part.dims[d].tiled) {
        acc.loc.push_back(binOp(BinOpKind::Mul, constInt(part.dims[d].b),
                                indexRef(part.outerBinders[t])));
        acc.sliceShape.push_back(part.innerDomain[d]);
        ++t;
      } else {
        acc.loc.push_back(constInt(0));
        acc.sliceShape.push_back(m.domain[d]);
      }
    }
    acc.sliceBinder = gen.fresh("acc");
    acc.update.result = Node(innerMap);
    return multiFoldP(part.outerDomain, part.outerBinders, {}, {acc}, /*strided=*/true);
  }

  Pattern stripMultiFold(const MultiFoldNode& m, const TypeScope& outer) {
    Partition part = partition(m.domain, m.binders);

    TypeScope indexScope = outer;
    for (const auto& b : m.binders) indexScope.bindIndex(b);

    // Strip-mine per-index work, then rebase indices.
    TypeScope letScope = indexScope;
    std::vector<Binding> strippedLets = lets(m.lets, letScope);
    std::vector<Binding> innerLets;
    for (const auto& l : strippedLets) innerLets.push_back({l.ids, substNode(l.value, part.subst)});

    MultiFoldNode inner;
    inner.domain = part.innerDomain;
    inner.binders = part.innerBinders;
    inner.lets = std::move(innerLets);

    struct OuterAccPlan {
      Shape sliceShape;
      std::vector<Expr> loc;
      std::optional<Combine> combine;
      Node init;
      ScalarType elemType;
      Shape innerRange;
    };
    std::vector<OuterAccPlan> plans;

    for (const auto& a : m.accs) {
      OuterAccPlan plan;
      NodeInfo zi = inferSingle(a.init, outer);
      plan.elemType = zi.type;
      plan.init = a.init;
      plan.combine = a.combine;

      // A range dimension is aligned when the location is exactly a tiled
      // domain index and the slice is one element wide there; such
      // dimensions partition together with the domain.
      std::vector<int> alignedWith(a.range.size(), -1);
      bool zerosInit = false;
      {
        bool zi2 = false;
        zerosInit = a.init.isPattern() && [&] {
          const auto* mp = std::get_if<MapNode>(&a.init.pattern().get().v);
          if (!mp || !mp->body.lets.empty() || !mp->body.result.isExpr()) return false;
          const auto* c = std::get_if<ConstE>(&mp->body.result.expr().get().v);
          (void)zi2;
          return c != nullptr;
        }();
      }
      if (zerosInit) {
        for (std::size_t j = 0; j < a.range.size(); ++j) {
          const auto* ir = std::get_if<IndexRefE>(&a.loc[j].get().v);
          if (!ir) continue;
          if (!normalizeSize(a.sliceShape[j]).isLit(1)) continue;
          for (std::size_t d = 0; d < m.binders.size(); ++d)
            if (m.binders[d] == ir->name && part.dims[d].tiled) alignedWith[j] = (int)d;
        }
      }

      Accumulator ia;  // inner accumulator
      for (std::size_t j = 0; j < a.range.size(); ++j) {
        if (alignedWith[j] >= 0) {
          int d = alignedWith[j];
          ia.range.push_back(part.innerDomain[d]);
          ia.loc.push_back(indexRef(part.innerBinders[d]));
          ia.sliceShape.push_back(SizeExpr::Lit(1));
          std::size_t t = 0;
          for (int dd = 0; dd < d; ++dd)
            if (part.dims[dd].tiled) ++t;
          plan.loc.push_back(binOp(BinOpKind::Mul, constInt(part.dims[d].b),
                                   indexRef(part.outerBinders[t])));
          plan.sliceShape.push_back(part.innerDomain[d]);
        } else {
          ia.range.push_back(a.range[j]);
          ia.loc.push_back(substExpr(a.loc[j], part.subst));
          ia.sliceShape.push_back(substSize(a.sliceShape[j], part.subst));
          plan.loc.push_back(constInt(0));
          plan.sliceShape.push_back(a.range[j]);
        }
      }
      plan.innerRange = ia.range;
      // The inner accumulator starts from a fresh identity of the combine.
      ia.init = Node(zerosLike(ia.range, plan.elemType));
      if (a.init.isExpr() && shapeEq(ia.range, a.range)) {
        ia.init = Node(substExpr(a.init.expr(), {}));
      } else if (a.init.isPattern()) {
        const auto* mp = std::get_if<MapNode>(&a.init.pattern().get().v);
        if (mp && mp->body.lets.empty() && mp->body.result.isExpr() &&
            std::get_if<ConstE>(&mp->body.result.expr().get().v)) {
          const auto& c = std::get<ConstE>(mp->body.result.expr().get().v);
          std::vector<std::string> bs;
          for (std::size_t i = 0; i < ia.range.size(); ++i) bs.push_back(gen.fresh("zz"));
          Block body;
          body.result = Node(makeConst(c.v, c.type));
          ia.init = Node(mapP(ia.range, bs, body));
        }
      }
      ia.combine = a.combine ? std::optional<Combine>(refreshCombine(*a.combine)) : std::nullopt;
      ia.sliceBinder = a.sliceBinder;
      {
        TypeScope strippedScope = letScope;  // binders + lets in scope
        Block struck = rebuildUpdateWithScope(a, strippedScope, zi.type);
        ia.update = substBlock(struck, part.subst);
      }
      inner.accs.push_back(std::move(ia));
      plans.push_back(std::move(plan));
    }

    Pattern innerP = multiFoldP(inner.domain, inner.binders, inner.lets, inner.accs);

    // outer: bind the inner result(s), then combine them into the slices.
    std::vector<std::string> tileIds;
    for (std::size_t ai = 0; ai < m.accs.size(); ++ai) tileIds.push_back(gen.fresh("tile"));
    std::vector<Binding> outerLets;
    outerLets.push_back({tileIds, Node(innerP)});

    std::vector<Accumulator> outerAccs;
    for (std::size_t ai = 0; ai < m.accs.size(); ++ai) {
      const OuterAccPlan& plan = plans[ai];
      Accumulator oa;
      oa.range = m.accs[ai].range;
      oa.init = plan.init;
      oa.combine = plan.combine;
      oa.loc = plan.loc;
      oa.sliceShape = plan.sliceShape;
      oa.sliceBinder = gen.fresh("acc");
      oa.update = combineUpdate(oa.sliceBinder, tileIds[ai], plan);
      outerAccs.push_back(std::move(oa));
    }
    return multiFoldP(part.outerDomain, part.outerBinders, outerLets, outerAccs,
                      /*strided=*/true);
  }

  Block rebuildUpdateWithScope(const Accumulator& a, const TypeScope& indexScope,
                               const ScalarType& elemType) {
    TypeScope upd = indexScope;
    Shape sq = squeezeShape(a.sliceShape);
    if (sq.empty()) {
      upd.bindScalar(a.sliceBinder, elemType);
    } else {
      NodeInfo info;
      info.shape = sq;
      info.type = elemType;
      upd.bindTensor(a.sliceBinder, info);
    }
    return block(a.update, upd, {});
  }

  Pattern stripFlatMap(const FlatMapNode& f, const TypeScope& outer) {
    Partition part = partition(f.domain, f.binders);
    Block stripped = block(f.body, outer, f.binders);
    Block innerBody = substBlock(stripped, part.subst);
    Pattern innerF = flatMapP(part.innerDomain, part.innerBinders, innerBody);
    Block outerBody;
    outerBody.result = Node(innerF);
    return flatMapP(part.outerDomain, part.outerBinders, outerBody, /*strided=*/true);
  }

  Pattern stripGroupByFold(const GroupByFoldNode& g, const TypeScope& outer) {
    Partition part = partition(g.domain, g.binders);

    GroupByFoldNode inner;
    inner.domain = part.innerDomain;
    inner.binders = part.innerBinders;
    inner.init = g.init;
    inner.combine = refreshCombine(g.combine);

    TypeScope indexScope = outer;
    for (const auto& b : g.binders) indexScope.bindIndex(b);
    TypeScope letScope = indexScope;
    std::vector<Binding> strippedLets = lets(g.lets, letScope);
    for (const auto& l : strippedLets)
      inner.lets.push_back({l.ids, substNode(l.value, part.subst)});
    if (g.leaf) {
      GroupByLeaf lf = *g.leaf;
      TypeScope usc = letScope;
      usc.bindScalar(lf.valBinder, inferExpr(g.init, outer));
      lf.update = substBlock(block(g.leaf->update, usc, {}), part.subst);
      lf.key = substExpr(lf.key, part.subst);
      inner.leaf = std::move(lf);
    }
    if (g.merge) inner.merge = substNode(node(*g.merge, letScope), part.subst);

    GroupByFoldNode outerG;
    outerG.domain = part.outerDomain;
    outerG.binders = part.outerBinders;
    outerG.init = g.init;
    outerG.combine = g.combine;
    outerG.merge = Node(groupByFoldP(std::move(inner)));
    Pattern op = groupByFoldP(std::move(outerG));
    return withStrided(op, true);
  }
};

}  // namespace

Program stripMine(const Program& p, const TileConfig& cfg) {
  // Every configured dimension must name a symbol used in some pattern domain.
  std::vector<std::string> domainSyms;
  forEachPattern(p, [&](const Pattern& pat, const std::string&) {
    auto collect = [&](const Shape& sh) {
      for (const auto& e : sh) normalizeSize(e).collectSyms(domainSyms);
    };
    std::visit(overloaded{
                   [&](const MapNode& m) { collect(m.domain); },
                   [&](const MultiFoldNode& m) { collect(m.domain); },
                   [&](const FlatMapNode& f) { collect(f.domain); },
                   [&](const GroupByFoldNode& g) { collect(g.domain); },
                   [&](const auto&) {},
               },
               pat.get().v);
  });
  for (const auto& [sym, b] : cfg.tiles) {
    if (b < 1) throw TransformError("UnknownDimension", "tile size for '" + sym + "' must be >= 1");
    if (std::find(domainSyms.begin(), domainSyms.end(), sym) == domainSyms.end())
      throw TransformError("UnknownDimension",
                           "tile dimension '" + sym + "' does not occur in any pattern domain");
  }

  StripMiner sm{cfg, NameGen(allBoundIds(p))};
  TypeScope sc = scopeForInputs(p);
  Program out = p;
  out.bindings.clear();
  for (const auto& b : p.bindings) {
    Node v = sm.node(b.value, sc);
    out.bindings.push_back({b.ids, v});
    auto infos = inferNode(v, sc);
    for (std::size_t i = 0; i < b.ids.size() && i < infos.size(); ++i) {
      NodeInfo info = infos[i];
      if (info.isScalar()) sc.bindScalar(b.ids[i], info.type);
      else {
        if (info.dynamicLen && info.shape.size() == 1) info.shape = {SizeExpr::Len(b.ids[i])};
        sc.bindTensor(b.ids[i], info);
      }
    }
  }
  return out;
}

}  // namespace ppl
