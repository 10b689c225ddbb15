#include "pplforge/ir/validate.hpp"

#include <algorithm>

#include "pplforge/ir/walk.hpp"

namespace ppl {

void TypeScope::bindTensor(const std::string& id, NodeInfo info) {
  m_[id] = Entry{Kind::Tensor, std::move(info)};
}

void TypeScope::bindScalar(const std::string& id, ScalarType t) {
  NodeInfo i;
  i.type = std::move(t);
  m_[id] = Entry{Kind::Scalar, std::move(i)};
}

void TypeScope::bindIndex(const std::string& id) {
  NodeInfo i;
  i.type = ScalarType::Int();
  m_[id] = Entry{Kind::Index, std::move(i)};
}

const TypeScope::Entry* TypeScope::find(const std::string& id) const {
  auto it = m_.find(id);
  return it == m_.end() ? nullptr : &it->second;
}

TypeScope scopeForInputs(const Program& p) {
  TypeScope s;
  for (const auto& in : p.inputs) {
    NodeInfo i;
    i.shape = in.shape;
    i.type = in.type;
    s.bindTensor(in.id, std::move(i));
  }
  return s;
}

Shape squeezeShape(const Shape& s) {
  Shape r;
  for (const auto& e : s) {
    SizeExpr n = normalizeSize(e);
    if (!n.isLit(1)) r.push_back(n);
  }
  return r;
}

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& path,
                       const std::string& msg) {
  throw TypeError(code, path, msg);
}

const NodeInfo& tensorOf(const TypeScope& sc, const std::string& id,
                         const std::string& path) {
  const auto* e = sc.find(id);
  if (!e) fail("UnknownId", path, "reference to unbound id '" + id + "'");
  if (e->kind != TypeScope::Kind::Tensor)
    fail("TypeMismatch", path, "'" + id + "' is not an array");
  return e->info;
}

bool numeric(const ScalarType& t) {
  return t.kind == ScalarType::Kind::Int || t.kind == ScalarType::Kind::Float;
}

void bindBindingIds(TypeScope& sc, const Binding& b, const std::vector<NodeInfo>& infos,
                    const std::string& path) {
  if (b.ids.size() != infos.size())
    fail("BindingArityMismatch", path,
         "binding of " + std::to_string(b.ids.size()) + " ids to a value with " +
             std::to_string(infos.size()) + " outputs");
  for (std::size_t i = 0; i < b.ids.size(); ++i) {
    NodeInfo info = infos[i];
    if (info.isScalar()) {
      sc.bindScalar(b.ids[i], info.type);
    } else {
      if (info.dynamicLen && info.shape.size() == 1)
        info.shape = {SizeExpr::Len(b.ids[i])};
      sc.bindTensor(b.ids[i], info);
    }
  }
}

// Runs block lets and returns the scope for the result position.
TypeScope blockScope(const Block& b, const TypeScope& outer, const std::string& path) {
  TypeScope sc = outer;
  for (std::size_t i = 0; i < b.lets.size(); ++i) {
    const auto& let = b.lets[i];
    auto infos = inferNode(let.value, sc, path + "." + let.ids[0]);
    bindBindingIds(sc, let, infos, path + "." + let.ids[0]);
  }
  return sc;
}

}  // namespace

ScalarType inferExpr(const Expr& e, const TypeScope& sc, const std::string& path) {
  if (!e.valid()) fail("InternalError", path, "empty expression");
  return std::visit(
      overloaded{
          [&](const ConstE& c) { return c.type; },
          [&](const IndexRefE& x) {
            const auto* en = sc.find(x.name);
            if (!en) fail("UnknownId", path, "unbound index '" + x.name + "'");
            return ScalarType::Int();
          },
          [&](const VarRefE& x) {
            const auto* en = sc.find(x.name);
            if (!en) fail("UnknownId", path, "unbound variable '" + x.name + "'");
            if (en->kind == TypeScope::Kind::Tensor)
              fail("TypeMismatch", path, "array '" + x.name + "' used as scalar");
            return en->info.type;
          },
          [&](const ArrayReadE& x) {
            const NodeInfo& a = tensorOf(sc, x.array, path);
            if (x.indices.size() != a.shape.size())
              fail("IndexArityMismatch", path,
                   "'" + x.array + "' has arity " + std::to_string(a.shape.size()) +
                       " but is read with " + std::to_string(x.indices.size()) +
                       " indices");
            for (const auto& i : x.indices) {
              if (inferExpr(i, sc, path).kind != ScalarType::Kind::Int)
                fail("TypeMismatch", path, "array index must be int");
            }
            return a.type;
          },
          [&](const BinOpE& x) {
            ScalarType l = inferExpr(x.lhs, sc, path);
            ScalarType r = inferExpr(x.rhs, sc, path);
            switch (x.op) {
              case BinOpKind::Add:
              case BinOpKind::Sub:
              case BinOpKind::Mul:
              case BinOpKind::Div:
              case BinOpKind::Min:
              case BinOpKind::Max:
                if (!(l == r) || !numeric(l))
                  fail("TypeMismatch", path,
                       std::string("operands of '") + binOpName(x.op) +
                           "' must be matching numeric types, got " + l.str() +
                           " and " + r.str());
                return l;
              case BinOpKind::Lt:
                if (!(l == r) || !numeric(l))
                  fail("TypeMismatch", path, "operands of '<' must be matching numeric types");
                return ScalarType::Bool();
              case BinOpKind::Eq:
                if (!(l == r))
                  fail("TypeMismatch", path, "operands of '==' must have the same type");
                return ScalarType::Bool();
            }
            return l;
          },
          [&](const IfE& x) {
            if (inferExpr(x.cond, sc, path).kind != ScalarType::Kind::Bool)
              fail("TypeMismatch", path, "if condition must be bool");
            ScalarType t = inferExpr(x.thenE, sc, path);
            ScalarType f = inferExpr(x.elseE, sc, path);
            if (!(t == f))
              fail("TypeMismatch", path, "if branches differ: " + t.str() + " vs " + f.str());
            return t;
          },
          [&](const TupleMakeE& x) {
            std::vector<ScalarType> ts;
            for (const auto& el : x.elems) ts.push_back(inferExpr(el, sc, path));
            return ScalarType::Tuple(std::move(ts));
          },
          [&](const TupleProjE& x) {
            ScalarType t = inferExpr(x.tuple, sc, path);
            if (!t.isTuple() || x.index < 0 || x.index >= (int)t.elems.size())
              fail("TypeMismatch", path, "tuple projection out of range");
            return t.elems[x.index];
          },
          [&](const LetE& x) {
            ScalarType bt = inferExpr(x.bound, sc, path);
            TypeScope inner = sc;
            inner.bindScalar(x.id, bt);
            return inferExpr(x.body, inner, path);
          },
      },
      e.get().v);
}

ScalarType inferScalarResult(const Block& b, const TypeScope& outer, const std::string& path) {
  TypeScope sc = blockScope(b, outer, path);
  if (b.result.isExpr()) return inferExpr(b.result.expr(), sc, path);
  NodeInfo info = inferSingle(b.result, sc, path);
  if (!squeezeShape(info.shape).empty())
    fail("NonScalarResult", path,
         "expected a scalar result, got tensor of shape " + shapeStr(info.shape));
  return info.type;
}

namespace {

NodeInfo inferBlockTensor(const Block& b, const TypeScope& outer, const std::string& path) {
  TypeScope sc = blockScope(b, outer, path);
  return inferSingle(b.result, sc, path);
}

void checkCombine(const Combine& c, const ScalarType& v, const TypeScope& outer,
                  const std::string& path) {
  TypeScope sc = outer;
  sc.bindScalar(c.lhs, v);
  sc.bindScalar(c.rhs, v);
  ScalarType r = inferExpr(c.body, sc, path + ".combine");
  if (!(r == v))
    fail("TypeMismatch", path + ".combine",
         "combine must map (" + v.str() + ", " + v.str() + ") to " + v.str() +
             ", produced " + r.str());
}

std::vector<NodeInfo> inferPattern(const Pattern& p, const TypeScope& sc,
                                   const std::string& path) {
  return std::visit(
      overloaded{
          [&](const MapNode& m) -> std::vector<NodeInfo> {
            if (m.domain.empty() || m.domain.size() != m.binders.size())
              fail("IndexArityMismatch", path, "map binder count must match domain arity");
            TypeScope inner = sc;
            for (const auto& b : m.binders) inner.bindIndex(b);
            NodeInfo out;
            out.shape = m.domain;
            out.type = inferScalarResult(m.body, inner, path + ".body");
            return {out};
          },
          [&](const MultiFoldNode& m) -> std::vector<NodeInfo> {
            if (m.domain.empty() || m.domain.size() != m.binders.size())
              fail("IndexArityMismatch", path, "multiFold binder count must match domain arity");
            if (m.accs.empty()) fail("InternalError", path, "multiFold with no accumulators");
            std::vector<NodeInfo> outs;
            // Accumulator ranges/inits/combines are typed outside the index scope.
            std::vector<ScalarType> elemTypes;
            for (std::size_t ai = 0; ai < m.accs.size(); ++ai) {
              const auto& a = m.accs[ai];
              std::string apath = path + ".acc" + std::to_string(ai);
              NodeInfo zi = inferSingle(a.init, sc, apath + ".init");
              Shape zShape = zi.isScalar() ? Shape{SizeExpr::Lit(1)} : zi.shape;
              if (!shapeEq(squeezeShape(zShape), squeezeShape(a.range)))
                fail("InitShapeMismatch", apath,
                     "init shape " + shapeStr(zShape) + " does not match range " +
                         shapeStr(a.range));
              if (a.combine) checkCombine(*a.combine, zi.type, sc, apath);
              if (a.loc.size() != a.range.size())
                fail("LocArityMismatch", apath,
                     "location has " + std::to_string(a.loc.size()) +
                         " coordinates for range of arity " + std::to_string(a.range.size()));
              if (a.sliceShape.size() != a.range.size())
                fail("SliceArityMismatch", apath,
                     "slice arity " + std::to_string(a.sliceShape.size()) +
                         " must equal range arity " + std::to_string(a.range.size()));
              for (std::size_t d = 0; d < a.sliceShape.size(); ++d) {
                auto sb = a.sliceShape[d].staticBound();
                auto rb = normalizeSize(a.range[d]).staticBound();
                if (sb && rb && *sb > *rb)
                  fail("SliceTooLarge", apath,
                       "slice extent " + a.sliceShape[d].str() + " exceeds range " +
                           a.range[d].str());
              }
              NodeInfo out;
              out.shape = a.range;
              out.type = zi.type;
              outs.push_back(out);
              elemTypes.push_back(zi.type);
            }
            // Per-index work.
            TypeScope inner = sc;
            for (const auto& b : m.binders) inner.bindIndex(b);
            TypeScope withLets = inner;
            for (const auto& let : m.lets) {
              auto infos = inferNode(let.value, withLets, path + "." + let.ids[0]);
              bindBindingIds(withLets, let, infos, path + "." + let.ids[0]);
            }
            for (std::size_t ai = 0; ai < m.accs.size(); ++ai) {
              const auto& a = m.accs[ai];
              std::string apath = path + ".acc" + std::to_string(ai);
              for (const auto& l : a.loc)
                if (inferExpr(l, withLets, apath).kind != ScalarType::Kind::Int)
                  fail("TypeMismatch", apath, "accumulator location must be int");
              TypeScope upd = withLets;
              NodeInfo sliceInfo;
              sliceInfo.shape = a.sliceShape;
              sliceInfo.type = elemTypes[ai];
              Shape sq = squeezeShape(a.sliceShape);
              if (sq.empty()) upd.bindScalar(a.sliceBinder, elemTypes[ai]);
              else upd.bindTensor(a.sliceBinder, sliceInfo);
              TypeScope resScope = blockScope(a.update, upd, apath + ".update");
              if (a.update.result.isExpr()) {
                ScalarType rt = inferExpr(a.update.result.expr(), resScope, apath + ".update");
                if (!sq.empty())
                  fail("UpdateShapeMismatch", apath,
                       "scalar update for slice of shape " + shapeStr(a.sliceShape));
                if (!(rt == elemTypes[ai]))
                  fail("TypeMismatch", apath,
                       "update produces " + rt.str() + ", accumulator holds " +
                           elemTypes[ai].str());
              } else {
                NodeInfo rt = inferSingle(a.update.result, resScope, apath + ".update");
                if (!(rt.type == elemTypes[ai]))
                  fail("TypeMismatch", apath,
                       "update produces " + rt.type.str() + ", accumulator holds " +
                           elemTypes[ai].str());
                if (!shapeEq(squeezeShape(rt.shape), sq))
                  fail("UpdateShapeMismatch", apath,
                       "update shape " + shapeStr(rt.shape) + " does not match slice " +
                           shapeStr(a.sliceShape));
              }
            }
            return outs;
          },
          [&](const FlatMapNode& f) -> std::vector<NodeInfo> {
            if (f.domain.size() != 1)
              fail("OneDimensionalityViolation", path,
                   "flatMap domain must be one-dimensional, got arity " +
                       std::to_string(f.domain.size()));
            if (f.binders.size() != f.domain.size())
              fail("IndexArityMismatch", path, "flatMap binder count must match domain arity");
            TypeScope inner = sc;
            for (const auto& b : f.binders) inner.bindIndex(b);
            NodeInfo seg = inferBlockTensor(f.body, inner, path + ".body");
            if (squeezeShape(seg.shape).size() > 1)
              fail("TypeMismatch", path + ".body", "flatMap segments must be one-dimensional");
            NodeInfo out;
            out.shape = {SizeExpr::Len("?")};
            out.type = seg.type;
            out.dynamicLen = true;
            return {out};
          },
          [&](const GroupByFoldNode& g) -> std::vector<NodeInfo> {
            if (g.domain.size() != 1)
              fail("OneDimensionalityViolation", path,
                   "groupByFold domain must be one-dimensional, got arity " +
                       std::to_string(g.domain.size()));
            if (g.binders.size() != g.domain.size())
              fail("IndexArityMismatch", path, "groupByFold binder count must match domain arity");
            ScalarType v = inferExpr(g.init, sc, path + ".init");
            checkCombine(g.combine, v, sc, path);
            TypeScope inner = sc;
            for (const auto& b : g.binders) inner.bindIndex(b);
            TypeScope withLets = inner;
            for (const auto& let : g.lets) {
              auto infos = inferNode(let.value, withLets, path + "." + let.ids[0]);
              bindBindingIds(withLets, let, infos, path + "." + let.ids[0]);
            }
            ScalarType k;
            if (g.leaf) {
              k = inferExpr(g.leaf->key, withLets, path + ".key");
              TypeScope upd = withLets;
              upd.bindScalar(g.leaf->valBinder, v);
              ScalarType rt = inferScalarResult(g.leaf->update, upd, path + ".update");
              if (!(rt == v))
                fail("TypeMismatch", path + ".update",
                     "bucket update produces " + rt.str() + ", buckets hold " + v.str());
            } else if (g.merge) {
              NodeInfo src = inferSingle(*g.merge, withLets, path + ".merge");
              if (!src.kv)
                fail("TypeMismatch", path + ".merge",
                     "merge body must produce (key, value) pairs");
              if (!(src.type.elems.at(1) == v))
                fail("TypeMismatch", path + ".merge",
                     "merged values have type " + src.type.elems.at(1).str() +
                         ", buckets hold " + v.str());
              k = src.type.elems.at(0);
            } else {
              fail("InternalError", path, "groupByFold without a body form");
            }
            NodeInfo out;
            out.shape = {SizeExpr::Len("?")};
            out.type = ScalarType::Tuple({k, v});
            out.kv = true;
            out.dynamicLen = true;
            return {out};
          },
          [&](const ArrayCopyNode& a) -> std::vector<NodeInfo> {
            const NodeInfo& src = tensorOf(sc, a.source, path);
            if (a.dims.size() != src.shape.size())
              fail("IndexArityMismatch", path,
                   "copy of '" + a.source + "' must specify all " +
                       std::to_string(src.shape.size()) + " dimensions");
            NodeInfo out;
            for (const auto& d : a.dims) {
              if (inferExpr(d.offset, sc, path).kind != ScalarType::Kind::Int)
                fail("TypeMismatch", path, "copy offsets must be int");
              out.shape.push_back(d.extent);
            }
            out.type = src.type;
            return {out};
          },
          [&](const SliceNode& s) -> std::vector<NodeInfo> {
            const NodeInfo& src = tensorOf(sc, s.source, path);
            if (s.dims.size() != src.shape.size())
              fail("IndexArityMismatch", path,
                   "slice of '" + s.source + "' must specify all " +
                       std::to_string(src.shape.size()) + " dimensions");
            NodeInfo out;
            out.type = src.type;
            for (std::size_t d = 0; d < s.dims.size(); ++d) {
              if (s.dims[d].fixed) {
                if (inferExpr(*s.dims[d].fixed, sc, path).kind != ScalarType::Kind::Int)
                  fail("TypeMismatch", path, "slice indices must be int");
              } else {
                out.shape.push_back(src.shape[d]);
              }
            }
            if (out.shape.empty())
              fail("TypeMismatch", path, "slice must keep at least one free dimension");
            return {out};
          },
          [&](const ArrayRefNode& a) -> std::vector<NodeInfo> {
            return {tensorOf(sc, a.name, path)};
          },
          [&](const ElemsNode& e) -> std::vector<NodeInfo> {
            NodeInfo out;
            out.shape = {SizeExpr::Lit((std::int64_t)e.elems.size())};
            if (e.elems.empty()) {
              out.type = ScalarType::Float();  // refined by unification with siblings
            } else {
              out.type = inferExpr(e.elems[0], sc, path);
              for (const auto& x : e.elems)
                if (!(inferExpr(x, sc, path) == out.type))
                  fail("TypeMismatch", path, "elements of a segment literal must share a type");
            }
            return {out};
          },
          [&](const IfNode& i) -> std::vector<NodeInfo> {
            if (inferExpr(i.cond, sc, path).kind != ScalarType::Kind::Bool)
              fail("TypeMismatch", path, "if condition must be bool");
            NodeInfo t = inferSingle(i.thenN, sc, path + ".then");
            NodeInfo f = inferSingle(i.elseN, sc, path + ".else");
            auto emptyElems = [](const Node& n) {
              return n.isPattern() &&
                     std::holds_alternative<ElemsNode>(n.pattern().get().v) &&
                     std::get<ElemsNode>(n.pattern().get().v).elems.empty();
            };
            if (emptyElems(i.thenN)) t.type = f.type;
            if (emptyElems(i.elseN)) f.type = t.type;
            if (!(t.type == f.type))
              fail("TypeMismatch", path, "if branches produce different element types");
            NodeInfo out = t;
            if (!shapeEq(t.shape, f.shape)) {
              out.shape = {SizeExpr::Len("?")};
              out.dynamicLen = true;
            }
            return {out};
          },
      },
      p.get().v);
}

}  // namespace

std::vector<NodeInfo> inferNode(const Node& n, const TypeScope& sc, const std::string& path) {
  if (n.isExpr()) {
    NodeInfo i;
    i.type = inferExpr(n.expr(), sc, path);
    return {i};
  }
  return inferPattern(n.pattern(), sc, path);
}

NodeInfo inferSingle(const Node& n, const TypeScope& sc, const std::string& path) {
  auto v = inferNode(n, sc, path);
  if (v.size() != 1)
    fail("BindingArityMismatch", path, "expected a single-output value here");
  return v[0];
}

std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> diags;
  TypeScope sc;
  std::vector<std::string> seen;
  for (const auto& in : p.inputs) {
    if (std::find(seen.begin(), seen.end(), in.id) != seen.end())
      diags.push_back({"DuplicateId", in.id, "input id declared twice"});
    seen.push_back(in.id);
    NodeInfo i;
    i.shape = in.shape;
    i.type = in.type;
    if (in.shape.empty())
      diags.push_back({"TypeMismatch", in.id, "input arrays must have arity >= 1"});
    for (const auto& e : in.shape) {
      if (e.op == SizeExpr::Op::Lit && e.lit < 0)
        diags.push_back({"TypeMismatch", in.id, "negative literal extent"});
    }
    // Tuples must bottom out in scalars; enforced structurally by ScalarType.
    sc.bindTensor(in.id, std::move(i));
  }
  for (const auto& b : p.bindings) {
    const std::string path = b.ids.empty() ? "<binding>" : b.ids[0];
    for (const auto& id : b.ids) {
      if (std::find(seen.begin(), seen.end(), id) != seen.end())
        diags.push_back({"DuplicateId", id, "id defined twice"});
      seen.push_back(id);
    }
    try {
      auto infos = inferNode(b.value, sc, path);
      bindBindingIds(sc, b, infos, path);
    } catch (const TypeError& e) {
      diags.push_back({e.code, e.path.empty() ? path : e.path, e.what()});
      // Bind poison entries so later bindings do not cascade UnknownId.
      for (const auto& id : b.ids) sc.bindScalar(id, ScalarType::Float());
    }
  }
  for (const auto& out : p.outputs) {
    if (!sc.find(out))
      diags.push_back({"OutputUnknown", out, "output refers to an undefined id"});
  }
  return diags;
}

bool isFold(const MultiFoldNode& m) {
  for (const auto& a : m.accs) {
    if (!shapeEq(squeezeShape(a.sliceShape), squeezeShape(a.range))) return false;
    for (const auto& l : a.loc) {
      if (!l.valid()) return false;
      const auto* c = std::get_if<ConstE>(&l.get().v);
      if (!c || c->type.kind != ScalarType::Kind::Int || c->v.asInt() != 0) return false;
    }
  }
  return true;
}

bool isFold(const Pattern& p) {
  const auto* m = std::get_if<MultiFoldNode>(&p.get().v);
  return m && isFold(*m);
}

}  // namespace ppl
