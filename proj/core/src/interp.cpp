#include "pplforge/interp/interp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "pplforge/ir/validate.hpp"
#include "pplforge/ir/walk.hpp"

namespace ppl {

std::int64_t TensorValue::flatIndex(const std::vector<std::int64_t>& idx) const {
  std::int64_t f = 0;
  for (std::size_t d = 0; d < extents.size(); ++d) {
    if (idx[d] < 0 || idx[d] >= extents[d])
      throw EvalError("OutOfBounds", "index " + std::to_string(idx[d]) +
                                         " outside extent " + std::to_string(extents[d]));
    f = f * extents[d] + idx[d];
  }
  return f;
}

TensorValue makeTensor(std::vector<std::int64_t> extents, ScalarType elemType) {
  TensorValue t;
  t.extents = std::move(extents);
  t.elemType = elemType;
  t.data.assign(t.count(), zeroValue(elemType));
  return t;
}

std::string TensorValue::str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < data.size() && i < 64; ++i) {
    if (i) os << ", ";
    os << data[i].str();
  }
  if (data.size() > 64) os << ", ...";
  os << "]#" << extents.size() << "d";
  return os.str();
}

namespace {

double asDouble(const ScalarAtom& a) {
  if (auto* d = std::get_if<double>(&a)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&a)) return (double)*i;
  return std::get<bool>(a) ? 1.0 : 0.0;
}

bool checkIdentityImpl(const TensorValue& z, const Combine& c, int samples,
                       std::uint64_t seed, std::string* witness);

bool atomEquiv(const ScalarAtom& a, const ScalarAtom& b, double relTol) {
  if (a.index() != b.index()) return false;
  if (std::holds_alternative<double>(a)) {
    double x = std::get<double>(a), y = std::get<double>(b);
    if (std::isnan(x) && std::isnan(y)) return true;
    double scale = std::max({std::fabs(x), std::fabs(y), 1.0});
    return std::fabs(x - y) <= relTol * scale;
  }
  return a == b;
}

struct Interp {
  const Program& prog;
  EvalOptions opts;
  Env env;
  std::map<std::string, std::int64_t> idx;
  SizeBindings sizes;  // symbol bindings unified from input shapes
  SizeBindings lens;   // dynamic lengths by array id
  std::map<std::string, std::int64_t> reads;
  std::mt19937_64 rng;
  TypeScope types;

  explicit Interp(const Program& p, const EvalOptions& o)
      : prog(p), opts(o), rng(o.instrumentSeed) {}

  // ---- scoping -----------------------------------------------------------

  struct Saved {
    std::string key;
    bool hadEnv = false, hadIdx = false;
    RtEntry prevEnv;
    std::int64_t prevIdx = 0;
  };
  using Scope = std::vector<Saved>;

  void bindEntry(const std::string& id, RtEntry e, Scope& sc) {
    Saved s;
    s.key = id;
    auto it = env.find(id);
    if (it != env.end()) {
      s.hadEnv = true;
      s.prevEnv = it->second;
    }
    sc.push_back(std::move(s));
    if (e.isTensor()) {
      NodeInfo info;
      const auto& t = std::get<TensorValue>(e.v);
      for (auto x : t.extents) info.shape.push_back(SizeExpr::Lit(x));
      info.type = t.elemType;
      info.kv = t.kv;
      types.bindTensor(id, info);
    } else {
      types.bindScalar(id, valueType(std::get<Value>(e.v)));
    }
    env[id] = std::move(e);
  }

  static ScalarType valueType(const Value& v) {
    if (v.lanes.size() == 1) {
      if (std::holds_alternative<std::int64_t>(v.lanes[0])) return ScalarType::Int();
      if (std::holds_alternative<double>(v.lanes[0])) return ScalarType::Float();
      return ScalarType::Bool();
    }
    std::vector<ScalarType> es;
    for (const auto& a : v.lanes)
      es.push_back(std::holds_alternative<std::int64_t>(a)  ? ScalarType::Int()
                   : std::holds_alternative<double>(a) ? ScalarType::Float()
                                                       : ScalarType::Bool());
    return ScalarType::Tuple(std::move(es));
  }

  void bindIndex(const std::string& id, std::int64_t v, Scope& sc) {
    Saved s;
    s.key = id;
    auto it = idx.find(id);
    if (it != idx.end()) {
      s.hadIdx = true;
      s.prevIdx = it->second;
    }
    sc.push_back(std::move(s));
    idx[id] = v;
    types.bindIndex(id);
  }

  void unwind(Scope& sc) {
    for (auto it = sc.rbegin(); it != sc.rend(); ++it) {
      if (it->hadEnv) env[it->key] = it->prevEnv;
      else env.erase(it->key);
      if (it->hadIdx) idx[it->key] = it->prevIdx;
      else idx.erase(it->key);
    }
    sc.clear();
  }

  // ---- sizes -------------------------------------------------------------

  std::int64_t evalSize(const SizeExpr& s) { return s.eval(sizes, idx, lens); }

  std::vector<std::int64_t> evalShape(const Shape& sh) {
    std::vector<std::int64_t> out;
    out.reserve(sh.size());
    for (const auto& s : sh) out.push_back(evalSize(s));
    return out;
  }

  // ---- expressions -------------------------------------------------------

  Value evalExpr(const Expr& e) {
    return std::visit(
        overloaded{
            [&](const ConstE& c) { return c.v; },
            [&](const IndexRefE& x) {
              auto it = idx.find(x.name);
              if (it != idx.end()) return Value::ofInt(it->second);
              auto ev = env.find(x.name);
              if (ev != env.end() && !ev->second.isTensor()) return ev->second.scalar();
              throw EvalError("UnboundId", "index '" + x.name + "'");
            },
            [&](const VarRefE& x) {
              auto it = idx.find(x.name);
              if (it != idx.end()) return Value::ofInt(it->second);
              auto ev = env.find(x.name);
              if (ev == env.end()) throw EvalError("UnboundId", "variable '" + x.name + "'");
              if (ev->second.isTensor())
                throw EvalError("UnboundId", "array '" + x.name + "' used as scalar");
              return ev->second.scalar();
            },
            [&](const ArrayReadE& x) {
              const TensorValue& t = lookupTensor(x.array);
              std::vector<std::int64_t> iv;
              iv.reserve(x.indices.size());
              for (const auto& i : x.indices) iv.push_back(evalExpr(i).asInt());
              countRead(x.array, 1);
              return t.at(iv);
            },
            [&](const BinOpE& x) {
              Value l = evalExpr(x.lhs), r = evalExpr(x.rhs);
              return applyBinOp(x.op, l, r);
            },
            [&](const IfE& x) {
              return evalExpr(x.cond).asBool() ? evalExpr(x.thenE) : evalExpr(x.elseE);
            },
            [&](const TupleMakeE& x) {
              Value out;
              for (const auto& el : x.elems) {
                Value v = evalExpr(el);
                out.lanes.insert(out.lanes.end(), v.lanes.begin(), v.lanes.end());
              }
              return out;
            },
            [&](const TupleProjE& x) {
              Value t = evalExpr(x.tuple);
              ScalarType tt = inferExprTypeQuiet(x.tuple);
              int off = tt.laneOffset(x.index);
              int w = tt.elems.at(x.index).lanes();
              Value out;
              out.lanes.assign(t.lanes.begin() + off, t.lanes.begin() + off + w);
              return out;
            },
            [&](const LetE& x) {
              Scope sc;
              bindEntry(x.id, RtEntry(evalExpr(x.bound)), sc);
              Value out = evalExpr(x.body);
              unwind(sc);
              return out;
            },
        },
        e.get().v);
  }

  ScalarType inferExprTypeQuiet(const Expr& e) { return inferExpr(e, types); }

  static Value applyBinOp(BinOpKind op, const Value& l, const Value& r) {
    auto isInt = std::holds_alternative<std::int64_t>(l.lanes.at(0));
    switch (op) {
      case BinOpKind::Lt:
        return Value::ofBool(isInt ? l.asInt() < r.asInt()
                                   : asDouble(l.lanes[0]) < asDouble(r.lanes[0]));
      case BinOpKind::Eq:
        return Value::ofBool(l == r);
      default: break;
    }
    if (isInt) {
      std::int64_t a = l.asInt(), b = r.asInt();
      switch (op) {
        case BinOpKind::Add: return Value::ofInt(a + b);
        case BinOpKind::Sub: return Value::ofInt(a - b);
        case BinOpKind::Mul: return Value::ofInt(a * b);
        case BinOpKind::Div:
          if (b == 0) throw EvalError("DivisionByZero", "integer division by zero");
          return Value::ofInt(a / b);
        case BinOpKind::Min: return Value::ofInt(std::min(a, b));
        case BinOpKind::Max: return Value::ofInt(std::max(a, b));
        default: break;
      }
    } else {
      double a = l.asFloat(), b = r.asFloat();
      switch (op) {
        case BinOpKind::Add: return Value::ofFloat(a + b);
        case BinOpKind::Sub: return Value::ofFloat(a - b);
        case BinOpKind::Mul: return Value::ofFloat(a * b);
        case BinOpKind::Div: return Value::ofFloat(a / b);  // IEEE semantics
        case BinOpKind::Min: return Value::ofFloat(std::min(a, b));
        case BinOpKind::Max: return Value::ofFloat(std::max(a, b));
        default: break;
      }
    }
    throw EvalError("UnboundId", "bad binop");
  }

  const TensorValue& lookupTensor(const std::string& id) {
    auto it = env.find(id);
    if (it == env.end()) throw EvalError("UnboundId", "array '" + id + "'");
    if (!it->second.isTensor())
      throw EvalError("UnboundId", "'" + id + "' is not an array");
    return it->second.tensor();
  }

  bool isInput(const std::string& id) const { return prog.findInput(id) != nullptr; }

  void countRead(const std::string& id, std::int64_t n) {
    if (opts.countReads && isInput(id)) reads[id] += n;
  }

  // ---- blocks ------------------------------------------------------------

  void evalLets(const std::vector<Binding>& lets, Scope& sc) {
    for (const auto& let : lets) {
      if (let.ids.size() == 1 && let.value.isExpr()) {
        bindEntry(let.ids[0], RtEntry(evalExpr(let.value.expr())), sc);
        continue;
      }
      auto ts = evalMulti(let.value);
      if (ts.size() != let.ids.size())
        throw EvalError("UnboundId", "binding arity mismatch at '" + let.ids[0] + "'");
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i].extents.size() == 1) lens[let.ids[i]] = ts[i].extents[0];
        bindEntry(let.ids[i], RtEntry(std::move(ts[i])), sc);
      }
    }
  }

  Value evalScalarBlock(const Block& b) {
    Scope sc;
    evalLets(b.lets, sc);
    Value out;
    if (b.result.isExpr()) {
      out = evalExpr(b.result.expr());
    } else {
      TensorValue t = evalSingle(b.result);
      if (t.count() != 1)
        throw EvalError("OutOfBounds", "tensor of " + std::to_string(t.count()) +
                                           " elements used as a scalar");
      out = t.data[0];
    }
    unwind(sc);
    return out;
  }

  TensorValue evalTensorBlock(const Block& b) {
    Scope sc;
    evalLets(b.lets, sc);
    TensorValue out = evalSingle(b.result);
    unwind(sc);
    return out;
  }

  // ---- patterns ----------------------------------------------------------

  TensorValue evalSingle(const Node& n) {
    auto v = evalMulti(n);
    if (v.size() != 1) throw EvalError("UnboundId", "expected single-output value");
    return std::move(v[0]);
  }

  // Scalar nodes become rank-1 tensors of extent 1.
  TensorValue toTensor(const Node& n) {
    if (n.isExpr()) {
      Value v = evalExpr(n.expr());
      TensorValue t;
      t.extents = {1};
      t.elemType = valueType(v);
      t.data = {std::move(v)};
      return t;
    }
    return evalSingle(n);
  }

  std::vector<TensorValue> evalMulti(const Node& n) {
    if (n.isExpr()) {
      Value v = evalExpr(n.expr());
      TensorValue t;
      t.extents = {};
      t.elemType = valueType(v);
      t.data = {std::move(v)};
      // rank-0 wrapper; callers binding scalars use RtEntry(Value) instead
      std::vector<TensorValue> out;
      out.push_back(std::move(t));
      return out;
    }
    return evalPattern(n.pattern());
  }

  void forEachIndex(const std::vector<std::int64_t>& ext,
                    const std::function<void(const std::vector<std::int64_t>&)>& fn) {
    std::vector<std::int64_t> cur(ext.size(), 0);
    std::function<void(std::size_t)> rec = [&](std::size_t d) {
      if (d == ext.size()) {
        fn(cur);
        return;
      }
      for (std::int64_t i = 0; i < ext[d]; ++i) {
        cur[d] = i;
        rec(d + 1);
      }
    };
    rec(0);
  }

  TensorValue evalAccInit(const Accumulator& a) {
    TensorValue z = toTensor(a.init);
    auto rext = evalShape(a.range);
    std::int64_t want = 1;
    for (auto e : rext) want *= e;
    if (z.count() != want)
      throw EvalError("OutOfBounds", "accumulator init has " + std::to_string(z.count()) +
                                         " elements for range of " + std::to_string(want));
    z.extents = rext;
    return z;
  }

  void sampleIdentity(const TensorValue& z, const Combine& c) {
    std::string witness;
    if (!checkIdentityImpl(z, c, 3, rng(), &witness))
      throw EvalError("NonIdentityInit", witness);
  }

  std::vector<TensorValue> evalPattern(const Pattern& p) {
    return std::visit(
        overloaded{
            [&](const MapNode& m) -> std::vector<TensorValue> {
              auto ext = evalShape(m.domain);
              ScalarType et = mapElemType(m);
              TensorValue out = makeTensor(ext, et);
              std::int64_t flat = 0;
              forEachIndex(ext, [&](const std::vector<std::int64_t>& iv) {
                Scope sc;
                for (std::size_t d = 0; d < m.binders.size(); ++d)
                  bindIndex(m.binders[d], iv[d], sc);
                out.data[flat++] = evalScalarBlock(m.body);
                unwind(sc);
              });
              return {std::move(out)};
            },
            [&](const MultiFoldNode& m) -> std::vector<TensorValue> {
              return evalMultiFold(m, 0, -1);
            },
            [&](const FlatMapNode& f) -> std::vector<TensorValue> {
              std::int64_t n = evalSize(f.domain.at(0));
              std::vector<Value> data;
              std::optional<ScalarType> et;
              for (std::int64_t i = 0; i < n; ++i) {
                Scope sc;
                bindIndex(f.binders.at(0), i, sc);
                TensorValue seg = evalTensorBlock(f.body);
                if (seg.count() > 0) et = seg.elemType;
                data.insert(data.end(), seg.data.begin(), seg.data.end());
                unwind(sc);
              }
              TensorValue out;
              out.extents = {(std::int64_t)data.size()};
              out.elemType = et ? *et : flatMapElemType(f);
              out.data = std::move(data);
              return {std::move(out)};
            },
            [&](const GroupByFoldNode& g) -> std::vector<TensorValue> {
              return {evalGroupBy(g)};
            },
            [&](const ArrayCopyNode& a) -> std::vector<TensorValue> {
              const TensorValue src = lookupTensor(a.source);
              std::vector<std::int64_t> off, ext;
              for (const auto& d : a.dims) {
                off.push_back(evalExpr(d.offset).asInt());
                ext.push_back(evalSize(d.extent));
              }
              TensorValue out = region(src, off, ext, a.source);
              countRead(a.source, out.count());
              return {std::move(out)};
            },
            [&](const SliceNode& s) -> std::vector<TensorValue> {
              const TensorValue src = lookupTensor(s.source);
              std::vector<std::int64_t> off, ext;
              std::vector<bool> keep;
              for (std::size_t d = 0; d < s.dims.size(); ++d) {
                if (s.dims[d].fixed) {
                  off.push_back(evalExpr(*s.dims[d].fixed).asInt());
                  ext.push_back(1);
                  keep.push_back(false);
                } else {
                  off.push_back(0);
                  ext.push_back(src.extents.at(d));
                  keep.push_back(true);
                }
              }
              TensorValue out = region(src, off, ext, s.source);
              std::vector<std::int64_t> newExt;
              for (std::size_t d = 0; d < keep.size(); ++d)
                if (keep[d]) newExt.push_back(ext[d]);
              out.extents = std::move(newExt);
              countRead(s.source, out.count());
              return {std::move(out)};
            },
            [&](const ArrayRefNode& a) -> std::vector<TensorValue> {
              return {lookupTensor(a.name)};
            },
            [&](const ElemsNode& e) -> std::vector<TensorValue> {
              TensorValue out;
              out.extents = {(std::int64_t)e.elems.size()};
              if (e.elems.empty()) {
                out.elemType = ScalarType::Float();
              } else {
                for (const auto& x : e.elems) out.data.push_back(evalExpr(x));
                out.elemType = valueType(out.data[0]);
              }
              return {std::move(out)};
            },
            [&](const IfNode& i) -> std::vector<TensorValue> {
              return evalExpr(i.cond).asBool() ? evalMulti(i.thenN) : evalMulti(i.elseN);
            },
        },
        p.get().v);
  }

  ScalarType mapElemType(const MapNode& m) {
    TypeScope sc = types;
    for (const auto& b : m.binders) sc.bindIndex(b);
    return inferScalarResult(m.body, sc);
  }

  ScalarType flatMapElemType(const FlatMapNode& f) {
    // Only consulted when every segment came out empty.
    try {
      Pattern p = flatMapP(f.domain, f.binders, f.body);
      auto infos = inferNode(Node(p), types);
      return infos.at(0).type;
    } catch (const TypeError&) {
      return ScalarType::Float();
    }
  }

  TensorValue region(const TensorValue& src, const std::vector<std::int64_t>& off,
                     const std::vector<std::int64_t>& ext, const std::string& id) {
    for (std::size_t d = 0; d < off.size(); ++d) {
      if (off[d] < 0 || off[d] + ext[d] > src.extents.at(d))
        throw EvalError("OutOfBounds", "region [" + std::to_string(off[d]) + ", " +
                                           std::to_string(off[d] + ext[d]) + ") of '" + id +
                                           "' exceeds extent " +
                                           std::to_string(src.extents.at(d)));
    }
    TensorValue out = makeTensor(ext, src.elemType);
    out.kv = src.kv;
    std::int64_t flat = 0;
    forEachIndex(ext, [&](const std::vector<std::int64_t>& iv) {
      std::vector<std::int64_t> siv(iv.size());
      for (std::size_t d = 0; d < iv.size(); ++d) siv[d] = iv[d] + off[d];
      out.data[flat++] = src.at(siv);
    });
    return out;
  }

  static TensorValue squeeze(const TensorValue& t) {
    TensorValue out = t;
    std::vector<std::int64_t> ext;
    for (auto e : t.extents)
      if (e != 1) ext.push_back(e);
    out.extents = std::move(ext);
    return out;
  }

  // domainLo/domainHi restrict the first domain dimension ([lo, hi), hi=-1
  // meaning the full extent); used by the split-combine property check.
  std::vector<TensorValue> evalMultiFold(const MultiFoldNode& m, std::int64_t lo,
                                         std::int64_t hi) {
    auto ext = evalShape(m.domain);
    std::vector<TensorValue> accs;
    std::vector<std::vector<char>> written;
    for (const auto& a : m.accs) {
      TensorValue z = evalAccInit(a);
      if (opts.instrument && a.combine) sampleIdentity(z, *a.combine);
      written.emplace_back(opts.instrument && !a.combine ? z.count() : 0, 0);
      accs.push_back(std::move(z));
    }
    // Only the first dimension is range-restricted (split evaluation).
    if (!ext.empty() && hi >= 0) ext[0] = hi;
    std::vector<std::int64_t> start(ext.size(), 0);
    if (!ext.empty()) start[0] = lo;

    std::vector<std::int64_t> cur(ext.size(), 0);
    std::function<void(std::size_t)> rec = [&](std::size_t d) {
      if (d == ext.size()) {
        stepMultiFold(m, cur, accs, written);
        return;
      }
      for (std::int64_t i = start[d]; i < ext[d]; ++i) {
        cur[d] = i;
        rec(d + 1);
      }
    };
    rec(0);
    return accs;
  }

  void stepMultiFold(const MultiFoldNode& m, const std::vector<std::int64_t>& iv,
                     std::vector<TensorValue>& accs,
                     std::vector<std::vector<char>>& written) {
    Scope sc;
    for (std::size_t d = 0; d < m.binders.size(); ++d) bindIndex(m.binders[d], iv[d], sc);
    evalLets(m.lets, sc);
    for (std::size_t ai = 0; ai < m.accs.size(); ++ai) {
      const Accumulator& a = m.accs[ai];
      TensorValue& acc = accs[ai];
      std::vector<std::int64_t> loc, sl;
      for (const auto& l : a.loc) loc.push_back(evalExpr(l).asInt());
      for (const auto& s : a.sliceShape) sl.push_back(evalSize(s));
      for (std::size_t d = 0; d < loc.size(); ++d)
        if (loc[d] < 0 || loc[d] + sl[d] > acc.extents[d])
          throw EvalError("OutOfBounds",
                          "accumulator slice at " + std::to_string(loc[d]) + "+" +
                              std::to_string(sl[d]) + " exceeds extent " +
                              std::to_string(acc.extents[d]));
      TensorValue slice = squeeze(region(acc, loc, sl, "<acc>"));

      Scope usc;
      if (slice.extents.empty()) {
        bindEntry(a.sliceBinder, RtEntry(slice.data.at(0)), usc);
      } else {
        bindEntry(a.sliceBinder, RtEntry(slice), usc);
      }
      TensorValue result;
      {
        Scope lsc;
        evalLets(a.update.lets, lsc);
        if (a.update.result.isExpr()) {
          Value v = evalExpr(a.update.result.expr());
          result.extents = {};
          result.elemType = valueType(v);
          result.data = {std::move(v)};
        } else {
          result = evalSingle(a.update.result);
        }
        unwind(lsc);
      }
      unwind(usc);

      std::int64_t want = 1;
      for (auto e : sl) want *= e;
      if (result.count() != want)
        throw EvalError("OutOfBounds", "update produced " + std::to_string(result.count()) +
                                           " elements for a slice of " + std::to_string(want));
      // write back row-major into the slice region
      std::int64_t flat = 0;
      forEachIndex(sl, [&](const std::vector<std::int64_t>& siv) {
        std::vector<std::int64_t> aiv(siv.size());
        for (std::size_t d = 0; d < siv.size(); ++d) aiv[d] = siv[d] + loc[d];
        std::int64_t fi = acc.flatIndex(aiv);
        if (!written[ai].empty()) {
          if (written[ai][fi])
            throw EvalError("DisjointWriteViolation",
                            "location written twice in an unused-combine MultiFold");
          written[ai][fi] = 1;
        }
        acc.data[fi] = result.data[flat++];
      });
    }
    unwind(sc);
  }

  Value combineValues(const Combine& c, const Value& l, const Value& r) {
    Scope sc;
    bindEntry(c.lhs, RtEntry(l), sc);
    bindEntry(c.rhs, RtEntry(r), sc);
    Value out = evalExpr(c.body);
    unwind(sc);
    return out;
  }

  TensorValue evalGroupBy(const GroupByFoldNode& g) {
    std::int64_t n = evalSize(g.domain.at(0));
    Value z = evalExpr(g.init);
    if (opts.instrument) {
      TensorValue zt;
      zt.extents = {1};
      zt.elemType = valueType(z);
      zt.data = {z};
      sampleIdentity(zt, g.combine);
    }
    std::vector<std::pair<Value, Value>> buckets;  // first-occurrence order
    std::map<std::string, std::size_t> index;
    auto keyRepr = [](const Value& v) {
      std::string s;
      for (const auto& a : v.lanes) {
        std::visit(
            [&](auto x) {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, double>) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g|", x);
                s += buf;
              } else if constexpr (std::is_same_v<T, bool>) {
                s += x ? "T|" : "F|";
              } else {
                s += std::to_string(x) + "|";
              }
            },
            a);
      }
      return s;
    };

    std::optional<ScalarType> keyType;
    for (std::int64_t i = 0; i < n; ++i) {
      Scope sc;
      bindIndex(g.binders.at(0), i, sc);
      evalLets(g.lets, sc);
      if (g.leaf) {
        Value k = evalExpr(g.leaf->key);
        keyType = valueType(k);
        std::string kr = keyRepr(k);
        auto it = index.find(kr);
        if (it == index.end()) {
          index[kr] = buckets.size();
          buckets.push_back({k, z});
          it = index.find(kr);
        }
        Value cur = buckets[it->second].second;
        Scope usc;
        bindEntry(g.leaf->valBinder, RtEntry(cur), usc);
        Scope lsc;
        evalLets(g.leaf->update.lets, lsc);
        Value nv;
        if (g.leaf->update.result.isExpr()) nv = evalExpr(g.leaf->update.result.expr());
        else {
          TensorValue t = evalSingle(g.leaf->update.result);
          if (t.count() != 1) throw EvalError("OutOfBounds", "bucket update must be scalar");
          nv = t.data[0];
        }
        unwind(lsc);
        unwind(usc);
        buckets[index[kr]].second = nv;
      } else {
        TensorValue pairs = evalSingle(*g.merge);
        if (!pairs.kv) throw EvalError("UnboundId", "merge body must produce (key,value) pairs");
        ScalarType kt = pairs.elemType.elems.at(0);
        keyType = kt;
        int kw = kt.lanes();
        for (const auto& pv : pairs.data) {
          Value k, v;
          k.lanes.assign(pv.lanes.begin(), pv.lanes.begin() + kw);
          v.lanes.assign(pv.lanes.begin() + kw, pv.lanes.end());
          std::string kr = keyRepr(k);
          auto it = index.find(kr);
          if (it == index.end()) {
            index[kr] = buckets.size();
            buckets.push_back({k, v});
          } else {
            buckets[it->second].second = combineValues(g.combine, buckets[it->second].second, v);
          }
        }
      }
      unwind(sc);
    }

    TensorValue out;
    out.kv = true;
    out.extents = {(std::int64_t)buckets.size()};
    ScalarType vt = valueType(z);
    out.elemType = ScalarType::Tuple({keyType ? *keyType : ScalarType::Int(), vt});
    for (auto& [k, v] : buckets) {
      Value pair;
      pair.lanes = k.lanes;
      pair.lanes.insert(pair.lanes.end(), v.lanes.begin(), v.lanes.end());
      out.data.push_back(std::move(pair));
    }
    return out;
  }

  // ---- program -----------------------------------------------------------

  void unifyInputs(const Env& inputs) {
    for (const auto& in : prog.inputs) {
      auto it = inputs.find(in.id);
      if (it == inputs.end() || !it->second.isTensor())
        throw EvalError("UnboundId", "missing input '" + in.id + "'");
      const TensorValue& t = it->second.tensor();
      if (t.extents.size() != in.shape.size())
        throw EvalError("SignatureMismatch", "input '" + in.id + "' has arity " +
                                                 std::to_string(t.extents.size()) +
                                                 ", declared " +
                                                 std::to_string(in.shape.size()));
      for (std::size_t d = 0; d < in.shape.size(); ++d) {
        const SizeExpr& se = in.shape[d];
        if (se.op == SizeExpr::Op::Lit) {
          if (se.lit != t.extents[d])
            throw EvalError("SignatureMismatch", "input '" + in.id + "' extent " +
                                                     std::to_string(t.extents[d]) +
                                                     " != declared " + std::to_string(se.lit));
        } else if (se.op == SizeExpr::Op::Sym) {
          auto [it2, inserted] = sizes.insert({se.name, t.extents[d]});
          if (!inserted && it2->second != t.extents[d])
            throw EvalError("SignatureMismatch",
                            "size symbol '" + se.name + "' bound inconsistently");
        } else {
          // General extents on inputs: check against evaluated value later.
        }
      }
      Scope sc;  // inputs stay bound for the whole program
      bindEntry(in.id, it->second, sc);
      lens[in.id] = t.extents.empty() ? 0 : t.extents[0];
    }
  }

  void run() {
    for (const auto& b : prog.bindings) {
      Scope sc;  // program-scope bindings are never unwound
      if (b.ids.size() == 1 && b.value.isExpr()) {
        bindEntry(b.ids[0], RtEntry(evalExpr(b.value.expr())), sc);
        continue;
      }
      auto ts = evalMulti(b.value);
      if (ts.size() != b.ids.size())
        throw EvalError("SignatureMismatch", "binding arity mismatch at '" + b.ids[0] + "'");
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i].extents.size() == 1) lens[b.ids[i]] = ts[i].extents[0];
        bindEntry(b.ids[i], RtEntry(std::move(ts[i])), sc);
      }
    }
  }
};

bool checkIdentityImpl(const TensorValue& z, const Combine& c, int samples,
                       std::uint64_t seed, std::string* witness) {
  std::mt19937_64 rng(seed);
  Program dummy;
  Interp in(dummy, {});
  std::uniform_real_distribution<double> fd(-8.0, 8.0);
  std::uniform_int_distribution<std::int64_t> id(-50, 50);

  auto randomValue = [&](const ScalarType& t) {
    Value v;
    std::function<void(const ScalarType&)> gen = [&](const ScalarType& tt) {
      switch (tt.kind) {
        case ScalarType::Kind::Int: v.lanes.push_back(id(rng)); break;
        case ScalarType::Kind::Float: v.lanes.push_back(fd(rng)); break;
        case ScalarType::Kind::Bool: v.lanes.push_back((rng() & 1) != 0); break;
        case ScalarType::Kind::Tuple:
          for (const auto& e : tt.elems) gen(e);
          break;
      }
    };
    gen(t);
    return v;
  };

  for (int s = 0; s < samples; ++s) {
    const Value& ze = z.data.at(rng() % z.data.size());
    Value v = randomValue(z.elemType);
    Value l = in.combineValues(c, ze, v);
    Value r = in.combineValues(c, v, ze);
    if (!(l == v) || !(r == v)) {
      if (witness)
        *witness = "combine(z, " + v.str() + ") = " + l.str() + ", combine(" + v.str() +
                   ", z) = " + r.str();
      return false;
    }
  }
  return true;
}

}  // namespace

EvalResult evalProgram(const Program& p, const Env& inputs, const EvalOptions& opts) {
  Interp in(p, opts);
  in.types = scopeForInputs(p);
  in.unifyInputs(inputs);
  in.run();
  EvalResult res;
  for (const auto& o : p.outputs) {
    auto it = in.env.find(o);
    if (it == in.env.end()) throw EvalError("UnboundId", "output '" + o + "'");
    res.outputs[o] = it->second;
  }
  res.readCounts = in.reads;
  return res;
}

bool checkIdentity(const TensorValue& z, const Combine& c, int samples,
                   std::uint64_t seed, std::string* witness) {
  return checkIdentityImpl(z, c, samples, seed, witness);
}

bool tensorsEquivalent(const TensorValue& a, const TensorValue& b, double relTol,
                       std::string* why) {
  if (a.kv || b.kv) {
    // compare as key-indexed maps
    auto toMap = [&](const TensorValue& t) {
      std::map<std::string, Value> m;
      int kw = t.elemType.elems.at(0).lanes();
      for (const auto& pv : t.data) {
        Value k, v;
        k.lanes.assign(pv.lanes.begin(), pv.lanes.begin() + kw);
        v.lanes.assign(pv.lanes.begin() + kw, pv.lanes.end());
        m[k.str()] = v;
      }
      return m;
    };
    auto ma = toMap(a), mb = toMap(b);
    if (ma.size() != mb.size()) {
      if (why) *why = "bucket counts differ";
      return false;
    }
    for (const auto& [k, v] : ma) {
      auto it = mb.find(k);
      if (it == mb.end()) {
        if (why) *why = "missing bucket " + k;
        return false;
      }
      for (std::size_t l = 0; l < v.lanes.size(); ++l)
        if (!atomEquiv(v.lanes[l], it->second.lanes[l], relTol)) {
          if (why) *why = "bucket " + k + ": " + v.str() + " vs " + it->second.str();
          return false;
        }
    }
    return true;
  }
  if (a.extents != b.extents) {
    if (why) *why = "shapes differ";
    return false;
  }
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i].lanes.size() != b.data[i].lanes.size()) {
      if (why) *why = "tuple widths differ";
      return false;
    }
    for (std::size_t l = 0; l < a.data[i].lanes.size(); ++l)
      if (!atomEquiv(a.data[i].lanes[l], b.data[i].lanes[l], relTol)) {
        if (why)
          *why = "element " + std::to_string(i) + ": " + a.data[i].str() + " vs " +
                 b.data[i].str();
        return false;
      }
  }
  return true;
}

bool equivalent(const Program& p1, const Program& p2, const Env& inputs, double relTol,
                std::string* why) {
  if (p1.outputs.size() != p2.outputs.size())
    throw EvalError("SignatureMismatch", "programs have different output counts");
  if (p1.inputs.size() != p2.inputs.size())
    throw EvalError("SignatureMismatch", "programs have different input counts");
  EvalResult r1 = evalProgram(p1, inputs);
  EvalResult r2 = evalProgram(p2, inputs);
  for (std::size_t i = 0; i < p1.outputs.size(); ++i) {
    const RtEntry& a = r1.outputs.at(p1.outputs[i]);
    const RtEntry& b = r2.outputs.at(p2.outputs[i]);
    if (a.isTensor() != b.isTensor()) {
      if (why) *why = "output kind mismatch";
      return false;
    }
    if (a.isTensor()) {
      if (!tensorsEquivalent(a.tensor(), b.tensor(), relTol, why)) {
        if (why) *why = "output '" + p1.outputs[i] + "': " + *why;
        return false;
      }
    } else {
      for (std::size_t l = 0; l < a.scalar().lanes.size(); ++l)
        if (!atomEquiv(a.scalar().lanes[l], b.scalar().lanes[l], relTol)) {
          if (why) *why = "output '" + p1.outputs[i] + "' differs";
          return false;
        }
    }
  }
  return true;
}

std::vector<TensorValue> evalMultiFoldSplit(const Program& p, const std::string& bindingId,
                                            const Env& inputs, std::int64_t splitAt) {
  const Binding* b = p.findBinding(bindingId);
  if (!b || !b->value.isPattern())
    throw EvalError("UnboundId", "no pattern binding '" + bindingId + "'");
  const auto* m = std::get_if<MultiFoldNode>(&b->value.pattern().get().v);
  if (!m) throw EvalError("UnboundId", "'" + bindingId + "' is not a MultiFold");

  Interp in(p, {});
  in.types = scopeForInputs(p);
  in.unifyInputs(inputs);
  for (const auto& bb : p.bindings) {
    if (&bb == b) break;
    Interp::Scope sc;
    if (bb.ids.size() == 1 && bb.value.isExpr()) {
      in.bindEntry(bb.ids[0], RtEntry(in.evalExpr(bb.value.expr())), sc);
      continue;
    }
    auto ts = in.evalMulti(bb.value);
    for (std::size_t i = 0; i < ts.size(); ++i)
      in.bindEntry(bb.ids[i], RtEntry(std::move(ts[i])), sc);
  }
  auto left = in.evalMultiFold(*m, 0, splitAt);
  auto right = in.evalMultiFold(*m, splitAt, -1);
  std::vector<TensorValue> out;
  for (std::size_t ai = 0; ai < m->accs.size(); ++ai) {
    if (!m->accs[ai].combine)
      throw EvalError("UnboundId", "split evaluation requires a combine function");
    TensorValue merged = left[ai];
    for (std::size_t i = 0; i < merged.data.size(); ++i)
      merged.data[i] =
          in.combineValues(*m->accs[ai].combine, left[ai].data[i], right[ai].data[i]);
    out.push_back(std::move(merged));
  }
  return out;
}

}  // namespace ppl
