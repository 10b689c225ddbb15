#include "pplforge/ir/ir.hpp"

#include <algorithm>
#include <stdexcept>

namespace ppl {

SizeExpr SizeExpr::Lit(std::int64_t v) {
  SizeExpr e;
  e.op = Op::Lit;
  e.lit = v;
  return e;
}

SizeExpr SizeExpr::Sym(std::string n) {
  SizeExpr e;
  e.op = Op::Sym;
  e.name = std::move(n);
  return e;
}

SizeExpr SizeExpr::Idx(std::string binder) {
  SizeExpr e;
  e.op = Op::Idx;
  e.name = std::move(binder);
  return e;
}

SizeExpr SizeExpr::Len(std::string arrayId) {
  SizeExpr e;
  e.op = Op::Len;
  e.name = std::move(arrayId);
  return e;
}

static SizeExpr mkBin(SizeExpr::Op op, SizeExpr a, SizeExpr b) {
  SizeExpr e;
  e.op = op;
  e.args = {std::move(a), std::move(b)};
  return e;
}

SizeExpr SizeExpr::Add(SizeExpr a, SizeExpr b) { return mkBin(Op::Add, std::move(a), std::move(b)); }
SizeExpr SizeExpr::Sub(SizeExpr a, SizeExpr b) { return mkBin(Op::Sub, std::move(a), std::move(b)); }
SizeExpr SizeExpr::Mul(SizeExpr a, SizeExpr b) { return mkBin(Op::Mul, std::move(a), std::move(b)); }
SizeExpr SizeExpr::CeilDiv(SizeExpr a, SizeExpr b) { return mkBin(Op::CeilDiv, std::move(a), std::move(b)); }
SizeExpr SizeExpr::Min(SizeExpr a, SizeExpr b) { return mkBin(Op::Min, std::move(a), std::move(b)); }

bool SizeExpr::operator==(const SizeExpr& o) const {
  if (op != o.op) return false;
  switch (op) {
    case Op::Lit: return lit == o.lit;
    case Op::Sym:
    case Op::Idx:
    case Op::Len: return name == o.name;
    default:
      if (args.size() != o.args.size()) return false;
      for (std::size_t i = 0; i < args.size(); ++i)
        if (!(args[i] == o.args[i])) return false;
      return true;
  }
}

std::int64_t SizeExpr::eval(const SizeBindings& sizes,
                            const std::map<std::string, std::int64_t>& idx,
                            const SizeBindings& lens) const {
  switch (op) {
    case Op::Lit: return lit;
    case Op::Sym: {
      auto it = sizes.find(name);
      if (it == sizes.end()) throw std::runtime_error("unbound size symbol: " + name);
      return it->second;
    }
    case Op::Idx: {
      auto it = idx.find(name);
      if (it == idx.end()) throw std::runtime_error("unbound index in size expression: " + name);
      return it->second;
    }
    case Op::Len: {
      auto it = lens.find(name);
      if (it != lens.end()) return it->second;
      auto is = sizes.find("len(" + name + ")");
      if (is != sizes.end()) return is->second;
      throw std::runtime_error("unbound dynamic length: len(" + name + ")");
    }
    case Op::Add: return args[0].eval(sizes, idx, lens) + args[1].eval(sizes, idx, lens);
    case Op::Sub: return args[0].eval(sizes, idx, lens) - args[1].eval(sizes, idx, lens);
    case Op::Mul: return args[0].eval(sizes, idx, lens) * args[1].eval(sizes, idx, lens);
    case Op::CeilDiv: {
      auto a = args[0].eval(sizes, idx, lens);
      auto b = args[1].eval(sizes, idx, lens);
      if (b <= 0) throw std::runtime_error("ceil-div by nonpositive extent");
      return (a + b - 1) / b;
    }
    case Op::Min:
      return std::min(args[0].eval(sizes, idx, lens), args[1].eval(sizes, idx, lens));
  }
  return 0;
}

std::optional<std::int64_t> SizeExpr::staticBound(const SizeBindings& sizes) const {
  switch (op) {
    case Op::Lit: return lit;
    case Op::Sym: {
      auto it = sizes.find(name);
      if (it != sizes.end()) return it->second;
      return std::nullopt;
    }
    case Op::Idx: return std::nullopt;
    case Op::Len: {
      auto it = sizes.find("len(" + name + ")");
      if (it != sizes.end()) return it->second;
      return std::nullopt;
    }
    case Op::Add: {
      auto a = args[0].staticBound(sizes), b = args[1].staticBound(sizes);
      if (a && b) return *a + *b;
      return std::nullopt;
    }
    case Op::Sub: {
      // Bound of a - b is at most the bound of a (extents are nonnegative).
      return args[0].staticBound(sizes);
    }
    case Op::Mul: {
      auto a = args[0].staticBound(sizes), b = args[1].staticBound(sizes);
      if (a && b) return *a * *b;
      return std::nullopt;
    }
    case Op::CeilDiv: {
      auto a = args[0].staticBound(sizes), b = args[1].staticBound(sizes);
      if (a && b && *b > 0) return (*a + *b - 1) / *b;
      return std::nullopt;
    }
    case Op::Min: {
      auto a = args[0].staticBound(sizes), b = args[1].staticBound(sizes);
      if (a && b) return std::min(*a, *b);
      if (a) return a;
      return b;
    }
  }
  return std::nullopt;
}

void SizeExpr::collectSyms(std::vector<std::string>& out) const {
  if (op == Op::Sym) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  for (const auto& a : args) a.collectSyms(out);
}

bool SizeExpr::referencesIdx() const {
  if (op == Op::Idx) return true;
  for (const auto& a : args)
    if (a.referencesIdx()) return true;
  return false;
}

SizeExpr normalizeSize(const SizeExpr& e) {
  SizeExpr r = e;
  for (auto& a : r.args) a = normalizeSize(a);
  auto allLit = [&]() {
    for (const auto& a : r.args)
      if (a.op != SizeExpr::Op::Lit) return false;
    return true;
  };
  switch (r.op) {
    case SizeExpr::Op::Add:
      if (allLit()) return SizeExpr::Lit(r.args[0].lit + r.args[1].lit);
      if (r.args[0].isLit(0)) return r.args[1];
      if (r.args[1].isLit(0)) return r.args[0];
      break;
    case SizeExpr::Op::Sub:
      if (allLit()) return SizeExpr::Lit(r.args[0].lit - r.args[1].lit);
      if (r.args[1].isLit(0)) return r.args[0];
      break;
    case SizeExpr::Op::Mul:
      if (allLit()) return SizeExpr::Lit(r.args[0].lit * r.args[1].lit);
      if (r.args[0].isLit(1)) return r.args[1];
      if (r.args[1].isLit(1)) return r.args[0];
      if (r.args[0].isLit(0) || r.args[1].isLit(0)) return SizeExpr::Lit(0);
      break;
    case SizeExpr::Op::CeilDiv:
      if (allLit() && r.args[1].lit > 0)
        return SizeExpr::Lit((r.args[0].lit + r.args[1].lit - 1) / r.args[1].lit);
      if (r.args[1].isLit(1)) return r.args[0];
      break;
    case SizeExpr::Op::Min:
      if (allLit()) return SizeExpr::Lit(std::min(r.args[0].lit, r.args[1].lit));
      if (r.args[0] == r.args[1]) return r.args[0];
      break;
    default:
      break;
  }
  return r;
}

std::string SizeExpr::str() const {
  auto paren = [](const SizeExpr& a) {
    bool atom = a.op == Op::Lit || a.op == Op::Sym || a.op == Op::Idx ||
                a.op == Op::Len || a.op == Op::Min;
    return atom ? a.str() : "(" + a.str() + ")";
  };
  switch (op) {
    case Op::Lit: return std::to_string(lit);
    case Op::Sym: return name;
    case Op::Idx: return name;
    case Op::Len: return "len(" + name + ")";
    case Op::Add: return paren(args[0]) + " + " + paren(args[1]);
    case Op::Sub: return paren(args[0]) + " - " + paren(args[1]);
    case Op::Mul: return paren(args[0]) + "*" + paren(args[1]);
    case Op::CeilDiv: return paren(args[0]) + " / " + paren(args[1]);
    case Op::Min: return "min(" + args[0].str() + ", " + args[1].str() + ")";
  }
  return "?";
}

std::string shapeStr(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += s[i].str();
  }
  return out + ")";
}

bool shapeEq(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(normalizeSize(a[i]) == normalizeSize(b[i]))) return false;
  return true;
}

std::optional<std::int64_t> shapeBoundWords(const Shape& s, const ScalarType& t,
                                            const SizeBindings& sizes) {
  std::int64_t prod = 1;
  for (const auto& e : s) {
    auto b = e.staticBound(sizes);
    if (!b) return std::nullopt;
    prod *= *b;
  }
  return prod * t.words();
}

}  // namespace ppl
