#include "pplforge/text/parser.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "pplforge/ir/validate.hpp"
#include "pplforge/ir/walk.hpp"

namespace ppl {

namespace {

enum class Tok { End, Newline, Ident, Int, Float, Punct };

struct Token {
  Tok kind;
  std::string text;
  std::int64_t ival = 0;
  double fval = 0;
  int line = 1, col = 1;
};

std::vector<Token> lex(const std::string& src) {
  std::vector<Token> toks;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto push = [&](Tok k, std::string t, int l, int c) {
    Token tok;
    tok.kind = k;
    tok.text = std::move(t);
    tok.line = l;
    tok.col = c;
    toks.push_back(std::move(tok));
  };
  while (i < src.size()) {
    char ch = src[i];
    if (ch == '\n') {
      if (!toks.empty() && toks.back().kind != Tok::Newline)
        push(Tok::Newline, "\n", line, col);
      ++line;
      col = 1;
      ++i;
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      ++i;
      ++col;
      continue;
    }
    if (ch == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    int l = line, c = col;
    if (std::isalpha((unsigned char)ch) || ch == '_') {
      std::string id;
      while (i < src.size() && (std::isalnum((unsigned char)src[i]) || src[i] == '_')) {
        id += src[i++];
        ++col;
      }
      push(Tok::Ident, id, l, c);
      continue;
    }
    if (std::isdigit((unsigned char)ch)) {
      std::string num;
      bool isFloat = false;
      while (i < src.size() && std::isdigit((unsigned char)src[i])) {
        num += src[i++];
        ++col;
      }
      if (i + 1 < src.size() && src[i] == '.' && std::isdigit((unsigned char)src[i + 1])) {
        isFloat = true;
        num += src[i++];
        ++col;
        while (i < src.size() && std::isdigit((unsigned char)src[i])) {
          num += src[i++];
          ++col;
        }
      }
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        if (j < src.size() && std::isdigit((unsigned char)src[j])) {
          isFloat = true;
          num += src[i++];
          ++col;
          if (src[i] == '+' || src[i] == '-') {
            num += src[i++];
            ++col;
          }
          while (i < src.size() && std::isdigit((unsigned char)src[i])) {
            num += src[i++];
            ++col;
          }
        }
      }
      Token tok;
      tok.kind = isFloat ? Tok::Float : Tok::Int;
      tok.text = num;
      if (isFloat) tok.fval = std::stod(num);
      else tok.ival = std::stoll(num);
      tok.line = l;
      tok.col = c;
      toks.push_back(std::move(tok));
      continue;
    }
    if (src.compare(i, 2, "=>") == 0 || src.compare(i, 2, "==") == 0) {
      push(Tok::Punct, src.substr(i, 2), l, c);
      i += 2;
      col += 2;
      continue;
    }
    push(Tok::Punct, std::string(1, ch), l, c);
    ++i;
    ++col;
  }
  Token end;
  end.kind = Tok::End;
  end.line = line;
  end.col = col;
  toks.push_back(end);
  return toks;
}

enum class RefKind { Index, Scalar, Tensor, Auto };

struct ScopeEntry {
  std::string internal;
  RefKind kind;
};

struct Parser {
  std::vector<Token> toks;
  std::size_t pos = 0;
  std::vector<std::map<std::string, ScopeEntry>> scopes;
  NameGen names;
  std::map<std::string, Shape> inputShapes;
  int zerosCounter = 0;

  explicit Parser(const std::string& src) : toks(lex(src)) { scopes.emplace_back(); }

  [[noreturn]] void err(const std::string& msg) {
    const Token& t = toks[pos];
    throw ParseError(t.line, t.col, msg);
  }

  const Token& peek(int off = 0) {
    std::size_t p = pos;
    int seen = 0;
    while (p < toks.size()) {
      if (toks[p].kind == Tok::Newline) {
        ++p;
        continue;
      }
      if (seen == off) return toks[p];
      ++seen;
      ++p;
    }
    return toks.back();
  }

  const Token& cur() {
    skipNewlines();
    return toks[pos];
  }

  void skipNewlines() {
    while (toks[pos].kind == Tok::Newline) ++pos;
  }

  bool atLineEnd() { return toks[pos].kind == Tok::Newline || toks[pos].kind == Tok::End; }

  bool isPunct(const std::string& p, int off = 0) {
    const Token& t = peek(off);
    return t.kind == Tok::Punct && t.text == p;
  }

  bool isIdent(const std::string& id, int off = 0) {
    const Token& t = peek(off);
    return t.kind == Tok::Ident && t.text == id;
  }

  // current token, without newline skipping (same-line adjacency)
  bool isTight(const std::string& p) {
    return toks[pos].kind == Tok::Punct && toks[pos].text == p;
  }

  void expectPunct(const std::string& p) {
    skipNewlines();
    if (!isTight(p)) err("expected '" + p + "', got '" + toks[pos].text + "'");
    ++pos;
  }

  bool acceptPunct(const std::string& p) {
    skipNewlines();
    if (isTight(p)) {
      ++pos;
      return true;
    }
    return false;
  }

  std::string expectIdent() {
    skipNewlines();
    if (toks[pos].kind != Tok::Ident) err("expected identifier, got '" + toks[pos].text + "'");
    return toks[pos++].text;
  }

  const ScopeEntry* lookup(const std::string& name) {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) return &f->second;
    }
    return nullptr;
  }

  std::string define(const std::string& name, RefKind kind) {
    std::string internal = names.fresh(name);
    scopes.back()[name] = {internal, kind};
    return internal;
  }

  struct ScopeGuard {
    Parser& p;
    explicit ScopeGuard(Parser& pp) : p(pp) { p.scopes.emplace_back(); }
    ~ScopeGuard() { p.scopes.pop_back(); }
  };

  // ---- sizes ----

  SizeExpr parseSizeAtom() {
    skipNewlines();
    const Token& t = toks[pos];
    if (t.kind == Tok::Int) {
      ++pos;
      return SizeExpr::Lit(t.ival);
    }
    if (t.kind == Tok::Ident) {
      if (t.text == "min") {
        ++pos;
        expectPunct("(");
        SizeExpr a = parseSize();
        expectPunct(",");
        SizeExpr b = parseSize();
        expectPunct(")");
        return SizeExpr::Min(a, b);
      }
      if (t.text == "len") {
        ++pos;
        expectPunct("(");
        std::string id = expectIdent();
        const ScopeEntry* e = lookup(id);
        expectPunct(")");
        return SizeExpr::Len(e ? e->internal : id);
      }
      ++pos;
      const ScopeEntry* e = lookup(t.text);
      if (!e) return SizeExpr::Sym(t.text);
      if (e->kind == RefKind::Tensor) err("array '" + t.text + "' used in a size expression");
      return SizeExpr::Idx(e->internal);
    }
    if (t.kind == Tok::Punct && t.text == "(") {
      ++pos;
      SizeExpr s = parseSize();
      expectPunct(")");
      return s;
    }
    err("expected size expression");
  }

  SizeExpr parseSizeTerm() {
    SizeExpr lhs = parseSizeAtom();
    while (!atLineEnd() && (isTight("*") || isTight("/"))) {
      bool mul = isTight("*");
      ++pos;
      SizeExpr rhs = parseSizeAtom();
      lhs = mul ? SizeExpr::Mul(lhs, rhs) : SizeExpr::CeilDiv(lhs, rhs);
    }
    return lhs;
  }

  SizeExpr parseSize() {
    SizeExpr lhs = parseSizeTerm();
    while (!atLineEnd() && (isTight("+") || isTight("-"))) {
      bool add = isTight("+");
      ++pos;
      SizeExpr rhs = parseSizeTerm();
      lhs = add ? SizeExpr::Add(lhs, rhs) : SizeExpr::Sub(lhs, rhs);
    }
    return lhs;
  }

  Shape parseSizeList() {
    Shape s;
    s.push_back(parseSize());
    while (acceptPunct(",")) s.push_back(parseSize());
    return s;
  }

  // ---- expressions ----

  static bool patternKeyword(const std::string& id) {
    return id == "map" || id == "multiFold" || id == "fold" || id == "flatMap" ||
           id == "groupByFold" || id == "zeros" || id == "zerosi";
  }

  Expr parseExprAtom() {
    skipNewlines();
    const Token& t = toks[pos];
    if (t.kind == Tok::Int) {
      ++pos;
      return parsePostfix(constInt(t.ival));
    }
    if (t.kind == Tok::Float) {
      ++pos;
      return parsePostfix(constFloat(t.fval));
    }
    if (t.kind == Tok::Punct && t.text == "-") {
      ++pos;
      skipNewlines();
      const Token& n = toks[pos];
      if (n.kind == Tok::Int) {
        ++pos;
        return constInt(-n.ival);
      }
      if (n.kind == Tok::Float) {
        ++pos;
        return constFloat(-n.fval);
      }
      if (n.kind == Tok::Ident && n.text == "inf") {
        ++pos;
        return constFloat(-std::numeric_limits<double>::infinity());
      }
      err("unary '-' is only supported on numeric literals");
    }
    if (t.kind == Tok::Ident) {
      if (t.text == "true") {
        ++pos;
        return constBool(true);
      }
      if (t.text == "false") {
        ++pos;
        return constBool(false);
      }
      if (t.text == "inf") {
        ++pos;
        return constFloat(std::numeric_limits<double>::infinity());
      }
      if (t.text == "min" || t.text == "max") {
        std::string fn = t.text;
        ++pos;
        expectPunct("(");
        Expr a = parseExpr();
        expectPunct(",");
        Expr b = parseExpr();
        expectPunct(")");
        return parsePostfix(binOp(fn == "min" ? BinOpKind::Min : BinOpKind::Max, a, b));
      }
      if (t.text == "square") {
        ++pos;
        expectPunct("(");
        Expr a = parseExpr();
        expectPunct(")");
        return binOp(BinOpKind::Mul, a, a);
      }
      if (t.text == "if") return parseIfExpr();
      ++pos;
      const ScopeEntry* e = lookup(t.text);
      if (!e) err("unknown identifier '" + t.text + "'");
      if (isTight("(")) {
        if (e->kind == RefKind::Index || e->kind == RefKind::Scalar)
          err("'" + t.text + "' is not an array but is applied to indices");
        ++pos;
        std::vector<Expr> idx;
        idx.push_back(parseExpr());
        while (acceptPunct(",")) idx.push_back(parseExpr());
        expectPunct(")");
        return parsePostfix(arrayRead(e->internal, std::move(idx)));
      }
      if (e->kind == RefKind::Tensor) err("array '" + t.text + "' used as a scalar");
      if (e->kind == RefKind::Index) return indexRef(e->internal);
      return parsePostfix(varRef(e->internal));
    }
    if (t.kind == Tok::Punct && t.text == "(") {
      ++pos;
      Expr first = parseExpr();
      if (acceptPunct(",")) {
        std::vector<Expr> es{first};
        es.push_back(parseExpr());
        while (acceptPunct(",")) es.push_back(parseExpr());
        expectPunct(")");
        return parsePostfix(tupleMake(std::move(es)));
      }
      expectPunct(")");
      return parsePostfix(first);
    }
    err("expected expression, got '" + t.text + "'");
  }

  Expr parseIfExpr() {
    skipNewlines();
    ++pos;  // if
    expectPunct("(");
    Expr c = parseExpr();
    expectPunct(")");
    Expr t = parseExpr();
    skipNewlines();
    if (!isIdent("else")) err("expected 'else'");
    ++pos;
    Expr f = parseExpr();
    return ifExpr(c, t, f);
  }

  Expr parsePostfix(Expr e) {
    while (isTight(".")) {
      std::size_t save = pos;
      ++pos;
      const Token& t = toks[pos];
      if (t.kind == Tok::Ident && t.text.size() >= 2 && t.text[0] == '_' &&
          std::isdigit((unsigned char)t.text[1])) {
        int idx = std::stoi(t.text.substr(1)) - 1;
        ++pos;
        e = tupleProj(e, idx);
        continue;
      }
      pos = save;
      break;
    }
    return e;
  }

  Expr parseMul() {
    Expr lhs = parseExprAtom();
    while (!atLineEnd() && (isTight("*") || isTight("/"))) {
      bool mul = isTight("*");
      ++pos;
      lhs = binOp(mul ? BinOpKind::Mul : BinOpKind::Div, lhs, parseExprAtom());
    }
    return lhs;
  }

  Expr parseAdd() {
    Expr lhs = parseMul();
    while (!atLineEnd() && (isTight("+") || isTight("-"))) {
      bool add = isTight("+");
      ++pos;
      lhs = binOp(add ? BinOpKind::Add : BinOpKind::Sub, lhs, parseMul());
    }
    return lhs;
  }

  Expr parseExpr() {
    skipNewlines();
    if (isIdent("if")) return parseIfExpr();
    Expr lhs = parseAdd();
    while (!atLineEnd() && (isTight("<") || isTight(">") || isTight("=="))) {
      bool lt = isTight("<"), gt = isTight(">");
      ++pos;
      Expr rhs = parseAdd();
      if (gt) lhs = binOp(BinOpKind::Lt, rhs, lhs);  // a > b  ==  b < a
      else lhs = binOp(lt ? BinOpKind::Lt : BinOpKind::Eq, lhs, rhs);
    }
    return lhs;
  }

  // ---- values ----

  bool startsPattern() {
    skipNewlines();
    const Token& t = toks[pos];
    if (t.kind == Tok::Punct && t.text == "[") return true;
    if (t.kind != Tok::Ident) return false;
    if (patternKeyword(t.text)) return true;
    const ScopeEntry* e = lookup(t.text);
    if (e && e->kind == RefKind::Tensor) {
      if (isPunct(".", 1) && (isIdent("slice", 2) || isIdent("copy", 2))) return true;
      if (!isPunct("(", 1) && !isPunct(".", 1)) return true;  // bare reference
    }
    return false;
  }

  std::vector<std::string> parseBinderList() {
    std::vector<std::string> out;
    skipNewlines();
    if (acceptPunct("(")) {
      out.push_back(expectIdent());
      while (acceptPunct(",")) out.push_back(expectIdent());
      expectPunct(")");
    } else {
      out.push_back(expectIdent());
    }
    return out;
  }

  std::vector<std::string> defineBinders(const std::vector<std::string>& raw) {
    std::vector<std::string> internal;
    for (const auto& r : raw) internal.push_back(define(r, RefKind::Index));
    return internal;
  }

  std::vector<Binding> parseLets() {
    std::vector<Binding> lets;
    while (true) {
      skipNewlines();
      std::size_t save = pos;
      std::vector<std::string> ids;
      bool isLet = false;
      if (toks[pos].kind == Tok::Ident && !patternKeyword(toks[pos].text) &&
          isPunct("=", 1)) {
        ids.push_back(toks[pos].text);
        ++pos;
        skipNewlines();
        ++pos;  // '='
        isLet = true;
      } else if (isTight("(")) {
        ++pos;
        skipNewlines();
        bool ok = toks[pos].kind == Tok::Ident;
        if (ok) {
          ids.push_back(toks[pos].text);
          ++pos;
          while (ok && acceptPunct(",")) {
            skipNewlines();
            if (toks[pos].kind != Tok::Ident) {
              ok = false;
              break;
            }
            ids.push_back(toks[pos].text);
            ++pos;
          }
        }
        if (ok && ids.size() > 1 && acceptPunct(")")) {
          skipNewlines();
          if (isTight("=")) {
            ++pos;
            isLet = true;
          }
        }
        if (!isLet) pos = save;
      }
      if (!isLet) return lets;
      Node value = parseValue();
      std::vector<std::string> internal;
      for (const auto& id : ids)
        internal.push_back(define(id, value.isExpr() ? RefKind::Scalar : RefKind::Tensor));
      lets.push_back({internal, value});
    }
  }

  Node parseValue() {
    skipNewlines();
    if (isIdent("if")) {
      ++pos;
      expectPunct("(");
      Expr c = parseExpr();
      expectPunct(")");
      Node t = parseValue();
      skipNewlines();
      if (!isIdent("else")) err("expected 'else'");
      ++pos;
      Node f = parseValue();
      if (t.isExpr() && f.isExpr()) return Node(ifExpr(c, t.expr(), f.expr()));
      auto promote = [](Node n) {
        if (n.isExpr()) return Node(elemsP({n.expr()}));
        return n;
      };
      return Node(ifP(c, promote(t), promote(f)));
    }
    if (startsPattern()) return Node(parsePattern());
    return Node(parseExpr());
  }

  Pattern parsePattern() {
    skipNewlines();
    const Token& t = toks[pos];
    if (t.kind == Tok::Punct && t.text == "[") {
      ++pos;
      std::vector<Expr> es;
      skipNewlines();
      if (!isTight("]")) {
        es.push_back(parseExpr());
        while (acceptPunct(",")) es.push_back(parseExpr());
      }
      expectPunct("]");
      return elemsP(std::move(es));
    }
    if (t.kind != Tok::Ident) err("expected a pattern");
    if (t.text == "map") return parseMap();
    if (t.text == "multiFold") return parseMultiFold();
    if (t.text == "fold") return parseFold();
    if (t.text == "flatMap") return parseFlatMap();
    if (t.text == "groupByFold") return parseGroupByFold();
    if (t.text == "zeros" || t.text == "zerosi") return parseZeros(t.text == "zerosi");
    const ScopeEntry* e = lookup(t.text);
    if (!e || e->kind != RefKind::Tensor) err("expected a pattern, got '" + t.text + "'");
    ++pos;
    if (acceptPunct(".")) {
      std::string meth = expectIdent();
      if (meth == "slice") {
        expectPunct("(");
        std::vector<SliceDim> dims;
        do {
          skipNewlines();
          if (isTight("*")) {
            ++pos;
            dims.push_back({});
          } else {
            dims.push_back({parseExpr()});
          }
        } while (acceptPunct(","));
        expectPunct(")");
        return sliceP(e->internal, std::move(dims));
      }
      if (meth == "copy") {
        expectPunct("(");
        std::vector<CopyDim> dims;
        std::size_t d = 0;
        do {
          skipNewlines();
          if (isTight("*")) {
            ++pos;
            auto it = inputShapes.find(e->internal);
            if (it == inputShapes.end() || d >= it->second.size())
              err("'*' copy dimensions require an input array with a declared shape");
            dims.push_back({constInt(0), it->second[d]});
          } else {
            Expr off = parseExpr();
            expectPunct(":");
            SizeExpr ext = parseSize();
            dims.push_back({off, ext});
          }
          ++d;
        } while (acceptPunct(","));
        expectPunct(")");
        std::optional<int> reuse;
        skipNewlines();
        if (isIdent("reuse")) {
          ++pos;
          expectPunct("(");
          skipNewlines();
          if (toks[pos].kind != Tok::Int) err("reuse factor must be an integer");
          reuse = (int)toks[pos].ival;
          ++pos;
          expectPunct(")");
        }
        return arrayCopyP(e->internal, std::move(dims), reuse);
      }
      err("unknown array method '" + meth + "'");
    }
    return arrayRefP(e->internal);
  }

  Pattern parseZeros(bool isInt) {
    ++pos;
    expectPunct("(");
    Shape sh = parseSizeList();
    expectPunct(")");
    std::vector<std::string> binders;
    for (std::size_t i = 0; i < sh.size(); ++i)
      binders.push_back(names.fresh("zz" + std::to_string(zerosCounter++)));
    Block body;
    body.result = Node(isInt ? constInt(0) : constFloat(0.0));
    return mapP(sh, binders, body);
  }

  Pattern parseMap() {
    ++pos;
    expectPunct("(");
    Shape domain = parseSizeList();
    expectPunct(")");
    if (isTight("(")) {  // tolerated trailing range group
      ++pos;
      parseSizeList();
      expectPunct(")");
    }
    expectPunct("{");
    ScopeGuard g(*this);
    auto binders = defineBinders(parseBinderList());
    if (binders.size() != domain.size()) err("map binder count must match domain arity");
    expectPunct("=>");
    Block body;
    body.lets = parseLets();
    body.result = parseValue();
    expectPunct("}");
    return mapP(domain, binders, body);
  }

  Pattern parseFlatMap() {
    ++pos;
    expectPunct("(");
    Shape domain = parseSizeList();
    expectPunct(")");
    if (isTight("(")) {
      ++pos;
      parseSizeList();
      expectPunct(")");
    }
    expectPunct("{");
    ScopeGuard g(*this);
    auto binders = defineBinders(parseBinderList());
    expectPunct("=>");
    Block body;
    body.lets = parseLets();
    Node res = parseValue();
    if (res.isExpr()) res = Node(elemsP({res.expr()}));
    body.result = res;
    expectPunct("}");
    return flatMapP(domain, binders, body);
  }

  std::optional<Accumulator> tryParseAccSpec() {
    std::size_t save = pos;
    std::size_t scopeDepth = scopes.size();
    try {
      if (!acceptPunct("(")) return std::nullopt;
      std::vector<Expr> locs;
      skipNewlines();
      if (isTight("(")) {
        ++pos;
        locs.push_back(parseExpr());
        while (acceptPunct(",")) locs.push_back(parseExpr());
        expectPunct(")");
      } else {
        locs.push_back(parseExpr());
      }
      if (!acceptPunct(",")) {
        pos = save;
        return std::nullopt;
      }
      skipNewlines();
      if (toks[pos].kind != Tok::Ident || !isPunct("=>", 1)) {
        pos = save;
        return std::nullopt;
      }
      Accumulator acc;
      ScopeGuard g(*this);
      acc.sliceBinder = define(expectIdent(), RefKind::Auto);
      ++pos;  // '=>'
      skipNewlines();
      if (isTight("{")) {
        ++pos;
        acc.update.lets = parseLets();
        acc.update.result = parseValue();
        expectPunct("}");
      } else {
        acc.update.result = parseValue();
      }
      expectPunct(")");
      acc.loc = std::move(locs);
      return acc;
    } catch (const ParseError&) {
      pos = save;
      while (scopes.size() > scopeDepth) scopes.pop_back();
      return std::nullopt;
    }
  }

  Pattern parseMultiFold() {
    ++pos;
    expectPunct("(");
    Shape domain = parseSizeList();
    expectPunct(")");
    expectPunct("(");
    std::vector<Shape> ranges;
    do {
      skipNewlines();
      if (isTight("(")) {
        ++pos;
        ranges.push_back(parseSizeList());
        expectPunct(")");
      } else {
        ranges.push_back({parseSize()});
      }
    } while (acceptPunct(","));
    expectPunct(")");
    expectPunct("(");
    std::vector<Node> inits;
    inits.push_back(parseValue());
    while (acceptPunct(",")) inits.push_back(parseValue());
    expectPunct(")");
    if (inits.size() != ranges.size())
      err("multiFold has " + std::to_string(ranges.size()) + " ranges but " +
          std::to_string(inits.size()) + " inits");

    expectPunct("{");
    std::vector<Accumulator> accs;
    std::vector<std::string> binders;
    std::vector<Binding> lets;
    {
      ScopeGuard g(*this);
      binders = defineBinders(parseBinderList());
      expectPunct("=>");
      lets = parseLets();

      skipNewlines();
      std::size_t save = pos;
      bool parsedList = false;
      if (isTight("(")) {
        ++pos;
        auto first = tryParseAccSpec();
        if (first && acceptPunct(",")) {
          accs.push_back(std::move(*first));
          do {
            auto next = tryParseAccSpec();
            if (!next) err("expected accumulator update");
            accs.push_back(std::move(*next));
          } while (acceptPunct(","));
          expectPunct(")");
          parsedList = true;
        } else {
          pos = save;
          accs.clear();
        }
      }
      if (!parsedList) {
        auto one = tryParseAccSpec();
        if (!one) err("expected accumulator update '(location, binder => value)'");
        accs.push_back(std::move(*one));
      }
      if (accs.size() != ranges.size())
        err("multiFold has " + std::to_string(ranges.size()) + " ranges but " +
            std::to_string(accs.size()) + " updates");
      expectPunct("}");
    }

    for (std::size_t i = 0; i < accs.size(); ++i) {
      accs[i].range = ranges[i];
      accs[i].init = inits[i];
      skipNewlines();
      if (isTight("(") && isIdent("_", 1) && isPunct(")", 2)) {
        pos += 2;
        skipNewlines();
        ++pos;  // ')'
        accs[i].combine = std::nullopt;
      } else if (isTight("{")) {
        accs[i].combine = parseCombine();
      } else {
        err("expected a combine function '{ (a, b) => ... }' or '(_)'");
      }
    }
    return multiFoldP(domain, binders, lets, accs);
  }

  Combine parseCombine() {
    expectPunct("{");
    ScopeGuard g(*this);
    expectPunct("(");
    std::string a = define(expectIdent(), RefKind::Scalar);
    expectPunct(",");
    std::string b = define(expectIdent(), RefKind::Scalar);
    expectPunct(")");
    expectPunct("=>");
    Expr body = parseExpr();
    expectPunct("}");
    return {a, b, body};
  }

  Pattern parseFold() {
    ++pos;
    expectPunct("(");
    Shape domain = parseSizeList();
    expectPunct(")");
    expectPunct("(");
    Node init = parseValue();
    expectPunct(")");
    Shape range;
    if (init.isPattern()) {
      const auto* m = std::get_if<MapNode>(&init.pattern().get().v);
      if (!m) err("fold inits must be scalar expressions or zeros(...)");
      range = m->domain;
    } else {
      range = {SizeExpr::Lit(1)};
    }
    expectPunct("{");
    Accumulator acc;
    std::vector<std::string> binders;
    std::vector<Binding> lets;
    {
      ScopeGuard g(*this);
      binders = defineBinders(parseBinderList());
      expectPunct("=>");
      lets = parseLets();
      skipNewlines();
      if (toks[pos].kind != Tok::Ident || !isPunct("=>", 1))
        err("expected fold update 'acc => ...'");
      ScopeGuard g2(*this);
      acc.sliceBinder = define(expectIdent(), RefKind::Auto);
      ++pos;  // '=>'
      skipNewlines();
      if (isTight("{")) {
        ++pos;
        acc.update.lets = parseLets();
        acc.update.result = parseValue();
        expectPunct("}");
      } else {
        acc.update.result = parseValue();
      }
    }
    expectPunct("}");
    acc.range = range;
    acc.init = init;
    for (std::size_t i = 0; i < range.size(); ++i) acc.loc.push_back(constInt(0));
    acc.sliceShape = range;
    skipNewlines();
    if (isTight("(") && isIdent("_", 1) && isPunct(")", 2)) {
      pos += 2;
      skipNewlines();
      ++pos;
      acc.combine = std::nullopt;
    } else if (isTight("{")) {
      acc.combine = parseCombine();
    } else {
      err("expected a combine function after fold");
    }
    return multiFoldP(domain, binders, lets, {acc});
  }

  Pattern parseGroupByFold() {
    ++pos;
    expectPunct("(");
    Shape domain = parseSizeList();
    expectPunct(")");
    expectPunct("(");
    Expr init = parseExpr();
    expectPunct(")");
    expectPunct("{");
    std::optional<GroupByLeaf> leaf;
    std::optional<Node> merge;
    std::optional<Expr> pendingValueForm;
    std::vector<std::string> binders;
    std::vector<Binding> lets;
    {
      ScopeGuard g(*this);
      binders = defineBinders(parseBinderList());
      expectPunct("=>");
      lets = parseLets();
      skipNewlines();
      if (isTight("(")) {
        std::size_t save = pos;
        std::size_t depth = scopes.size();
        try {
          ++pos;
          Expr key = parseExpr();
          if (acceptPunct(",")) {
            skipNewlines();
            if (toks[pos].kind == Tok::Ident && isPunct("=>", 1)) {
              GroupByLeaf lf;
              ScopeGuard g2(*this);
              lf.valBinder = define(expectIdent(), RefKind::Scalar);
              ++pos;  // '=>'
              skipNewlines();
              if (isTight("{")) {
                ++pos;
                lf.update.lets = parseLets();
                lf.update.result = parseValue();
                expectPunct("}");
              } else {
                lf.update.result = parseValue();
              }
              lf.key = key;
              expectPunct(")");
              leaf = std::move(lf);
            } else {
              Expr v = parseExpr();
              expectPunct(")");
              GroupByLeaf lf;
              lf.key = key;
              leaf = std::move(lf);
              pendingValueForm = v;
            }
          } else {
            pos = save;
          }
        } catch (const ParseError&) {
          pos = save;
          while (scopes.size() > depth) scopes.pop_back();
        }
      }
      if (!leaf) merge = parseValue();
      expectPunct("}");
    }
    Combine comb = parseCombine();
    GroupByFoldNode gbf;
    gbf.domain = domain;
    gbf.binders = binders;
    gbf.init = init;
    gbf.combine = comb;
    gbf.lets = std::move(lets);
    if (leaf) {
      if (pendingValueForm) {
        std::string acc = names.fresh("v");
        std::map<std::string, Expr> sub;
        sub[comb.lhs] = varRef(acc);
        sub[comb.rhs] = *pendingValueForm;
        leaf->valBinder = acc;
        leaf->update.result = Node(substExpr(comb.body, sub));
      }
      gbf.leaf = std::move(leaf);
    } else {
      gbf.merge = std::move(merge);
    }
    return groupByFoldP(std::move(gbf));
  }

  // ---- program ----

  ScalarType parseScalarType() {
    skipNewlines();
    if (acceptPunct("(")) {
      std::vector<ScalarType> es;
      es.push_back(parseScalarType());
      while (acceptPunct(",")) es.push_back(parseScalarType());
      expectPunct(")");
      return ScalarType::Tuple(std::move(es));
    }
    std::string id = expectIdent();
    if (id == "int") return ScalarType::Int();
    if (id == "float") return ScalarType::Float();
    if (id == "bool") return ScalarType::Bool();
    err("unknown scalar type '" + id + "'");
  }

  Program parseProgram() {
    Program prog;
    while (true) {
      skipNewlines();
      if (toks[pos].kind == Tok::End) break;
      if (isIdent("input")) {
        ++pos;
        std::string id = expectIdent();
        expectPunct(":");
        ScalarType t = parseScalarType();
        expectPunct("[");
        Shape sh = parseSizeList();
        expectPunct("]");
        SizeClass sc = SizeClass::Dynamic;
        skipNewlines();
        if (isIdent("static")) {
          sc = SizeClass::Static;
          ++pos;
        } else if (isIdent("dynamic")) {
          ++pos;
        }
        std::string internal = define(id, RefKind::Tensor);
        inputShapes[internal] = sh;
        prog.inputs.push_back({internal, sh, t, sc});
        continue;
      }
      if (isIdent("output")) {
        ++pos;
        do {
          std::string id = expectIdent();
          const ScopeEntry* e = lookup(id);
          if (!e) err("output '" + id + "' is not defined");
          prog.outputs.push_back(e->internal);
        } while (acceptPunct(","));
        continue;
      }
      std::vector<std::string> ids;
      if (acceptPunct("(")) {
        ids.push_back(expectIdent());
        while (acceptPunct(",")) ids.push_back(expectIdent());
        expectPunct(")");
      } else {
        ids.push_back(expectIdent());
      }
      expectPunct("=");
      Node value = parseValue();
      std::vector<std::string> internal;
      for (const auto& id : ids)
        internal.push_back(define(id, value.isExpr() ? RefKind::Scalar : RefKind::Tensor));
      prog.bindings.push_back({internal, value});
    }
    if (prog.bindings.empty()) throw ParseError(1, 1, "EmptyProgram: no bindings found");
    return prog;
  }
};

// -----------------------------------------------------------------------------
// Slice-shape resolution: accumulator slice shapes come from the rank and
// shape of the update result. The update is tried with the slice binder bound
// at decreasing rank with placeholder extents until it type-checks.
// -----------------------------------------------------------------------------

struct SliceResolver {
  int placeholder = 0;

  Node node(const Node& n, const TypeScope& sc) {
    if (n.isExpr()) return n;
    return Node(pattern(n.pattern(), sc));
  }

  Block block(const Block& b, TypeScope sc, const std::vector<std::string>& binders) {
    for (const auto& bn : binders) sc.bindIndex(bn);
    Block out;
    for (const auto& let : b.lets) {
      Node v = node(let.value, sc);
      auto infos = inferNode(v, sc);
      out.lets.push_back({let.ids, v});
      for (std::size_t i = 0; i < let.ids.size(); ++i) {
        NodeInfo info = infos.at(i);
        if (info.isScalar()) sc.bindScalar(let.ids[i], info.type);
        else {
          if (info.dynamicLen && info.shape.size() == 1)
            info.shape = {SizeExpr::Len(let.ids[i])};
          sc.bindTensor(let.ids[i], info);
        }
      }
    }
    out.result = node(b.result, sc);
    return out;
  }

  Pattern pattern(const Pattern& p, const TypeScope& outer) {
    PatternNode out;
    out.strided = p.get().strided;
    out.v = std::visit(
        overloaded{
            [&](const MapNode& m) -> decltype(out.v) {
              return MapNode{m.domain, m.binders, block(m.body, outer, m.binders)};
            },
            [&](const MultiFoldNode& m) -> decltype(out.v) {
              MultiFoldNode r;
              r.domain = m.domain;
              r.binders = m.binders;
              TypeScope sc = outer;
              for (const auto& b : m.binders) sc.bindIndex(b);
              TypeScope inner = sc;
              for (const auto& let : m.lets) {
                Node v = node(let.value, inner);
                auto infos = inferNode(v, inner);
                r.lets.push_back({let.ids, v});
                for (std::size_t i = 0; i < let.ids.size(); ++i) {
                  NodeInfo info = infos.at(i);
                  if (info.isScalar()) inner.bindScalar(let.ids[i], info.type);
                  else {
                    if (info.dynamicLen && info.shape.size() == 1)
                      info.shape = {SizeExpr::Len(let.ids[i])};
                    inner.bindTensor(let.ids[i], info);
                  }
                }
              }
              for (const auto& a : m.accs) {
                Accumulator na = a;
                na.init = node(a.init, outer);
                NodeInfo zi = inferSingle(na.init, outer);
                if (a.sliceShape.empty()) {
                  na.update = resolveUpdate(a, zi.type, inner, &na.sliceShape);
                } else {
                  // fold sugar fixed the slice to the full range already
                  TypeScope upd = inner;
                  Shape sq = squeezeShape(a.sliceShape);
                  if (sq.empty()) {
                    upd.bindScalar(a.sliceBinder, zi.type);
                  } else {
                    NodeInfo info;
                    info.shape = sq;
                    info.type = zi.type;
                    upd.bindTensor(a.sliceBinder, info);
                  }
                  na.update = block(a.update, upd, {});
                }
                r.accs.push_back(std::move(na));
              }
              return r;
            },
            [&](const FlatMapNode& f) -> decltype(out.v) {
              return FlatMapNode{f.domain, f.binders, block(f.body, outer, f.binders)};
            },
            [&](const GroupByFoldNode& g) -> decltype(out.v) {
              GroupByFoldNode r = g;
              TypeScope sc = outer;
              for (const auto& b : g.binders) sc.bindIndex(b);
              r.lets.clear();
              for (const auto& let : g.lets) {
                Node v = node(let.value, sc);
                auto infos = inferNode(v, sc);
                r.lets.push_back({let.ids, v});
                for (std::size_t i = 0; i < let.ids.size(); ++i) {
                  NodeInfo info = infos.at(i);
                  if (info.isScalar()) sc.bindScalar(let.ids[i], info.type);
                  else {
                    if (info.dynamicLen && info.shape.size() == 1)
                      info.shape = {SizeExpr::Len(let.ids[i])};
                    sc.bindTensor(let.ids[i], info);
                  }
                }
              }
              if (g.leaf) {
                GroupByLeaf lf = *g.leaf;
                TypeScope usc = sc;
                usc.bindScalar(lf.valBinder, inferExpr(g.init, outer));
                lf.update = block(g.leaf->update, usc, {});
                r.leaf = std::move(lf);
              }
              if (g.merge) r.merge = node(*g.merge, sc);
              return r;
            },
            [&](const auto& other) -> decltype(out.v) { return other; },
        },
        p.get().v);
    return makePattern(std::move(out));
  }

  Block resolveUpdate(const Accumulator& a, const ScalarType& elemType, const TypeScope& sc,
                      Shape* sliceOut) {
    int rangeArity = (int)a.range.size();
    std::string perr;
    for (int rank = rangeArity; rank >= 0; --rank) {
      TypeScope upd = sc;
      Shape cand;
      std::vector<std::string> holes;
      if (rank == 0) {
        upd.bindScalar(a.sliceBinder, elemType);
      } else {
        NodeInfo info;
        for (int d = 0; d < rank; ++d) {
          std::string h = "?h" + std::to_string(placeholder++);
          holes.push_back(h);
          info.shape.push_back(SizeExpr::Sym(h));
        }
        info.type = elemType;
        upd.bindTensor(a.sliceBinder, info);
      }
      try {
        Block resolved = block(a.update, upd, {});
        // infer result shape
        TypeScope rsc = upd;
        for (const auto& let : resolved.lets) {
          auto infos = inferNode(let.value, rsc);
          for (std::size_t i = 0; i < let.ids.size(); ++i) {
            NodeInfo info = infos.at(i);
            if (info.isScalar()) rsc.bindScalar(let.ids[i], info.type);
            else {
              if (info.dynamicLen && info.shape.size() == 1)
                info.shape = {SizeExpr::Len(let.ids[i])};
              rsc.bindTensor(let.ids[i], info);
            }
          }
        }
        Shape resultShape;
        if (resolved.result.isExpr()) {
          inferExpr(resolved.result.expr(), rsc);
        } else {
          NodeInfo info = inferSingle(resolved.result, rsc);
          resultShape = squeezeShape(info.shape);
        }
        if ((int)resultShape.size() != rank) continue;
        bool hasHole = false;
        for (const auto& e : resultShape) {
          std::vector<std::string> syms;
          e.collectSyms(syms);
          for (const auto& s : syms)
            if (!s.empty() && s[0] == '?') hasHole = true;
        }
        if (hasHole) continue;
        Shape slice;
        for (int d = 0; d < rangeArity - rank; ++d) slice.push_back(SizeExpr::Lit(1));
        for (const auto& e : resultShape) slice.push_back(e);
        *sliceOut = slice;
        return resolved;
      } catch (const TypeError& e) {
        perr = e.what();
        continue;
      }
    }
    throw TypeError("SliceInference", a.sliceBinder,
                    "could not infer an accumulator slice shape: " + perr);
  }
};

Program resolveSliceShapes(Program prog) {
  SliceResolver r;
  TypeScope sc = scopeForInputs(prog);
  std::vector<Binding> out;
  for (const auto& b : prog.bindings) {
    Node v = r.node(b.value, sc);
    auto infos = inferNode(v, sc);
    out.push_back({b.ids, v});
    for (std::size_t i = 0; i < b.ids.size(); ++i) {
      NodeInfo info = infos.at(i);
      if (info.isScalar()) sc.bindScalar(b.ids[i], info.type);
      else {
        if (info.dynamicLen && info.shape.size() == 1) info.shape = {SizeExpr::Len(b.ids[i])};
        sc.bindTensor(b.ids[i], info);
      }
    }
  }
  prog.bindings = std::move(out);
  return prog;
}

}  // namespace

Program parse(const std::string& source, const std::string&) {
  Parser p(source);
  Program prog = p.parseProgram();
  try {
    return resolveSliceShapes(std::move(prog));
  } catch (const TypeError& e) {
    throw ParseError(0, 0, std::string(e.what()) + " (while resolving '" + e.path + "')");
  }
}

Program parseFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, 0, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace ppl
