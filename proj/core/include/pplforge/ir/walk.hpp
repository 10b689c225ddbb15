#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>

#include "pplforge/ir/ir.hpp"

// Tree utilities shared by validation, interpretation, and rewriting.

namespace ppl {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Identifiers referenced by a (sub)tree that are not bound inside it.
std::set<std::string> freeIds(const Node& n);
std::set<std::string> freeIds(const Expr& e);
std::set<std::string> freeIds(const Pattern& p);

// Substitute expressions for free IndexRef/VarRef occurrences by name.
// Identifiers are globally unique within a program, so no capture handling.
Expr substExpr(const Expr& e, const std::map<std::string, Expr>& sub);
Node substNode(const Node& n, const std::map<std::string, Expr>& sub);
Block substBlock(const Block& b, const std::map<std::string, Expr>& sub);
SizeExpr substSize(const SizeExpr& s, const std::map<std::string, Expr>& sub);

// Rename free array/tensor references (ArrayRead targets, copy/slice sources,
// ArrayRef) by name.
Node renameArrays(const Node& n, const std::map<std::string, std::string>& ren);

// Deep copy with every bound identifier renamed to a fresh name.
class NameGen {
 public:
  explicit NameGen(const std::set<std::string>& used = {}) : used_(used) {}
  std::string fresh(const std::string& base);
  void reserve(const std::string& name) { used_.insert(name); }

 private:
  std::set<std::string> used_;
};

// All identifiers defined anywhere in a program (inputs, bindings, binders).
std::set<std::string> allBoundIds(const Program& p);

Node refreshBinders(const Node& n, NameGen& gen);

// Apply fn to every Pattern in the program (bindings and nested bodies),
// outermost first; used for searches and diagnostics.
void forEachPattern(const Program& p,
                    const std::function<void(const Pattern&, const std::string& path)>& fn);

}  // namespace ppl
