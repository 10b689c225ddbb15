#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pplforge/ir/ir.hpp"

namespace ppl {

// Canonical text form: binders and block-local lets are renamed positionally
// and independent lets are ordered canonically, so two trees have the same
// canonical text iff they are equal up to binder renaming and reordering of
// independent bindings.
std::string canonicalText(const Node& n);
std::string canonicalText(const Pattern& p);
std::string canonicalText(const Program& p);

std::uint64_t structuralHash(const Node& n);
std::uint64_t structuralHash(const Pattern& p);

bool alphaEqual(const Node& a, const Node& b);
bool alphaEqual(const Pattern& a, const Pattern& b);
bool alphaEqual(const Program& a, const Program& b);

// Use-def graph over top-level ids (inputs and binding ids).
struct DepGraph {
  // uses[b] = ids that binding b reads (directly or in nested bodies).
  std::map<std::string, std::set<std::string>> uses;
  // users[a] = binding ids that read a.
  std::map<std::string, std::set<std::string>> users;

  bool hasEdge(const std::string& def, const std::string& use) const {
    auto it = users.find(def);
    return it != users.end() && it->second.count(use) > 0;
  }
};

DepGraph deps(const Program& p);

}  // namespace ppl
