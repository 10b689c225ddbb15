#pragma once

#include <string>

#include "pplforge/ir/ir.hpp"

namespace ppl {

// Surface-syntax printer; parse(pretty(p)) is alpha-equivalent to p.
std::string pretty(const Program& p);
std::string pretty(const Node& n, int indent = 0);
std::string pretty(const Pattern& p, int indent = 0);
std::string pretty(const Expr& e);

}  // namespace ppl
