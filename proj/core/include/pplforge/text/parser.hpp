#pragma once

#include <stdexcept>
#include <string>

#include "pplforge/ir/ir.hpp"

namespace ppl {

struct ParseError : std::runtime_error {
  int line = 0, col = 0;
  ParseError(int l, int c, const std::string& msg)
      : std::runtime_error(std::to_string(l) + ":" + std::to_string(c) + ": " + msg),
        line(l),
        col(c) {}
};

// Parses PPL source text. Binder and let names are made globally unique;
// the original spelling is kept where possible. Throws ParseError.
Program parse(const std::string& source, const std::string& filename = "<input>");

Program parseFile(const std::string& path);

}  // namespace ppl
