#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pplforge/ir/ir.hpp"

namespace ppl {

struct TileConfig {
  std::map<std::string, std::int64_t> tiles;  // dimension symbol -> tile size
  std::int64_t onChipCapacity = 16384;        // words
  std::int64_t cacheWords = 96;               // per-cache capacity (one burst)
};

struct TransformError : std::runtime_error {
  std::string code;  // e.g. UnknownDimension
  TransformError(std::string c, const std::string& msg)
      : std::runtime_error(c + ": " + msg), code(std::move(c)) {}
};

// Pass 1: partition every pattern whose domain names a tiled dimension into
// a strided outer pattern over tile counts and an inner pattern over a
// min-guarded tile. Oracle-equivalent to the input.
Program stripMine(const Program& p, const TileConfig& cfg);

// Pass 2: rewrite affine accesses to off-chip arrays inside tile scopes into
// reads of explicit ArrayCopy tiles; overlapping footprints get a reuse tag;
// non-affine reads are marked for cache generation.
Program localizeTiles(const Program& p, const TileConfig& cfg, const SizeBindings& sizes);

Program cse(const Program& p);
Program codeMotion(const Program& p);

// Moves strided patterns out of unstrided ones (to a fixpoint).
Program interchange(const Program& p);

// Splits imperfectly nested bodies so interior reductions become perfectly
// nested, when the materialized intermediate fits on chip; then interchanges.
Program splitAndInterchange(const Program& p, const TileConfig& cfg, const SizeBindings& sizes);

namespace transform_detail {
// Rule 1 at the first matching site (innermost first); identity when none.
Program interchangeRule1Once(const Program& p, bool* applied = nullptr);
// Exact inverse of rule 1.
Program undoRule1Once(const Program& p, bool* applied = nullptr);
// Split only (no interchange), for tests.
Program splitOnly(const Program& p, const TileConfig& cfg, const SizeBindings& sizes);
}  // namespace transform_detail

std::vector<std::string> defaultPasses(bool interchangeEnabled = true);

// Runs passes by name: strip-mine, localize, cse, code-motion,
// split-interchange, interchange. Unknown names raise TransformError.
Program runPasses(const Program& p, const std::vector<std::string>& passes,
                  const TileConfig& cfg, const SizeBindings& sizes,
                  std::vector<std::pair<std::string, Program>>* trace = nullptr);

}  // namespace ppl
