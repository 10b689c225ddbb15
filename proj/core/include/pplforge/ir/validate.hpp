#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pplforge/ir/ir.hpp"

namespace ppl {

struct Diagnostic {
  std::string code;     // e.g. "OneDimensionalityViolation"
  std::string path;     // node id within the program
  std::string message;
  std::string str() const { return code + " at " + path + ": " + message; }
};

// Inferred result of a Node: tensors carry a shape, scalars an empty one.
struct NodeInfo {
  Shape shape;
  ScalarType type;
  bool kv = false;          // (K,V) pairs produced by GroupByFold
  bool dynamicLen = false;  // extent only known at run time
  bool isScalar() const { return shape.empty(); }
};

class TypeScope {
 public:
  enum class Kind { Tensor, Scalar, Index };
  struct Entry {
    Kind kind;
    NodeInfo info;
  };

  void bindTensor(const std::string& id, NodeInfo info);
  void bindScalar(const std::string& id, ScalarType t);
  void bindIndex(const std::string& id);
  const Entry* find(const std::string& id) const;

 private:
  std::map<std::string, Entry> m_;
};

struct TypeError : std::runtime_error {
  std::string code;
  std::string path;
  TypeError(std::string c, std::string p, const std::string& msg)
      : std::runtime_error(msg), code(std::move(c)), path(std::move(p)) {}
};

// Scope with the program's inputs bound.
TypeScope scopeForInputs(const Program& p);

// Throwing inference; programs are expected to be validated first, so a
// throw after that indicates a compiler bug.
ScalarType inferExpr(const Expr& e, const TypeScope& scope, const std::string& path = "");
std::vector<NodeInfo> inferNode(const Node& n, const TypeScope& scope,
                                const std::string& path = "");
NodeInfo inferSingle(const Node& n, const TypeScope& scope, const std::string& path = "");
// Result type of a block in scalar position (Map bodies, updates of
// all-ones slices). Shape-(1,..,1) tensor results are accepted as scalars.
ScalarType inferScalarResult(const Block& b, const TypeScope& scope,
                             const std::string& path = "");

// Drop extent-1 dimensions (used when comparing update results to slices).
Shape squeezeShape(const Shape& s);

std::vector<Diagnostic> validate(const Program& p);

// The fold special case: every iteration updates the entire accumulator.
bool isFold(const MultiFoldNode& m);
bool isFold(const Pattern& p);

}  // namespace ppl
