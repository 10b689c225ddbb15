#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <map>
#include <variant>
#include <vector>

// Parallel-pattern IR: scalar types, symbolic sizes, scalar expressions,
// pattern nodes, and whole programs. All nodes are immutable after
// construction; rewriting builds new trees.

namespace ppl {

// ---------------------------------------------------------------------------
// Scalar element types
// ---------------------------------------------------------------------------

struct ScalarType {
  enum class Kind { Int, Float, Bool, Tuple };
  Kind kind = Kind::Float;
  std::vector<ScalarType> elems;  // Kind::Tuple only

  static ScalarType Int() { return {Kind::Int, {}}; }
  static ScalarType Float() { return {Kind::Float, {}}; }
  static ScalarType Bool() { return {Kind::Bool, {}}; }
  static ScalarType Tuple(std::vector<ScalarType> es) {
    return {Kind::Tuple, std::move(es)};
  }

  bool operator==(const ScalarType& o) const;
  bool operator!=(const ScalarType& o) const { return !(*this == o); }

  bool isTuple() const { return kind == Kind::Tuple; }
  // Number of flattened scalar lanes (1 for non-tuples).
  int lanes() const;
  // Element width in bits: Int/Float 32, Bool 1, tuples sum members.
  int bits() const;
  // Storage words per element (32-bit words, rounded up).
  std::int64_t words() const { return (bits() + 31) / 32; }
  // Flattened lane offset/width of tuple member i.
  int laneOffset(int i) const;
  std::string str() const;
};

// ---------------------------------------------------------------------------
// Runtime scalar values (flattened tuples)
// ---------------------------------------------------------------------------

using ScalarAtom = std::variant<std::int64_t, double, bool>;

struct Value {
  std::vector<ScalarAtom> lanes;

  Value() = default;
  explicit Value(ScalarAtom a) : lanes{a} {}
  static Value ofInt(std::int64_t v) { return Value(ScalarAtom{v}); }
  static Value ofFloat(double v) { return Value(ScalarAtom{v}); }
  static Value ofBool(bool v) { return Value(ScalarAtom{v}); }

  bool operator==(const Value& o) const { return lanes == o.lanes; }
  std::int64_t asInt() const { return std::get<std::int64_t>(lanes.at(0)); }
  double asFloat() const { return std::get<double>(lanes.at(0)); }
  bool asBool() const { return std::get<bool>(lanes.at(0)); }
  std::string str() const;
};

// Zero/identity-free default value of a type (0 / 0.0 / false, per lane).
Value zeroValue(const ScalarType& t);

// ---------------------------------------------------------------------------
// Symbolic sizes
// ---------------------------------------------------------------------------

using SizeBindings = std::map<std::string, std::int64_t>;

// Extent expression: literals, size symbols ("n"), loop-binder references
// (min guards of inner tile domains), and +,-,*,ceil-div,min arithmetic.
struct SizeExpr {
  enum class Op { Lit, Sym, Idx, Len, Add, Sub, Mul, CeilDiv, Min };
  Op op = Op::Lit;
  std::int64_t lit = 0;      // Lit
  std::string name;          // Sym: size symbol; Idx: binder name; Len: array id
  std::vector<SizeExpr> args;

  static SizeExpr Lit(std::int64_t v);
  static SizeExpr Sym(std::string n);
  static SizeExpr Idx(std::string binder);
  static SizeExpr Len(std::string arrayId);
  static SizeExpr Add(SizeExpr a, SizeExpr b);
  static SizeExpr Sub(SizeExpr a, SizeExpr b);
  static SizeExpr Mul(SizeExpr a, SizeExpr b);
  static SizeExpr CeilDiv(SizeExpr a, SizeExpr b);
  static SizeExpr Min(SizeExpr a, SizeExpr b);

  bool isLit(std::int64_t v) const { return op == Op::Lit && lit == v; }
  bool operator==(const SizeExpr& o) const;

  // Evaluate with size symbols, current loop indices, and dynamic lengths.
  std::int64_t eval(const SizeBindings& sizes,
                    const std::map<std::string, std::int64_t>& idx = {},
                    const SizeBindings& lens = {}) const;
  // Largest value the extent can take, if derivable. Symbols resolve through
  // `sizes` when provided; Idx references bound only via min() guards.
  std::optional<std::int64_t> staticBound(const SizeBindings& sizes = {}) const;
  void collectSyms(std::vector<std::string>& out) const;
  bool referencesIdx() const;
  std::string str() const;
};

SizeExpr normalizeSize(const SizeExpr& e);

using Shape = std::vector<SizeExpr>;

std::string shapeStr(const Shape& s);
bool shapeEq(const Shape& a, const Shape& b);
std::optional<std::int64_t> shapeBoundWords(const Shape& s, const ScalarType& t,
                                            const SizeBindings& sizes);

// ---------------------------------------------------------------------------
// Scalar expressions
// ---------------------------------------------------------------------------

enum class BinOpKind { Add, Sub, Mul, Div, Lt, Eq, Min, Max };

const char* binOpName(BinOpKind k);

struct ExprNode;

class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
  const ExprNode& get() const { return *node_; }
  const ExprNode* raw() const { return node_.get(); }
  bool valid() const { return node_ != nullptr; }

 private:
  std::shared_ptr<const ExprNode> node_;
};

struct ConstE { Value v; ScalarType type; };
struct IndexRefE { std::string name; };       // loop-binder dimension
struct VarRefE { std::string name; };         // let-bound scalar / lambda param
struct ArrayReadE {
  std::string array;
  std::vector<Expr> indices;
  bool nonAffine = false;  // marked by tile localization
};
struct BinOpE { BinOpKind op; Expr lhs, rhs; };
struct IfE { Expr cond, thenE, elseE; };
struct TupleMakeE { std::vector<Expr> elems; };
struct TupleProjE { Expr tuple; int index; };
struct LetE { std::string id; Expr bound, body; };

struct ExprNode {
  std::variant<ConstE, IndexRefE, VarRefE, ArrayReadE, BinOpE, IfE, TupleMakeE,
               TupleProjE, LetE>
      v;
};

Expr makeConst(Value v, ScalarType t);
Expr constInt(std::int64_t v);
Expr constFloat(double v);
Expr constBool(bool v);
Expr indexRef(const std::string& name);
Expr varRef(const std::string& name);
Expr arrayRead(const std::string& arr, std::vector<Expr> idx, bool nonAffine = false);
Expr binOp(BinOpKind k, Expr a, Expr b);
Expr ifExpr(Expr c, Expr t, Expr e);
Expr tupleMake(std::vector<Expr> es);
Expr tupleProj(Expr t, int i);
Expr letExpr(const std::string& id, Expr bound, Expr body);

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

struct PatternNode;

class Pattern {
 public:
  Pattern() = default;
  explicit Pattern(std::shared_ptr<const PatternNode> n) : node_(std::move(n)) {}
  const PatternNode& get() const { return *node_; }
  const PatternNode* raw() const { return node_.get(); }
  bool valid() const { return node_ != nullptr; }

 private:
  std::shared_ptr<const PatternNode> node_;
};

// A value producer: scalar expression or tensor pattern.
struct Node {
  std::variant<Expr, Pattern> v;

  Node() : v(Expr{}) {}
  Node(Expr e) : v(std::move(e)) {}
  Node(Pattern p) : v(std::move(p)) {}
  bool isExpr() const { return std::holds_alternative<Expr>(v); }
  bool isPattern() const { return std::holds_alternative<Pattern>(v); }
  const Expr& expr() const { return std::get<Expr>(v); }
  const Pattern& pattern() const { return std::get<Pattern>(v); }
};

struct Binding {
  std::vector<std::string> ids;  // >1 only for multi-accumulator MultiFolds
  Node value;
};

struct Block {
  std::vector<Binding> lets;
  Node result;
};

// Elementwise combine on accumulator elements: (lhs, rhs) => body.
struct Combine {
  std::string lhs, rhs;
  Expr body;
};

struct Accumulator {
  Shape range;
  Node init;                       // produces V_range; identity of `combine`
  std::optional<Combine> combine;  // nullopt = unused "_" (disjoint writes)
  std::vector<Expr> loc;           // element offsets, arity = range arity
  Shape sliceShape;                //arity = range arity
  std::string sliceBinder;         // bound to the current accumulator slice
  Block update;                    // produces the new slice
};

struct MapNode {
  Shape domain;
  std::vector<std::string> binders;  // one name per domain dimension
  Block body;                        // scalar result per index
};

struct MultiFoldNode {
  Shape domain;
  std::vector<std::string> binders;
  std::vector<Binding> lets;  // shared per-index work
  std::vector<Accumulator> accs;
};

struct FlatMapNode {
  Shape domain;  // must be one-dimensional (checked by validate)
  std::vector<std::string> binders;
  Block body;  // produces a 1-D segment per index
};

struct GroupByLeaf {
  Expr key;
  std::string valBinder;
  Block update;  // scalar V -> V
};

struct GroupByFoldNode {
  Shape domain;  // must be one-dimensional (checked by validate)
  std::vector<std::string> binders;
  Expr init;        // per-bucket initial value (identity of combine)
  Combine combine;  // scalar (V,V) -> V
  std::vector<Binding> lets;
  // Exactly one of:
  std::optional<GroupByLeaf> leaf;  // (key, update) per index
  std::optional<Node> merge;        // (K,V)_1 collection merged bucket-wise
};

struct CopyDim {
  Expr offset;
  SizeExpr extent;
};

struct ArrayCopyNode {
  std::string source;
  std::vector<CopyDim> dims;
  std::optional<int> reuse;  // >= 2 when footprints of adjacent tiles overlap
};

struct SliceDim {
  std::optional<Expr> fixed;  // nullopt = keep whole dimension
};

struct SliceNode {
  std::string source;
  std::vector<SliceDim> dims;
};

struct ArrayRefNode { std::string name; };

struct ElemsNode { std::vector<Expr> elems; };  // 1-D literal, may be empty

struct IfNode {
  Expr cond;
  Node thenN, elseN;
};

struct PatternNode {
  bool strided = false;  // tile-count loop introduced by strip mining
  std::variant<MapNode, MultiFoldNode, FlatMapNode, GroupByFoldNode,
               ArrayCopyNode, SliceNode, ArrayRefNode, ElemsNode, IfNode>
      v;
};

Pattern makePattern(PatternNode n);
Pattern mapP(Shape domain, std::vector<std::string> binders, Block body);
Pattern multiFoldP(Shape domain, std::vector<std::string> binders,
                   std::vector<Binding> lets, std::vector<Accumulator> accs,
                   bool strided = false);
Pattern flatMapP(Shape domain, std::vector<std::string> binders, Block body,
                 bool strided = false);
Pattern groupByFoldP(GroupByFoldNode n);
Pattern arrayCopyP(std::string source, std::vector<CopyDim> dims,
                   std::optional<int> reuse = std::nullopt);
Pattern sliceP(std::string source, std::vector<SliceDim> dims);
Pattern arrayRefP(std::string name);
Pattern elemsP(std::vector<Expr> es);
Pattern ifP(Expr cond, Node t, Node e);
Pattern withStrided(const Pattern& p, bool strided);

// ---------------------------------------------------------------------------
// Programs
// ---------------------------------------------------------------------------

enum class SizeClass { Static, Dynamic };

struct InputDecl {
  std::string id;
  Shape shape;
  ScalarType type;
  SizeClass sizeClass = SizeClass::Dynamic;
};

struct Program {
  std::vector<InputDecl> inputs;
  std::vector<Binding> bindings;
  std::vector<std::string> outputs;

  const InputDecl* findInput(const std::string& id) const;
  const Binding* findBinding(const std::string& id) const;
};

}  // namespace ppl
