#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pplforge/ir/ir.hpp"

namespace ppl {

// Dense row-major tensor of scalar or tuple-of-scalar elements.
struct TensorValue {
  std::vector<std::int64_t> extents;
  ScalarType elemType;
  std::vector<Value> data;
  bool kv = false;  // (key, value) pairs from GroupByFold

  std::int64_t count() const {
    std::int64_t n = 1;
    for (auto e : extents) n *= e;
    return n;
  }
  std::int64_t flatIndex(const std::vector<std::int64_t>& idx) const;
  const Value& at(const std::vector<std::int64_t>& idx) const { return data[flatIndex(idx)]; }
  Value& at(const std::vector<std::int64_t>& idx) { return data[flatIndex(idx)]; }
  std::string str() const;
};

TensorValue makeTensor(std::vector<std::int64_t> extents, ScalarType elemType);

struct EvalError : std::runtime_error {
  std::string kind;  // OutOfBounds, UnboundId, NonIdentityInit, DivisionByZero,
                     // DisjointWriteViolation, SignatureMismatch
  EvalError(std::string k, const std::string& msg)
      : std::runtime_error(k + ": " + msg), kind(std::move(k)) {}
};

struct RtEntry {
  std::variant<TensorValue, Value> v;

  RtEntry() : v(Value{}) {}
  RtEntry(TensorValue t) : v(std::move(t)) {}
  RtEntry(Value s) : v(std::move(s)) {}
  bool isTensor() const { return std::holds_alternative<TensorValue>(v); }
  const TensorValue& tensor() const { return std::get<TensorValue>(v); }
  const Value& scalar() const { return std::get<Value>(v); }
};

using Env = std::map<std::string, RtEntry>;

struct EvalOptions {
  bool countReads = false;
  // Instrumented mode: samples inits against combines (NonIdentityInit) and
  // asserts each location of an unused-combine accumulator is written at
  // most once (DisjointWriteViolation).
  bool instrument = false;
  std::uint64_t instrumentSeed = 1;
};

struct EvalResult {
  Env outputs;
  std::map<std::string, std::int64_t> readCounts;  // per input array (CountReads)
};

EvalResult evalProgram(const Program& p, const Env& inputs, const EvalOptions& opts = {});

// c(z, v) == v == c(v, z) for `samples` random v per element type.
bool checkIdentity(const TensorValue& z, const Combine& c, int samples,
                   std::uint64_t seed, std::string* witness = nullptr);

// Elementwise output comparison; exact for int/bool, relative tolerance for
// float; GroupByFold outputs compared as key-indexed maps.
bool equivalent(const Program& p1, const Program& p2, const Env& inputs,
                double relTol = 1e-4, std::string* why = nullptr);

bool tensorsEquivalent(const TensorValue& a, const TensorValue& b, double relTol,
                       std::string* why = nullptr);

// Evaluates bindingId (a top-level MultiFold over a 1-D domain) by running
// the domain in two halves and merging the partial accumulators with the
// combine function. Used to property-check that the combine is semantically
// redundant with sequential accumulation.
std::vector<TensorValue> evalMultiFoldSplit(const Program& p, const std::string& bindingId,
                                            const Env& inputs, std::int64_t splitAt);

}  // namespace ppl
