// Temporary development smoke checks; superseded by the doctest suites.
#include <cstdio>
#include <iostream>

#include "pplforge/interp/interp.hpp"
#include "pplforge/ir/structural.hpp"
#include "pplforge/ir/validate.hpp"
#include "pplforge/text/parser.hpp"
#include "pplforge/text/printer.hpp"

using namespace ppl;

static TensorValue vec(std::vector<double> xs) {
  TensorValue t = makeTensor({(std::int64_t)xs.size()}, ScalarType::Float());
  for (std::size_t i = 0; i < xs.size(); ++i) t.data[i] = Value::ofFloat(xs[i]);
  return t;
}

int main() {
  const char* src = R"(
input x : float[d] dynamic

y = map(d){ i => 2.0*x(i) }
s = fold(d)(0.0){ i => acc => acc + x(i) }{ (a, b) => a + b }
rs = multiFold(d)(d)(zeros(d)){ i => (i, acc => acc + x(i)) }{ (a, b) => a + b }
pos = flatMap(d){ i => if (x(i) > 0.0) x(i) else [] }

output y, s, rs, pos
)";
  Program p = parse(src);
  auto diags = validate(p);
  for (auto& d : diags) std::cout << "DIAG " << d.str() << "\n";
  if (!diags.empty()) return 1;

  std::string printed = pretty(p);
  std::cout << printed << "\n";
  Program p2 = parse(printed);
  if (!alphaEqual(p, p2)) {
    std::cout << "ROUNDTRIP MISMATCH\n--- first:\n" << canonicalText(p)
              << "--- second:\n" << canonicalText(p2) << "\n";
    return 1;
  }

  Env in;
  in["x"] = RtEntry(vec({1, -2, 3}));
  EvalOptions opts;
  opts.countReads = true;
  auto r = evalProgram(p, in, opts);
  std::cout << "y   = " << r.outputs.at("y").tensor().str() << "\n";
  std::cout << "s   = " << r.outputs.at("s").tensor().str() << "\n";
  std::cout << "rs  = " << r.outputs.at("rs").tensor().str() << "\n";
  std::cout << "pos = " << r.outputs.at("pos").tensor().str() << "\n";
  std::cout << "reads(x) = " << r.readCounts["x"] << "\n";

  // histogram
  const char* hsrc = R"(
input h : int[d] dynamic
buckets = groupByFold(d)(0){ i => (h(i) / 10, 1) }{ (a, b) => a + b }
output buckets
)";
  Program hp = parse(hsrc);
  auto hd = validate(hp);
  for (auto& d : hd) std::cout << "HDIAG " << d.str() << "\n";
  TensorValue hv = makeTensor({4}, ScalarType::Int());
  hv.data = {Value::ofInt(3), Value::ofInt(12), Value::ofInt(17), Value::ofInt(25)};
  Env hin;
  hin["h"] = RtEntry(hv);
  auto hr = evalProgram(hp, hin);
  std::cout << "hist = " << hr.outputs.at("buckets").tensor().str() << "\n";

  std::cout << "SMOKE OK\n";
  return 0;
}
