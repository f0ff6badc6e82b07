// Runs the full acceptance suite (the same checks the CLI exposes under
// --self-test) as a ctest target. An optional real panel CSV enables the
// reproduction check; pass it as argv[1] or FKLAB_PANEL_CSV.

#include <cstdlib>
#include <iostream>

#include "selftest.hpp"

int main(int argc, char** argv) {
  fklab::selftest::Options opt;
  if (argc > 1) opt.panel_csv = argv[1];
  if (opt.panel_csv.empty()) {
    const char* env = std::getenv("FKLAB_PANEL_CSV");
    if (env) opt.panel_csv = env;
  }
  const auto results = fklab::selftest::run_all(opt, std::cout);
  for (const auto& r : results)
    if (!r.pass && !r.skipped) return 1;
  return 0;
}
