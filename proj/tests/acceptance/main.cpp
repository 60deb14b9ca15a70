#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <exception>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "acceptance/criteria.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Acceptance gate: one PASS/FAIL line per criterion"};
  std::vector<int> only;
  acceptance::Context ctx{"acceptance_runs"};
  app.add_option("--only", only, "run just these criteria (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--work", ctx.work, "directory for cached desk-scale training runs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const auto& c : acceptance::criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.number) == only.end()) continue;
    const auto started = std::chrono::steady_clock::now();
    acceptance::Outcome out;
    try {
      out = c.check(ctx);
    } catch (const std::exception& e) {
      out = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    fmt::print("criterion {}: {} | {} | {} ({:.1f}s)\n", c.number, out.pass ? "PASS" : "FAIL", c.title, out.detail,
               secs);
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
