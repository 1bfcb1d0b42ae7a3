#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>

#include "criteria.hpp"

using dfd::acceptance::Criterion;

// With an argument, runs only the criterion with that id.
int main(int argc, char** argv) {
  std::vector<Criterion> all = dfd::acceptance::criteria_f64();
  for (auto& c : dfd::acceptance::criteria_f32()) all.push_back(c);
  std::sort(all.begin(), all.end(), [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
  if (argc > 1) {
    const int wanted = std::atoi(argv[1]);
    std::erase_if(all, [&](const Criterion& c) { return c.id != wanted; });
    if (all.empty()) {
      std::fprintf(stderr, "no criterion %s\n", argv[1]);
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : all) {
    const auto start = std::chrono::steady_clock::now();
    dfd::acceptance::Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d: %s | %s (%.1fs)\n", outcome.passed ? "PASS" : "FAIL", c.id,
                c.title.c_str(), outcome.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += outcome.passed ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failures, all.size());
  return failures == 0 ? 0 : 1;
}
