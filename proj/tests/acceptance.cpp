// Acceptance suite runner: one pass/fail line per criterion, nonzero exit on
// any failure. The `verify` CLI subcommand runs the same suite.

#include <cstdio>
#include <cstdlib>

#include "gatecircuits/acceptance.hpp"

int main() {
    std::uint64_t seed = 0;
    if (const char* env = std::getenv("GATECIRCUITS_SEED"); env && *env)
        seed = std::strtoull(env, nullptr, 10);
    auto results = gatecircuits::verify_paper_suite(seed, stdout);
    bool all = true;
    for (const auto& r : results) all = all && r.pass;
    std::printf("%s: %zu criteria\n", all ? "ALL PASS" : "FAILURES PRESENT", results.size());
    return all ? 0 : 1;
}
