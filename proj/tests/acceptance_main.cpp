// SPDX-License-Identifier: Apache-2.0
// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Optional arguments select criteria by number.
#include <cstdio>
#include <cstdlib>
#include <set>

#include "hlm/verify/acceptance.hpp"

int main(int argc, char** argv)
{
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(std::atoi(argv[i]));
    }
    int failed = 0;
    for (const auto& c : hlm::verify::acceptance_criteria()) {
        if (!only.empty() && !only.count(c.id)) {
            continue;
        }
        const auto r = hlm::verify::run_criterion(c);
        std::printf("%s\n", hlm::verify::format(r).c_str());
        std::fflush(stdout);
        failed += !r.pass;
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
