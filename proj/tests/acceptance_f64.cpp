// 64-bit verification half of acceptance criterion 2: the same gradient
// suite at the tolerance double precision affords.

#include <chrono>
#include <cstdio>

#include "gradcheck_suite.hpp"

static_assert(sizeof(slidekit::real) == 8, "this binary must link the f64 library");

int main() {
    using slidekit::real;
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    real worst_overall = 0;
    std::string failed;
    for (const auto& c : gradsuite::cases()) {
        const real worst = gradsuite::run_case(c, 10, real(1e-4));
        worst_overall = std::max(worst_overall, worst);
        if (!(worst < real(1e-4))) {
            pass = false;
            failed += " " + c.name;
        }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion 2: autodiff correctness (64-bit mode) "
                "(worst rel err %.2e%s%s) [%.1fs, budget 60s]\n",
                pass && elapsed < 60.0 ? "PASS" : "FAIL", static_cast<double>(worst_overall),
                failed.empty() ? "" : "; FAILED:", failed.c_str(), elapsed);
    return pass && elapsed < 60.0 ? 0 : 1;
}
