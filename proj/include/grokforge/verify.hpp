#pragma once

// Self-check suites behind `grokforge verify`: filter identities, spectral
// facts, the pre-/post-optimizer filtering equivalence, optimizer algebra and
// finite-difference gradient checks.

#include <string>
#include <string_view>
#include <vector>

namespace grokforge {

struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    double value = 0.0;     // measured error (or the measured quantity)
    double tolerance = 0.0; // bound the value was held to
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool passed() const;
    std::vector<const CheckResult*> failures() const;
    std::string to_json() const;
};

struct VerifyOptions {
    // Mutation hook: flips the sign of the Nesterov output coefficient C in
    // the reference linear system. The equivalence suite must then fail.
    bool flip_nesterov_c = false;
    unsigned long long seed = 0;
};

inline constexpr std::string_view kVerifySuites[] = {"filters", "spectral", "equivalence", "optimizers",
                                                     "gradients"};

// mode: "all" or one suite name. Unknown modes throw ConfigError.
VerifyReport run_verify(std::string_view mode, const VerifyOptions& options = {});

// Largest relative error between backprop and central differences on the
// micro models (64-bit), per layer family.
struct GradientCheck {
    std::string parameter;
    double max_rel_error = 0.0;
};
std::vector<GradientCheck> transformer_gradient_check(unsigned long long seed, bool pre_norm = false);
std::vector<GradientCheck> mlp_gradient_check(unsigned long long seed);

// |a - n| / max(|a|, |n|, floor) for an analytic gradient a and its numeric
// estimate n.
double gradient_rel_error(double analytic, double numeric);
inline constexpr double kFiniteDifferenceStep = 1e-4;
inline constexpr double kGradientErrorFloor = 1e-6;

} // namespace grokforge
