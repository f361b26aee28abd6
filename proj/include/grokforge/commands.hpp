#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage
// or configuration error.

#include "grokforge/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace grokforge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// argv[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Config file (or defaults), then GROKFORGE_SEED, then --set overrides.
ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides);

struct GridAxis {
    std::string key;
    std::vector<std::string> values;
};

// "filter.lamb=1,2,5,10" lists values; "filter.alpha=0.8:0.99:5" is an
// inclusive linear range of 5 points.
GridAxis parse_grid_axis(const std::string& spec);
// Cartesian product, first axis slowest. Each point is a list of
// "key=value" overrides.
std::vector<std::vector<std::string>> expand_grid(const std::vector<GridAxis>& axes);

} // namespace grokforge
