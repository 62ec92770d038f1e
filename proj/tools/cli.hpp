#pragma once
// The mrsc command line, callable in-process so tests can drive it.

#include "mrsc/denoise.hpp"
#include "mrsc/evaluation.hpp"
#include "mrsc/io.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace mrsc::cli {

/// Exit codes: 0 success, 2 input error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "rank=2", "energy=0.99" or "lambda=3.5". Throws ParseError.
ThresholdPolicy parse_policy(const std::string& text);

/// Builds a sweep from JSON. A "preset" key seeds the defaults; every other
/// key overrides one field. Unknown keys are rejected with ParseError.
ExperimentConfig config_from_json(const io::Json& json);

}  // namespace mrsc::cli
