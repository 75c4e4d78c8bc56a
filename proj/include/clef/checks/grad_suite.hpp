#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clef::checks {

// Finite-difference checks of every training objective and of both encoders
// at toy dimensions.
struct GradCase {
  std::string name;
  float max_relative_error = 0.0f;
  std::size_t coords_checked = 0;
  double seconds = 0.0;
  bool passed = false;
};

inline constexpr float kGradTolerance = 1e-3f;

std::vector<std::string> grad_case_names();

// An empty filter runs every case. Unknown names raise ConfigError.
std::vector<GradCase> run_grad_suite(const std::vector<std::string>& only = {}, std::uint64_t seed = 0);

}  // namespace clef::checks
