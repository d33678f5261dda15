#ifndef EPSURV_PRESETS_HPP
#define EPSURV_PRESETS_HPP

#include "epsurv/simulation.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace epsurv {

/// Named scenarios: table1_row1 .. table5_row8, tableS1_row1..4,
/// tableS2_row1..8, tableS3_row1..8, tableS4_row1..2 and s1_example.
std::vector<std::string> preset_names();

/// Throws Config listing the available names when `name` is unknown.
ScenarioConfig preset(std::string_view name);

}  // namespace epsurv

#endif  // EPSURV_PRESETS_HPP
