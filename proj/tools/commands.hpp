#pragma once

#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "resil/model.hpp"

namespace resil::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 feasible/optimal, 2 infeasible (the record says which
/// kind), 1 input or tool error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

nlohmann::json controller_json(const Controller& controller);
Controller controller_from_json(const nlohmann::json& j);

/// Shortest text that parses back to the same double.
std::string format_number(double v);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace resil::cli
