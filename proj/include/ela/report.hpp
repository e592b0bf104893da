#pragma once

#include <string>

#include "json.hpp"

#include "ela/fit.hpp"

namespace ela {

inline constexpr const char* kReportSchema = "ela-report/1";
inline constexpr const char* kToolVersion = "0.1.0";

nlohmann::json fit_to_json(const FitResult& fit);
/// Inverse of fit_to_json; throws std::runtime_error on a schema mismatch.
FitResult fit_from_json(const nlohmann::json& j);

void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path);

void write_report(const FitResult& fit, const std::string& path);
FitResult read_report(const std::string& path);

} // namespace ela
