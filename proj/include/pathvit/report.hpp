#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pathvit/kvconfig.hpp"

namespace pathvit {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportFormatVersion = 1;

// Standard JSON envelope for every CLI report:
//   {tool, version, format_version, config_hash, results}
nlohmann::json make_report(const std::string& tool, const KvConfig& config, nlohmann::json results);

// FLOPs counting conventions, embedded in every report that mentions FLOPs.
nlohmann::json flops_conventions_json();

void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const nlohmann::json& j);

// CSV with a header row; doubles are printed with 17 significant digits.
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);
std::string csv_number(double v);

// Output directory: explicit flag wins, then the PATHVIT_OUT_DIR environment
// variable, then ./pathvit_out. Created if missing.
std::string resolve_output_dir(const std::string& flag_value);

}  // namespace pathvit
