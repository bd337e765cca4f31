#include "pathvit/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pathvit/errors.hpp"
#include "pathvit/flops.hpp"

namespace pathvit {

nlohmann::json make_report(const std::string& tool, const KvConfig& config, nlohmann::json results) {
    nlohmann::json j;
    j["tool"] = tool;
    j["version"] = kToolVersion;
    j["format_version"] = kReportFormatVersion;
    j["config_hash"] = config.hash_hex();
    j["results"] = std::move(results);
    return j;
}

nlohmann::json flops_conventions_json() {
    return nlohmann::json{{"mac_flops", FlopsConventions::mac_flops},
                          {"layer_norm_per_element", FlopsConventions::layer_norm_per_element},
                          {"softmax_per_element", FlopsConventions::softmax_per_element},
                          {"gelu_per_element", FlopsConventions::gelu_per_element},
                          {"scaled_combine_per_element", FlopsConventions::scaled_combine_per_element},
                          {"elementwise_additions", 0}};
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write: " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write: " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) f << ',';
        f << header[i];
    }
    f << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) f << ',';
            f << row[i];
        }
        f << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

std::string resolve_output_dir(const std::string& flag_value) {
    std::string dir = flag_value;
    if (dir.empty()) {
        if (const char* env = std::getenv("PATHVIT_OUT_DIR")) dir = env;
    }
    if (dir.empty()) dir = "pathvit_out";
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    return dir;
}

}  // namespace pathvit
