#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace nsdg {

// Shortest round-trip decimal form (%.17g); deterministic across runs.
std::string fmt_num(double v);

// A CSV cell for a vector: a bare number for length 1, otherwise a quoted
// semicolon-separated list.
std::string csv_vector(const std::vector<double>& v);

// RFC-4180 quoting when the text contains a comma, quote or newline.
std::string csv_quote(const std::string& s);

void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

// Verdict strings used across reports.
inline const char* verdict_str(bool pass) { return pass ? "PASS" : "FAIL"; }

}  // namespace nsdg
