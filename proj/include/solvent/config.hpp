#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace solvent::config {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// key=value lines, # comments, blank lines ignored, whitespace trimmed.
// Order is preserved so later lines override earlier ones downstream.
KeyValues parse_text(std::string_view text);
KeyValues parse_file(const std::filesystem::path& path);

// Small shared lexers for list-valued settings.
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

} // namespace solvent::config
