#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace flsim {

// Configuration templates bundled with the binary.
std::vector<std::string> list_templates();
const std::string& template_text(const std::string& name);

// Writes <dir>/<name>.yaml; refuses to overwrite unless `force`.
std::filesystem::path write_template(const std::string& name, const std::filesystem::path& dir,
                                     bool force);

}  // namespace flsim
