#include "flsim/hyperparams.hpp"

#include "flsim/error.hpp"

namespace flsim {

double HyperParams::number(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing hyper-parameter '" + key + "'");
  if (const double* v = std::get_if<double>(&it->second)) return *v;
  throw ConfigError("hyper-parameter '" + key + "' must be a number");
}

const std::string& HyperParams::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing hyper-parameter '" + key + "'");
  if (const std::string* v = std::get_if<std::string>(&it->second)) return *v;
  throw ConfigError("hyper-parameter '" + key + "' must be a string");
}

double HyperParams::number_or(const std::string& key, double fallback) const {
  return contains(key) ? number(key) : fallback;
}

std::string HyperParams::text_or(const std::string& key, const std::string& fallback) const {
  return contains(key) ? text(key) : fallback;
}

HyperParams HyperParams::merged(const HyperParams& overrides) const {
  HyperParams out = *this;
  for (const auto& [key, value] : overrides.values_) out.values_[key] = value;
  return out;
}

std::vector<std::string> HyperParams::keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) out.push_back(key);
  return out;
}

}  // namespace flsim
