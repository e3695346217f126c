#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace flsim {

using HyperValue = std::variant<double, std::string>;

// Algorithm hyper-parameters as read from the `server:` / `client:` sections
// of an algorithm configuration.
class HyperParams {
 public:
  HyperParams() = default;
  HyperParams(std::initializer_list<std::pair<const std::string, HyperValue>> init)
      : values_(init) {}

  bool contains(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, HyperValue value) { values_[key] = std::move(value); }

  // Throw ConfigError when missing or of the wrong type.
  double number(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  std::string text_or(const std::string& key, const std::string& fallback) const;

  // Keys of `overrides` replace those here.
  HyperParams merged(const HyperParams& overrides) const;
  std::vector<std::string> keys() const;
  const std::map<std::string, HyperValue>& values() const { return values_; }

 private:
  std::map<std::string, HyperValue> values_;
};

}  // namespace flsim
