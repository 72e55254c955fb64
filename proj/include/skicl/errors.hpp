#pragma once

#include <stdexcept>
#include <string>

namespace skicl {

/// Invalid hyperparameter or model/data configuration (as opposed to a shape
/// mismatch between operands, which raises plain std::invalid_argument).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace skicl
