#include "skicl/tensor/checkpoint.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace skicl {

nlohmann::json checkpoint_to_json(const ParameterList& params) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : params) {
        list.push_back({{"name", p.name},
                        {"shape", p.tensor.shape()},
                        {"values", std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())}});
    }
    return {{"format_version", kCheckpointFormatVersion}, {"params", std::move(list)}};
}

void load_checkpoint_json(const nlohmann::json& doc, const ParameterList& params) {
    if (!doc.contains("format_version") || doc.at("format_version").get<int>() != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported or missing format_version");
    }
    std::unordered_map<std::string, const nlohmann::json*> stored;
    for (const auto& entry : doc.at("params")) stored[entry.at("name").get<std::string>()] = &entry;
    if (stored.size() != params.size()) {
        throw std::runtime_error("checkpoint: holds " + std::to_string(stored.size()) + " parameters, model has " +
                                 std::to_string(params.size()));
    }
    for (const auto& p : params) {
        auto it = stored.find(p.name);
        if (it == stored.end()) throw std::runtime_error("checkpoint: missing parameter '" + p.name + "'");
        const auto shape = it->second->at("shape").get<Shape>();
        if (shape != p.tensor.shape()) {
            throw std::runtime_error("checkpoint: parameter '" + p.name + "' has shape " + shape_to_string(shape) +
                                     ", model expects " + shape_to_string(p.tensor.shape()));
        }
        const auto values = it->second->at("values").get<std::vector<double>>();
        if (values.size() != p.tensor.numel()) {
            throw std::runtime_error("checkpoint: parameter '" + p.name + "' value count mismatch");
        }
        Tensor target = p.tensor;
        std::copy(values.begin(), values.end(), target.mutable_values().begin());
    }
}

}  // namespace skicl
