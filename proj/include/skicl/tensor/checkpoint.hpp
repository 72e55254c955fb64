#pragma once

#include <nlohmann/json.hpp>

#include "skicl/tensor/optim.hpp"

namespace skicl {

inline constexpr int kCheckpointFormatVersion = 1;

/// {format_version, params: [{name, shape, values}]} with row-major values.
nlohmann::json checkpoint_to_json(const ParameterList& params);

/// Copies stored values into `params`, matched by name. Every parameter must be
/// present with an identical shape; extra entries in the document are an error.
void load_checkpoint_json(const nlohmann::json& doc, const ParameterList& params);

}  // namespace skicl
