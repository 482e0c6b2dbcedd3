#pragma once

#include <string>

#include <json.hpp>

#include "nsdg/model.hpp"

namespace nsdg::testing {

// A frozen one-dimensional game; `patch` overrides individual fields.
inline nlohmann::json base_spec_json() {
  return {{"name", "test"},
          {"state_dim", 1},
          {"brownian_dim", 1},
          {"T", 1.0},
          {"lambda", 1.0},
          {"K", 0.0},
          {"lipschitz_bound", 1.0},
          {"controls", {{"U", {0.0}}, {"V", {0.0}}}},
          {"drift", {"0"}},
          {"diffusion", {"0"}},
          {"ftilde_1", "0"},
          {"ftilde_2", "0"},
          {"Phi_1", "0"},
          {"Phi_2", "0"}};
}

inline GameSpec make_spec(const nlohmann::json& patch) {
  nlohmann::json j = base_spec_json();
  if (patch.is_object()) j.merge_patch(patch);
  return spec_from_json(j);
}

}  // namespace nsdg::testing
