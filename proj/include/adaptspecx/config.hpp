#pragma once

#include <fstream>
#include <set>
#include <string>

#include "json.hpp"

#include "adaptspecx/error.hpp"
#include "adaptspecx/sampler.hpp"

namespace adaptspecx {

using Json = nlohmann::json;

inline Json config_to_json(const SamplerConfig& c) {
  return Json{
      {"max_segments", c.component.max_segments},
      {"min_segment_length", c.component.min_segment_length},
      {"spline_basis", c.component.basis_size},
      {"mu_lower", c.component.mu_lower},
      {"mu_upper", c.component.mu_upper},
      {"sigma2_alpha", c.component.sigma2_alpha},
      {"tau2_b_shape", c.component.tau2_prior_shape},
      {"tau2_b_scale", c.component.tau2_prior_scale},
      {"components", c.components},
      {"gp_basis", c.basis},
      {"mu_beta", c.stick.mu_beta},
      {"sigma2_beta", c.stick.sigma2_beta},
      {"nu_tau", c.stick.nu_tau},
      {"A_tau", c.stick.A_tau},
      {"iterations", c.iterations},
      {"burn_in", c.burn_in},
      {"thin", c.thin},
      {"seed", c.seed},
  };
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
/// "threads" is accepted but does not affect results.
inline void apply_config_json(const Json& j, SamplerConfig& c) {
  require(j.is_object(), "config must be a JSON object");
  static const std::set<std::string> known = {
      "max_segments", "min_segment_length", "spline_basis", "mu_lower", "mu_upper", "sigma2_alpha",
      "tau2_b_shape", "tau2_b_scale", "components", "gp_basis", "mu_beta", "sigma2_beta",
      "nu_tau", "A_tau", "iterations", "burn_in", "thin", "seed", "threads"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(known.count(it.key()) > 0, "unknown config key '" + it.key() + "'");
  auto get = [&](const char* key, auto& target) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(target);
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument(std::string("config key '") + key + "' has the wrong type");
    }
  };
  get("max_segments", c.component.max_segments);
  get("min_segment_length", c.component.min_segment_length);
  get("spline_basis", c.component.basis_size);
  get("mu_lower", c.component.mu_lower);
  get("mu_upper", c.component.mu_upper);
  get("sigma2_alpha", c.component.sigma2_alpha);
  get("tau2_b_shape", c.component.tau2_prior_shape);
  get("tau2_b_scale", c.component.tau2_prior_scale);
  get("components", c.components);
  get("gp_basis", c.basis);
  get("mu_beta", c.stick.mu_beta);
  get("sigma2_beta", c.stick.sigma2_beta);
  get("nu_tau", c.stick.nu_tau);
  get("A_tau", c.stick.A_tau);
  get("iterations", c.iterations);
  get("burn_in", c.burn_in);
  get("thin", c.thin);
  get("seed", c.seed);
  get("threads", c.threads);
}

inline SamplerConfig config_from_json(const Json& j) {
  SamplerConfig c;
  apply_config_json(j, c);
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset is the only position nlohmann reports; convert to line:col.
    std::ifstream again(path);
    std::string text((std::istreambuf_iterator<char>(again)), std::istreambuf_iterator<char>());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw InvalidArgument(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
}

}  // namespace adaptspecx
