#include "pstream/config.hpp"

#include <nlohmann/json.hpp>

#include "pstream/error.hpp"

namespace pstream {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::kConfig, message);
}

json as_json(const RunConfig& c) {
  return json{
      {"depth", c.depth},
      {"hidden_dim", c.hidden_dim},
      {"attention_dim", c.attention_dim},
      {"actor_hidden_dim", c.actor_hidden_dim},
      {"top_k", c.top_k},
      {"max_boxes", c.max_boxes},
      {"lambda1", c.lambda1},
      {"lambda2", c.lambda2},
      {"lr0", c.lr0},
      {"delta_minus", c.delta_minus},
      {"delta_plus", c.delta_plus},
      {"lr_min", c.lr_min},
      {"lr_max", c.lr_max},
      {"min_box_extent", c.min_box_extent},
      {"feature_loss", c.feature_loss},
      {"geometry_loss", c.geometry_loss},
      {"seed", c.seed},
  };
}

}  // namespace

void validate(const RunConfig& c) {
  require(c.depth >= 1, "depth must be at least 1");
  require(c.hidden_dim >= 1, "hidden_dim must be positive");
  require(c.attention_dim >= 1, "attention_dim must be positive");
  require(c.actor_hidden_dim >= 1, "actor_hidden_dim must be positive");
  require(c.top_k >= 1, "K must be at least 1");
  require(c.max_boxes >= 1, "N must be at least 1");
  require(c.lambda1 >= 0.0 && c.lambda2 >= 0.0, "loss weights must be non-negative");
  require(c.lr_min > 0.0 && c.lr_min <= c.lr_max, "learning-rate bounds must satisfy 0 < min <= max");
  require(c.lr0 > 0.0, "lr0 must be positive");
  require(c.delta_minus >= 0.0 && c.delta_plus >= 0.0 && c.delta_plus < 1.0,
          "learning-rate factors must satisfy delta_minus >= 0 and 0 <= delta_plus < 1");
  require(c.min_box_extent > 0.0 && c.min_box_extent < 1.0, "min_box_extent must lie in (0, 1)");
}

void validate_for_grid(const RunConfig& c, std::size_t grid_width, std::size_t grid_height) {
  validate(c);
  require(c.top_k <= grid_width * grid_height,
          "K=" + std::to_string(c.top_k) + " exceeds the " + std::to_string(grid_width) + "x" +
              std::to_string(grid_height) + " grid");
}

std::string to_json(const RunConfig& config, int indent) { return as_json(config).dump(indent); }

RunConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  RunConfig c;
  const json defaults = as_json(c);
  for (const auto& [key, value] : j.items()) {
    require(defaults.contains(key), "unknown config key '" + key + "'");
  }
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    read("depth", c.depth);
    read("hidden_dim", c.hidden_dim);
    read("attention_dim", c.attention_dim);
    read("actor_hidden_dim", c.actor_hidden_dim);
    read("top_k", c.top_k);
    read("max_boxes", c.max_boxes);
    read("lambda1", c.lambda1);
    read("lambda2", c.lambda2);
    read("lr0", c.lr0);
    read("delta_minus", c.delta_minus);
    read("delta_plus", c.delta_plus);
    read("lr_min", c.lr_min);
    read("lr_max", c.lr_max);
    read("min_box_extent", c.min_box_extent);
    read("feature_loss", c.feature_loss);
    read("geometry_loss", c.geometry_loss);
    read("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config field has the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

}  // namespace pstream
