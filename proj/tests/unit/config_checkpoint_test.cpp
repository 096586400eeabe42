#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pstream/checkpoint.hpp"
#include "pstream/config.hpp"

using namespace pstream;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.depth = 2;
  c.hidden_dim = 4;
  c.attention_dim = 3;
  c.actor_hidden_dim = 2;
  c.top_k = 2;
  c.max_boxes = 3;
  c.seed = 11;
  return c;
}

ErrorCode config_error(const std::string& text) {
  try {
    config_from_json(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted " << text;
  return ErrorCode::kIo;
}

std::string saved(Model& model, const RunConfig& cfg) {
  std::ostringstream out;
  save_model(out, model, cfg, 3, 2, 2.5e-4);
  return out.str();
}

ErrorCode load_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    load_model(in);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::kIo;
}

}  // namespace

TEST(Config, DefaultsAreTheReferenceConstants) {
  const auto j = nlohmann::json::parse(to_json(RunConfig{}));
  EXPECT_EQ(j.at("depth"), 3);
  EXPECT_EQ(j.at("hidden_dim"), 512);
  EXPECT_EQ(j.at("actor_hidden_dim"), 512);
  EXPECT_EQ(j.at("top_k"), 5);
  EXPECT_EQ(j.at("max_boxes"), 10);
  EXPECT_EQ(j.at("lr0"), 1e-10);
  EXPECT_EQ(j.at("delta_minus"), 0.1);
  EXPECT_EQ(j.at("delta_plus"), 0.01);
  EXPECT_EQ(j.at("lambda1"), 1.0);
  EXPECT_EQ(j.at("lambda2"), 1.0);
  EXPECT_NO_THROW(validate(RunConfig{}));
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = small_config();
  c.lambda1 = 0.25;
  c.feature_loss = false;
  EXPECT_EQ(config_from_json(to_json(c)), c);
  EXPECT_EQ(config_from_json("{}"), RunConfig{});
  EXPECT_EQ(config_from_json(R"({"depth": 1})").depth, 1u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(config_error(R"({"hiden_dim": 4})"), ErrorCode::kConfig);
  EXPECT_EQ(config_error(R"({"depth": 0})"), ErrorCode::kConfig);
  EXPECT_EQ(config_error(R"({"depth": "three"})"), ErrorCode::kConfig);
  EXPECT_EQ(config_error(R"({"lambda1": -1})"), ErrorCode::kConfig);
  EXPECT_EQ(config_error(R"({"delta_plus": 1.0})"), ErrorCode::kConfig);
  EXPECT_EQ(config_error(R"({"lr_min": 1.0, "lr_max": 0.5})"), ErrorCode::kConfig);
  EXPECT_EQ(config_error("[1]"), ErrorCode::kConfig);
  EXPECT_EQ(config_error("{"), ErrorCode::kConfig);
}

TEST(Config, GridBound) {
  RunConfig c;
  c.top_k = 65;
  EXPECT_THROW(validate_for_grid(c, 8, 8), Error);
  c.top_k = 64;
  EXPECT_NO_THROW(validate_for_grid(c, 8, 8));
}

TEST(Checkpoint, RoundTripAtSinglePrecision) {
  const auto cfg = small_config();
  Model model(cfg, 5);
  const auto bytes = saved(model, cfg);
  std::istringstream in(bytes);
  auto ck = load_model(in);
  EXPECT_EQ(ck.config.depth, 2u);
  EXPECT_EQ(ck.config.hidden_dim, 4u);
  EXPECT_EQ(ck.config.attention_dim, 3u);
  EXPECT_EQ(ck.config.actor_hidden_dim, 2u);
  EXPECT_EQ(ck.grid_width, 3u);
  EXPECT_EQ(ck.grid_height, 2u);
  EXPECT_EQ(ck.lr, static_cast<double>(2.5e-4f));
  EXPECT_EQ(ck.model.feature_dim(), 5u);
  const auto a = model.parameters();
  const auto b = ck.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t q = 0; q < a.size(); ++q) {
    EXPECT_EQ(a[q]->name, b[q]->name);
    for (std::size_t e = 0; e < a[q]->value.size(); ++e) {
      EXPECT_EQ(b[q]->value[e], static_cast<double>(static_cast<float>(a[q]->value[e])));
    }
  }
  EXPECT_EQ(saved(ck.model, ck.config), bytes);
}

TEST(Checkpoint, SameSeedGivesIdenticalBytes) {
  const auto cfg = small_config();
  Model a(cfg, 4);
  Model b(cfg, 4);
  EXPECT_EQ(saved(a, cfg), saved(b, cfg));
  auto other = cfg;
  other.seed = 12;
  Model c(other, 4);
  EXPECT_NE(saved(a, cfg), saved(c, other));
}

TEST(Checkpoint, CorruptFilesAreTyped) {
  const auto cfg = small_config();
  Model model(cfg, 4);
  const auto bytes = saved(model, cfg);
  EXPECT_EQ(load_error(""), ErrorCode::kBadMagic);
  EXPECT_EQ(load_error("PSTRX" + bytes.substr(5)), ErrorCode::kBadMagic);
  auto version = bytes;
  version[5] = 9;
  EXPECT_EQ(load_error(version), ErrorCode::kVersionMismatch);
  // A cut on a record boundary leaves a well-formed but incomplete file.
  for (std::size_t n = 7; n < bytes.size(); n += 7) {
    const auto code = load_error(bytes.substr(0, n));
    EXPECT_TRUE(code == ErrorCode::kTruncated || code == ErrorCode::kInvalidRecord) << n;
  }
}

TEST(Checkpoint, MissingOrMisshapenTensorsAreRejected) {
  const auto cfg = small_config();
  Model model(cfg, 4);
  std::istringstream in(saved(model, cfg));
  const auto tensors = read_checkpoint(in);

  auto without = [&](const std::string& name) {
    std::vector<NamedTensor> out;
    for (const auto& t : tensors) {
      if (t.name != name) out.push_back(t);
    }
    std::ostringstream os;
    write_checkpoint(os, out);
    return os.str();
  };
  EXPECT_EQ(load_error(without("meta.architecture")), ErrorCode::kInvalidRecord);
  EXPECT_EQ(load_error(without("stack.1.bias")), ErrorCode::kInvalidRecord);
  EXPECT_EQ(load_error(without("stack.0.weight")), ErrorCode::kInvalidRecord);

  auto reshaped = tensors;
  for (auto& t : reshaped) {
    if (t.name == "actor.geometry_head.bias") t.tensor = Tensor({5}, 0.0);
  }
  std::ostringstream os;
  write_checkpoint(os, reshaped);
  EXPECT_EQ(load_error(os.str()), ErrorCode::kDimInconsistent);

  auto huge = tensors;
  for (auto& t : huge) {
    if (t.name == "meta.architecture") t.tensor[1] = 60000.0;
  }
  std::ostringstream hs;
  write_checkpoint(hs, huge);
  EXPECT_EQ(load_error(hs.str()), ErrorCode::kDimInconsistent);

  auto negative = tensors;
  for (auto& t : negative) {
    if (t.name == "meta.architecture") t.tensor[2] = -1.0;
  }
  std::ostringstream ns;
  write_checkpoint(ns, negative);
  EXPECT_EQ(load_error(ns.str()), ErrorCode::kInvalidRecord);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto cfg = small_config();
  Model model(cfg, 3);
  const auto path = std::filesystem::temp_directory_path() / "pstream_ck_test.pstrm";
  save_model(path, model, cfg, 2, 2, 1e-3);
  const auto ck = load_model(path);
  EXPECT_EQ(ck.grid_width, 2u);
  std::filesystem::remove(path);
  try {
    load_model(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}
