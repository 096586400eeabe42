#include "pstream/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "pstream/binary_io.hpp"

namespace pstream {

namespace {

using binary::get;
using binary::put;

constexpr const char* kArchitecture = "meta.architecture";
constexpr const char* kLearningRate = "meta.lr";

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint16_t>(out, kCheckpointVersion);
  for (const auto& [name, tensor] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorCode::kInvalidRecord, "tensor name too long");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    binary::put_bytes(out, name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(tensor.rank()));
    for (std::size_t dim : tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    for (double v : tensor.data()) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadMagic, "not a PSTRM checkpoint");
  }
  const auto version = get<std::uint16_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch, "PSTRM version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get<std::uint16_t>(in, "tensor name length");
    std::string name = binary::get_bytes(in, name_len, "tensor name");
    const auto rank = get<std::uint16_t>(in, "tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& dim : shape) {
      dim = get<std::uint32_t>(in, "tensor dims");
      count *= dim;
    }
    std::vector<double> values;
    values.reserve(std::min<std::size_t>(count, 1 << 16));
    for (std::size_t q = 0; q < count; ++q) values.push_back(get<float>(in, "tensor payload"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

void save_model(std::ostream& out, Model& model, const RunConfig& config, std::size_t grid_width,
                std::size_t grid_height, double lr) {
  std::vector<NamedTensor> tensors;
  tensors.push_back({kArchitecture,
                     Tensor({7}, {static_cast<double>(model.feature_dim()),
                                  static_cast<double>(config.hidden_dim),
                                  static_cast<double>(config.depth),
                                  static_cast<double>(config.attention_dim),
                                  static_cast<double>(config.actor_hidden_dim),
                                  static_cast<double>(grid_width),
                                  static_cast<double>(grid_height)})});
  tensors.push_back({kLearningRate, Tensor({1}, {lr})});
  for (const Param* p : model.parameters()) tensors.push_back({p->name, p->value});
  write_checkpoint(out, tensors);
}

void save_model(const std::filesystem::path& path, Model& model, const RunConfig& config,
                std::size_t grid_width, std::size_t grid_height, double lr) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  save_model(out, model, config, grid_width, grid_height, lr);
}

ModelCheckpoint load_model(std::istream& in) {
  std::map<std::string, Tensor> by_name;
  for (auto& nt : read_checkpoint(in)) by_name.emplace(std::move(nt.name), std::move(nt.tensor));

  const auto arch = by_name.find(kArchitecture);
  if (arch == by_name.end() || arch->second.size() != 7) {
    throw Error(ErrorCode::kInvalidRecord, "checkpoint lacks architecture metadata");
  }
  for (std::size_t i = 0; i < 7; ++i) {
    const double v = arch->second[i];
    if (!(v >= 1.0 && v <= 65535.0) || v != std::floor(v)) {
      throw Error(ErrorCode::kInvalidRecord, "checkpoint architecture metadata is corrupt");
    }
  }
  auto dim = [&](std::size_t i) { return static_cast<std::size_t>(arch->second[i]); };
  // Check the largest tensors against the metadata before allocating a model.
  const std::pair<const char*, std::vector<std::size_t>> expected[] = {
      {"attention.feature_proj", {dim(3), dim(0)}},
      {"stack.0.weight", {4 * dim(1), dim(0) + dim(1)}},
      {"actor.feature.weight", {4 * dim(4), dim(0) + dim(4)}},
  };
  for (const auto& [name, shape] : expected) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw Error(ErrorCode::kInvalidRecord, std::string("checkpoint is missing tensor ") + name);
    }
    if (it->second.shape() != shape) {
      throw Error(ErrorCode::kDimInconsistent,
                  std::string("checkpoint tensor ") + name + " has wrong shape");
    }
  }

  ModelCheckpoint ck;
  ck.config.hidden_dim = dim(1);
  ck.config.depth = dim(2);
  ck.config.attention_dim = dim(3);
  ck.config.actor_hidden_dim = dim(4);
  ck.grid_width = dim(5);
  ck.grid_height = dim(6);
  if (const auto lr = by_name.find(kLearningRate); lr != by_name.end() && lr->second.size() == 1) {
    ck.lr = lr->second[0];
  }
  validate(ck.config);
  ck.model = Model(ck.config, dim(0));
  for (Param* p : ck.model.parameters()) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw Error(ErrorCode::kInvalidRecord, "checkpoint is missing tensor " + p->name);
    }
    if (!it->second.same_shape(p->value)) {
      throw Error(ErrorCode::kDimInconsistent, "checkpoint tensor " + p->name + " has wrong shape");
    }
    p->value = it->second;
  }
  return ck;
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return load_model(in);
}

}  // namespace pstream
