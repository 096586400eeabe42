#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pstream/config.hpp"
#include "pstream/engine.hpp"
#include "pstream/numerics.hpp"

namespace pstream {

// PSTRM v1, little-endian: "PSTRM" u16 version, then records until end of
// file, each: u16 name_len, name, u16 rank, u32 dims[rank], f32 payload.
inline constexpr char kCheckpointMagic[5] = {'P', 'S', 'T', 'R', 'M'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

struct ModelCheckpoint {
  Model model;
  RunConfig config;  // architecture fields restored, the rest default
  std::size_t grid_width = 0;
  std::size_t grid_height = 0;
  double lr = 0.0;
};

void save_model(const std::filesystem::path& path, Model& model, const RunConfig& config,
                std::size_t grid_width, std::size_t grid_height, double lr);
void save_model(std::ostream& out, Model& model, const RunConfig& config, std::size_t grid_width,
                std::size_t grid_height, double lr);
ModelCheckpoint load_model(const std::filesystem::path& path);
ModelCheckpoint load_model(std::istream& in);

}  // namespace pstream
