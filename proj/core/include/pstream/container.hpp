#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pstream/box.hpp"
#include "pstream/numerics.hpp"

namespace pstream {

// PSVID v1, little-endian:
//   "PSVID" u16 version
//   u16 id_len, id bytes, i32 label (-1 = none)
//   u16 width, u16 height, u16 channels, u32 frame_count
//   per frame: f32[width*height*channels] features (raster cells, channel fastest)
//              u16 n, n x f32[5] proposals (cx, cy, w, h, score)
//              u16 m, m x f32[4] ground-truth boxes (cx, cy, w, h)
inline constexpr char kSequenceMagic[5] = {'P', 'S', 'V', 'I', 'D'};
inline constexpr std::uint16_t kSequenceVersion = 1;

struct FrameRecord {
  std::size_t index = 0;
  FeatureMap feature;
  std::vector<BoundingBox> proposals;  // scores in [0, 1]
  std::vector<BoundingBox> gt_boxes;
};

struct SequenceHeader {
  std::string video_id;
  std::optional<std::int32_t> label;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::size_t frame_count = 0;
};

struct VideoSequence {
  std::string video_id;
  std::optional<std::int32_t> label;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<FrameRecord> frames;

  SequenceHeader header() const {
    return {video_id, label, width, height, channels, frames.size()};
  }
};

// Yields one frame at a time; never holds more than the current frame.
class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& path);
  explicit SequenceReader(std::unique_ptr<std::istream> stream);

  const SequenceHeader& header() const noexcept { return header_; }
  // Empty once all frames are consumed. Throws pstream::Error on corruption.
  std::optional<FrameRecord> next();

 private:
  void read_header();

  std::unique_ptr<std::istream> stream_;
  SequenceHeader header_;
  std::size_t consumed_ = 0;
};

VideoSequence read_sequence(const std::filesystem::path& path);
VideoSequence read_sequence(std::unique_ptr<std::istream> stream);

// Throws kDimInconsistent if frames disagree with the declared dims and
// kInvalidRecord for boxes outside the container's contract.
void write_sequence(const VideoSequence& sequence, std::ostream& out);
void write_sequence(const VideoSequence& sequence, const std::filesystem::path& path);

}  // namespace pstream
