#include "pstream/container.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "pstream/binary_io.hpp"

namespace pstream {

namespace {

using binary::get;
using binary::put;

void check_box(const BoundingBox& b, bool needs_score, const char* what) {
  if (!is_valid(b)) {
    throw Error(ErrorCode::kInvalidRecord, std::string(what) + " box outside the unit square");
  }
  if (needs_score && !(b.score && *b.score >= 0.0 && *b.score <= 1.0)) {
    throw Error(ErrorCode::kInvalidRecord, std::string(what) + " score outside [0, 1]");
  }
}

// Reads in bounded chunks so a corrupt count cannot trigger a huge
// allocation before the stream runs dry.
std::vector<float> read_floats(std::istream& in, std::size_t n, const char* what) {
  constexpr std::size_t kChunk = 1 << 16;
  std::vector<float> values;
  values.reserve(std::min(n, kChunk));
  while (values.size() < n) {
    const std::size_t take = std::min(kChunk, n - values.size());
    const std::size_t at = values.size();
    values.resize(at + take);
    const auto bytes = static_cast<std::streamsize>(take * sizeof(float));
    in.read(reinterpret_cast<char*>(values.data() + at), bytes);
    if (in.gcount() != bytes) {
      throw Error(ErrorCode::kTruncated, std::string("stream ended while reading ") + what);
    }
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : values) v = binary::to_little(v);
  }
  return values;
}

}  // namespace

SequenceReader::SequenceReader(const std::filesystem::path& path) {
  auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*file) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  stream_ = std::move(file);
  read_header();
}

SequenceReader::SequenceReader(std::unique_ptr<std::istream> stream) : stream_(std::move(stream)) {
  read_header();
}

void SequenceReader::read_header() {
  std::istream& in = *stream_;
  char magic[sizeof(kSequenceMagic)] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic)) ||
      std::memcmp(magic, kSequenceMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadMagic, "not a PSVID sequence");
  }
  const auto version = get<std::uint16_t>(in, "version");
  if (version != kSequenceVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "PSVID version " + std::to_string(version) + " (reader supports " +
                    std::to_string(kSequenceVersion) + ")");
  }
  const auto id_len = get<std::uint16_t>(in, "video id length");
  header_.video_id = binary::get_bytes(in, id_len, "video id");
  const auto label = get<std::int32_t>(in, "label");
  if (label < -1) throw Error(ErrorCode::kInvalidRecord, "label must be >= -1");
  if (label >= 0) header_.label = label;
  header_.width = get<std::uint16_t>(in, "grid width");
  header_.height = get<std::uint16_t>(in, "grid height");
  header_.channels = get<std::uint16_t>(in, "channels");
  header_.frame_count = get<std::uint32_t>(in, "frame count");
  if (header_.width == 0 || header_.height == 0 || header_.channels == 0) {
    throw Error(ErrorCode::kDimInconsistent,
                "zero dimension in header (" + std::to_string(header_.width) + "x" +
                    std::to_string(header_.height) + "x" + std::to_string(header_.channels) + ")");
  }
}

std::optional<FrameRecord> SequenceReader::next() {
  std::istream& in = *stream_;
  if (consumed_ == header_.frame_count) {
    if (in.peek() != std::char_traits<char>::eof()) {
      throw Error(ErrorCode::kInvalidRecord, "trailing bytes after the last frame");
    }
    return std::nullopt;
  }
  FrameRecord frame;
  frame.index = consumed_;
  const std::size_t n = header_.width * header_.height * header_.channels;
  const auto raw = read_floats(in, n, "feature payload");
  std::vector<double> values(raw.begin(), raw.end());
  ensure_finite(values, "feature payload");
  frame.feature = FeatureMap(header_.width, header_.height, header_.channels, std::move(values));

  const auto proposals = get<std::uint16_t>(in, "proposal count");
  const auto prop = read_floats(in, std::size_t{proposals} * 5, "proposals");
  frame.proposals.reserve(proposals);
  for (std::size_t p = 0; p < proposals; ++p) {
    const float* v = prop.data() + p * 5;
    frame.proposals.push_back({v[0], v[1], v[2], v[3], static_cast<double>(v[4])});
    check_box(frame.proposals.back(), true, "proposal");
  }
  const auto gts = get<std::uint16_t>(in, "ground-truth count");
  const auto gt = read_floats(in, std::size_t{gts} * 4, "ground-truth boxes");
  frame.gt_boxes.reserve(gts);
  for (std::size_t g = 0; g < gts; ++g) {
    const float* v = gt.data() + g * 4;
    frame.gt_boxes.push_back({v[0], v[1], v[2], v[3], std::nullopt});
    check_box(frame.gt_boxes.back(), false, "ground-truth");
  }
  ++consumed_;
  return frame;
}

VideoSequence read_sequence(const std::filesystem::path& path) {
  return read_sequence([&] {
    auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    return file;
  }());
}

VideoSequence read_sequence(std::unique_ptr<std::istream> stream) {
  SequenceReader reader(std::move(stream));
  const auto& h = reader.header();
  VideoSequence seq{h.video_id, h.label, h.width, h.height, h.channels, {}};
  seq.frames.reserve(std::min<std::size_t>(h.frame_count, 1024));
  while (auto frame = reader.next()) seq.frames.push_back(std::move(*frame));
  return seq;
}

void write_sequence(const VideoSequence& seq, std::ostream& out) {
  constexpr auto u16max = std::numeric_limits<std::uint16_t>::max();
  if (seq.width == 0 || seq.height == 0 || seq.channels == 0 || seq.width > u16max ||
      seq.height > u16max || seq.channels > u16max) {
    throw Error(ErrorCode::kDimInconsistent, "sequence dims must lie in [1, 65535]");
  }
  if (seq.video_id.size() > u16max) {
    throw Error(ErrorCode::kInvalidRecord, "video id longer than 65535 bytes");
  }
  for (const auto& frame : seq.frames) {
    if (frame.feature.width() != seq.width || frame.feature.height() != seq.height ||
        frame.feature.channels() != seq.channels) {
      throw Error(ErrorCode::kDimInconsistent,
                  "frame " + std::to_string(frame.index) + " does not match sequence dims");
    }
    if (frame.proposals.size() > u16max || frame.gt_boxes.size() > u16max) {
      throw Error(ErrorCode::kInvalidRecord, "more than 65535 boxes in one frame");
    }
    for (const auto& b : frame.proposals) check_box(b, true, "proposal");
    for (const auto& b : frame.gt_boxes) check_box(b, false, "ground-truth");
  }

  out.write(kSequenceMagic, sizeof(kSequenceMagic));
  put<std::uint16_t>(out, kSequenceVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(seq.video_id.size()));
  binary::put_bytes(out, seq.video_id);
  put<std::int32_t>(out, seq.label.value_or(-1));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(seq.width));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(seq.height));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(seq.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.frames.size()));
  for (const auto& frame : seq.frames) {
    for (double v : frame.feature.data()) put<float>(out, static_cast<float>(v));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(frame.proposals.size()));
    for (const auto& b : frame.proposals) {
      for (double v : {b.cx, b.cy, b.w, b.h, *b.score}) put<float>(out, static_cast<float>(v));
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(frame.gt_boxes.size()));
    for (const auto& b : frame.gt_boxes) {
      for (double v : {b.cx, b.cy, b.w, b.h}) put<float>(out, static_cast<float>(v));
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing sequence " + seq.video_id);
}

void write_sequence(const VideoSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_sequence(seq, out);
}

}  // namespace pstream
