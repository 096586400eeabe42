#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pstream/container.hpp"
#include "pstream/localizer.hpp"
#include "pstream/synth.hpp"

using namespace pstream;

namespace {

void expect_equal(const VideoSequence& a, const VideoSequence& b) {
  EXPECT_EQ(a.video_id, b.video_id);
  EXPECT_EQ(a.label, b.label);
  EXPECT_EQ(a.width, b.width);
  EXPECT_EQ(a.height, b.height);
  EXPECT_EQ(a.channels, b.channels);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    EXPECT_EQ(a.frames[t].index, b.frames[t].index);
    EXPECT_EQ(a.frames[t].feature.data(), b.frames[t].feature.data());
    EXPECT_EQ(a.frames[t].proposals, b.frames[t].proposals);
    EXPECT_EQ(a.frames[t].gt_boxes, b.frames[t].gt_boxes);
  }
}

std::string encode(const VideoSequence& seq) {
  std::ostringstream out;
  write_sequence(seq, out);
  return out.str();
}

VideoSequence decode(const std::string& bytes) {
  return read_sequence(std::make_unique<std::istringstream>(bytes));
}

ErrorCode decode_error(const std::string& bytes) {
  try {
    decode(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::kIo;
}

template <typename T>
void raw(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

// Written byte by byte from the layout, independent of the writer.
std::string hand_fixture() {
  std::string s = "PSVID";
  raw<std::uint16_t>(s, 1);
  raw<std::uint16_t>(s, 2);
  s += "ab";
  raw<std::int32_t>(s, 3);
  raw<std::uint16_t>(s, 2);  // width
  raw<std::uint16_t>(s, 1);  // height
  raw<std::uint16_t>(s, 1);  // channels
  raw<std::uint32_t>(s, 2);
  // frame 0: one proposal, no ground truth
  raw<float>(s, 1.5f);
  raw<float>(s, -2.0f);
  raw<std::uint16_t>(s, 1);
  for (float v : {0.25f, 0.5f, 0.5f, 0.25f, 0.75f}) raw<float>(s, v);
  raw<std::uint16_t>(s, 0);
  // frame 1: no proposals, one ground-truth box
  raw<float>(s, 0.0f);
  raw<float>(s, 4.0f);
  raw<std::uint16_t>(s, 0);
  raw<std::uint16_t>(s, 1);
  for (float v : {0.75f, 0.5f, 0.5f, 1.0f}) raw<float>(s, v);
  return s;
}

}  // namespace

TEST(Container, RandomSequencesRoundTrip) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seq = oracle::random_sequence(rng);
    expect_equal(decode(encode(seq)), seq);
  }
}

TEST(Container, HandBuiltFixtureDecodes) {
  const auto seq = decode(hand_fixture());
  EXPECT_EQ(seq.video_id, "ab");
  EXPECT_EQ(seq.label, 3);
  EXPECT_EQ(seq.width, 2u);
  EXPECT_EQ(seq.height, 1u);
  ASSERT_EQ(seq.frames.size(), 2u);
  EXPECT_EQ(seq.frames[0].feature.data(), (std::vector<double>{1.5, -2.0}));
  ASSERT_EQ(seq.frames[0].proposals.size(), 1u);
  EXPECT_EQ(seq.frames[0].proposals[0], (BoundingBox{0.25, 0.5, 0.5, 0.25, 0.75}));
  EXPECT_TRUE(seq.frames[0].gt_boxes.empty());
  EXPECT_EQ(seq.frames[1].index, 1u);
  EXPECT_EQ(seq.frames[1].gt_boxes[0], (BoundingBox{0.75, 0.5, 0.5, 1.0, std::nullopt}));
  EXPECT_EQ(encode(seq), hand_fixture());
}

TEST(Container, StreamingMatchesWholeFile) {
  std::mt19937_64 rng(2);
  SynthSpec spec;
  spec.width = 3;
  spec.height = 2;
  spec.channels = 2;
  spec.frames = 6;
  const auto seq = synth_sequence(spec, 5);
  const auto bytes = encode(seq);
  SequenceReader reader(std::make_unique<std::istringstream>(bytes));
  EXPECT_EQ(reader.header().frame_count, 6u);
  std::size_t t = 0;
  const auto whole = decode(bytes);
  while (auto f = reader.next()) {
    EXPECT_EQ(f->feature.data(), whole.frames[t].feature.data());
    EXPECT_EQ(f->proposals, whole.frames[t].proposals);
    ++t;
  }
  EXPECT_EQ(t, 6u);
  EXPECT_FALSE(reader.next().has_value());
}

TEST(Container, EveryTruncationIsTyped) {
  const auto bytes = hand_fixture();
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const auto code = decode_error(bytes.substr(0, n));
    if (n < 5) {
      EXPECT_EQ(code, ErrorCode::kBadMagic) << n;
    } else {
      EXPECT_EQ(code, ErrorCode::kTruncated) << n;
    }
  }
}

TEST(Container, CorruptHeadersAreRejected) {
  auto bytes = hand_fixture();
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), ErrorCode::kBadMagic);

  auto bad_version = bytes;
  bad_version[5] = 2;
  EXPECT_EQ(decode_error(bad_version), ErrorCode::kVersionMismatch);

  EXPECT_EQ(decode_error(bytes + "x"), ErrorCode::kInvalidRecord);

  auto zero_width = bytes;
  zero_width[15] = 0;  // after magic, version, id length, "ab", label
  EXPECT_EQ(decode_error(zero_width), ErrorCode::kDimInconsistent);

  auto bad_label = bytes;
  std::int32_t minus_two = -2;
  std::memcpy(bad_label.data() + 11, &minus_two, 4);
  EXPECT_EQ(decode_error(bad_label), ErrorCode::kInvalidRecord);
}

TEST(Container, InvalidBoxesAreRejected) {
  auto bytes = hand_fixture();
  // The first proposal's score sits after 25 header bytes, 8 feature bytes,
  // the count and four floats.
  const std::size_t score_at = 25 + 8 + 2 + 16;
  float bad = 1.5f;
  std::memcpy(bytes.data() + score_at, &bad, 4);
  EXPECT_EQ(decode_error(bytes), ErrorCode::kInvalidRecord);

  auto nan = hand_fixture();
  float q = NAN;
  std::memcpy(nan.data() + 25, &q, 4);
  EXPECT_EQ(decode_error(nan), ErrorCode::kNonFinite);
}

TEST(Container, HugeDeclaredCountsFailWithoutAllocating) {
  std::string s = "PSVID";
  raw<std::uint16_t>(s, 1);
  raw<std::uint16_t>(s, 0);
  raw<std::int32_t>(s, -1);
  raw<std::uint16_t>(s, 65535);
  raw<std::uint16_t>(s, 65535);
  raw<std::uint16_t>(s, 65535);
  raw<std::uint32_t>(s, 4000000000u);
  EXPECT_EQ(decode_error(s), ErrorCode::kTruncated);
}

TEST(Container, WriterRejectsInconsistentFrames) {
  VideoSequence seq{"x", std::nullopt, 2, 2, 1, {}};
  FrameRecord f;
  f.feature = FeatureMap(2, 1, 1);
  seq.frames.push_back(f);
  std::ostringstream out;
  try {
    write_sequence(seq, out);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimInconsistent);
  }
  seq.frames[0].feature = FeatureMap(2, 2, 1);
  seq.frames[0].proposals.push_back({0.5, 0.5, 0.1, 0.1, std::nullopt});
  EXPECT_THROW(write_sequence(seq, out), Error);
}

TEST(Synth, DeterministicPerSeed) {
  SynthSpec spec;
  spec.frames = 12;
  EXPECT_EQ(encode(synth_sequence(spec, 3)), encode(synth_sequence(spec, 3)));
  EXPECT_NE(encode(synth_sequence(spec, 3)), encode(synth_sequence(spec, 4)));
}

TEST(Synth, GroundTruthIsTheActorCellProposal) {
  SynthSpec spec;
  spec.frames = 20;
  const auto seq = synth_sequence(spec, 9);
  for (const auto& f : seq.frames) {
    ASSERT_EQ(f.gt_boxes.size(), 1u);
    ASSERT_EQ(f.proposals.size(), spec.distractors + 1);
    const auto& gt = f.gt_boxes[0];
    EXPECT_NEAR(gt.w, 1.0 / spec.width, 1e-6);
    EXPECT_NEAR(gt.h, 1.0 / spec.height, 1e-6);
    const auto actor = cell_of(gt, spec.width, spec.height);
    std::size_t inside = 0;
    for (const auto& p : f.proposals) {
      if (cell_of(p, spec.width, spec.height) == actor) ++inside;
    }
    EXPECT_EQ(inside, 1u);
  }
}

TEST(Synth, ActorFreeSceneHasNoGroundTruth) {
  SynthSpec spec;
  spec.frames = 5;
  spec.actor = false;
  const auto seq = synth_sequence(spec, 1);
  for (const auto& f : seq.frames) {
    EXPECT_TRUE(f.gt_boxes.empty());
    EXPECT_EQ(f.proposals.size(), spec.distractors);
  }
}
