#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pstream/container.hpp"
#include "pstream/engine.hpp"
#include "pstream/evaluation.hpp"

namespace pstream {

// One JSON object per line, no trailing newline.
std::string metrics_row(std::string_view video_id, const StepResult& step, double wall_time);
// {video_id, frame, boxes: [[cx, cy, w, h, score, fallback]], grids: [[i, j, weight]], feature}
std::string localization_row(std::string_view video_id, const StepResult& step);

// Groups localization rows by video. The first selected box of each row
// forms the tube; the actor feature of each row is kept for pooling. Blank
// lines are skipped; malformed rows throw kInvalidRecord naming the line.
std::vector<VideoPrediction> read_predictions(std::istream& in);

// Label and first ground-truth box per frame.
VideoTruth truth_from_sequence(const VideoSequence& sequence);

std::string report_json(const EvaluationReport& report, int indent = 2);
// Per-video rows: video_id,gt_label,cluster,mapped_label,tube_iou,confidence
std::string report_csv(const EvaluationReport& report);

}  // namespace pstream
