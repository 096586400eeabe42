#include "pstream/jsonl.hpp"

#include <istream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pstream/error.hpp"

namespace pstream {

using nlohmann::json;

std::string metrics_row(std::string_view video_id, const StepResult& step, double wall_time) {
  json row = {
      {"video_id", video_id},
      {"frame", step.frame_index},
      {"event", step.loss.event_scalar},
      {"object_feature", step.loss.object_feature},
      {"object_center", step.loss.object_center},
      {"object_geometry", step.loss.object_geometry},
      {"total", step.loss.total},
      {"lr", step.lr},
      {"wall_time", wall_time},
  };
  return row.dump();
}

std::string localization_row(std::string_view video_id, const StepResult& step) {
  json boxes = json::array();
  for (const auto& b : step.localization.selected) {
    boxes.push_back({b.cx, b.cy, b.w, b.h, b.score.value_or(0.0), step.localization.fallback});
  }
  json grids = json::array();
  for (const auto& g : step.localization.attended_grids) {
    grids.push_back({g.cell.i, g.cell.j, g.weight});
  }
  json row = {
      {"video_id", video_id},
      {"frame", step.frame_index},
      {"boxes", boxes},
      {"grids", grids},
      {"feature", step.actor_feature.data()},
  };
  return row.dump();
}

std::vector<VideoPrediction> read_predictions(std::istream& in) {
  std::vector<VideoPrediction> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json row = json::parse(line);
      const std::string id = row.at("video_id").get<std::string>();
      if (!row.at("frame").is_number_unsigned()) {
        throw Error(ErrorCode::kInvalidRecord, "frame must be a non-negative integer");
      }
      const std::size_t frame = row.at("frame").get<std::size_t>();
      auto [it, inserted] = index.try_emplace(id, out.size());
      if (inserted) out.push_back(VideoPrediction{id, {}, {}});
      VideoPrediction& video = out[it->second];
      const auto& boxes = row.at("boxes");
      if (!boxes.empty()) {
        const auto& b = boxes.at(0);
        BoundingBox box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                        b.at(3).get<double>(), std::nullopt};
        if (b.size() > 4) box.score = b.at(4).get<double>();
        validate(box, "predicted box");
        video.tube[frame] = box;
      }
      if (row.contains("feature")) {
        auto values = row.at("feature").get<std::vector<double>>();
        if (!values.empty()) {
          const std::size_t n = values.size();
          video.features.emplace_back(std::vector<std::size_t>{n}, std::move(values));
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kInvalidRecord,
                  "prediction line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidRecord,
                  "prediction line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

VideoTruth truth_from_sequence(const VideoSequence& sequence) {
  VideoTruth truth;
  truth.video_id = sequence.video_id;
  if (sequence.label) truth.label = *sequence.label;
  for (const auto& frame : sequence.frames) {
    if (!frame.gt_boxes.empty()) truth.tube[frame.index] = frame.gt_boxes.front();
  }
  return truth;
}

namespace {

std::string sigma_key(double sigma) {
  std::ostringstream os;
  os << sigma;
  return os.str();
}

}  // namespace

std::string report_json(const EvaluationReport& report, int indent) {
  json doc;
  doc["k"] = report.k;
  if (!report.k_scan.empty()) {
    json scan = json::object();
    for (const auto& [k, v] : report.k_scan) scan[std::to_string(k)] = v;
    doc["k_scan"] = scan;
  }
  json map = json::object();
  for (const auto& [sigma, v] : report.map) map[sigma_key(sigma)] = v;
  json recall = json::object();
  for (const auto& [sigma, v] : report.recall) recall[sigma_key(sigma)] = v;
  doc["map"] = map;
  doc["recall"] = recall;
  doc["accuracy"] = report.accuracy;
  doc["homogeneity"] = report.homogeneity;
  doc["rank_by"] = report.rank_by == RankBy::kMargin ? "margin" : "tube_iou";
  doc["warnings"] = report.warnings;
  doc["missing_ground_truth"] = report.missing_ground_truth;
  json videos = json::array();
  for (const auto& v : report.videos) {
    videos.push_back({
        {"video_id", v.video_id},
        {"gt_label", v.gt_label ? json(*v.gt_label) : json(nullptr)},
        {"cluster", v.cluster},
        {"mapped_label", v.mapped_label},
        {"tube_iou", v.mean_tube_iou},
        {"confidence", v.confidence},
    });
  }
  doc["videos"] = videos;
  return doc.dump(indent);
}

std::string report_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "video_id,gt_label,cluster,mapped_label,tube_iou,confidence\n";
  for (const auto& v : report.videos) {
    os << v.video_id << ',';
    if (v.gt_label) os << *v.gt_label;
    os << ',' << v.cluster << ',' << v.mapped_label << ',' << v.mean_tube_iou << ','
       << v.confidence << '\n';
  }
  return os.str();
}

}  // namespace pstream
