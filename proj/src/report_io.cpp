// SPDX-License-Identifier: Apache-2.0
#include "vg4d/infer.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vg4d {

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["per_class_accuracy"] = report.per_class_accuracy;
  j["confusion_matrix"] = report.confusion;
  nlohmann::ordered_json mask;
  mask["pc"] = report.mask.pc;
  mask["pc_text"] = report.mask.pc_text;
  mask["rgb"] = report.mask.rgb;
  mask["rgb_text"] = report.mask.rgb_text;
  j["channel_mask"] = mask;
  nlohmann::ordered_json w;
  w["w_pc"] = report.weights.w_pc;
  w["w_pc_text"] = report.weights.w_pc_text;
  w["w_rgb"] = report.weights.w_rgb;
  w["w_rgb_text"] = report.weights.w_rgb_text;
  j["fusion_weights"] = w;
  return j.dump(2) + "\n";
}

void write_eval_report(const std::string& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << report_to_json(report);
  if (!os) throw DataError("write failure on " + path);
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << kAblationHeader << "\n";
  for (const auto& r : rows) {
    os << r.name << ',' << int(r.random_frame_sampling) << ',' << int(r.cosine_decay) << ','
       << int(r.normalize_offsets) << ',' << int(r.include_center_feature) << ',' << std::hex
       << std::setw(16) << std::setfill('0') << r.config_hash << std::dec << std::setfill(' ') << ','
       << std::setprecision(10) << r.test_accuracy << "\n";
  }
  if (!os) throw DataError("write failure on " + path);
}

}  // namespace vg4d
