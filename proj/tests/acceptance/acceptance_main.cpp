// SPDX-License-Identifier: Apache-2.0
//
// Acceptance harness: one pass/fail line per shipped guarantee. Numeric and
// identity checks run in-process; the end-to-end criteria drive the vg4d
// binary exactly as a user would.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "vg4d/infer.hpp"
#include "vg4d/selfcheck.hpp"

namespace fs = std::filesystem;
using vg4d::Rng;

namespace {

std::string g_cli;
fs::path g_work;
bool g_all_pass = true;

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << idx << " (" << name << "): " << detail
            << std::endl;
  g_all_pass = g_all_pass && pass;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs the vg4d binary, appending stdout/stderr to work/cli.log.
int run_cli(const std::string& args) {
  const std::string cmd =
      "'" + g_cli + "' " + args + " >> '" + (g_work / "cli.log").string() + "' 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double read_accuracy(const fs::path& eval_json) {
  const std::string text = slurp(eval_json);
  if (text.empty()) return -1.0;
  return nlohmann::json::parse(text).at("accuracy").get<double>();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::string summarize(const std::vector<vg4d::selfcheck::CheckResult>& rs) {
  double worst = 0;
  std::string worst_name = "-";
  int failed = 0;
  for (const auto& r : rs) {
    if (!r.pass) ++failed;
    const double rel = r.tol > 0 ? r.err / r.tol : r.err;
    if (rel >= worst) {
      worst = rel;
      worst_name = r.name + " err=" + fmt(r.err);
    }
  }
  return (failed == 0 ? "all " + std::to_string(rs.size()) + " checks pass"
                      : std::to_string(failed) + " of " + std::to_string(rs.size()) + " checks FAIL") +
         ", worst " + worst_name;
}

bool all_pass(const std::vector<vg4d::selfcheck::CheckResult>& rs) {
  for (const auto& r : rs)
    if (!r.pass) return false;
  return true;
}

// --------------------------------------------------------------------------
// criteria 1-4: numeric suites, in-process
// --------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  auto results = vg4d::selfcheck::gradcheck_ops(100, 1);
  results.push_back(vg4d::selfcheck::gradcheck_end_to_end(100, 1));
  const double secs = seconds_since(t0);
  const bool pass = all_pass(results) && secs < 120.0;
  report(1, "gradient suite", pass,
         summarize(results) + ", " + fmt(secs) + " s (limit 120 s), 100 seeds");
}

void criterion_geometry_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = vg4d::selfcheck::oracle_suite_geometry(200, 2);
  const double secs = seconds_since(t0);
  const bool pass = all_pass(results) && secs < 60.0;
  report(2, "geometry oracles", pass,
         summarize(results) + " (exact, 200 instances), " + fmt(secs) + " s (limit 60 s)");
}

void criterion_conv_oracle() {
  const auto results = vg4d::selfcheck::oracle_suite_conv(50, 3);
  report(3, "spatio-temporal conv oracle", all_pass(results), summarize(results) + ", tol 1e-6");
}

void criterion_loss_identities() {
  const auto results = vg4d::selfcheck::loss_identity_suite(4);
  report(4, "loss identities", all_pass(results),
         summarize(results) + " (zero at N=1, ln K, ln N, 1000-batch lower bound)");
}

// --------------------------------------------------------------------------
// criteria 5-8: end-to-end through the CLI
// --------------------------------------------------------------------------

/// Desk-scale recipe: full dataset shape with a small encoder.
void write_accept_config(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  os << R"({
  "data": {"num_classes": 8, "samples_per_class": 40, "train_per_class": 32,
           "frames_per_video": 8, "points_per_frame": 64, "noise_sigma": 0.0},
  "model": {"spatial_subsample_rate": [4, 2], "mlp_widths": [[32], [64]],
            "radius": [0.35, 0.7], "k_nbr": 9, "temporal_radius": 1,
            "num_classes": 8, "embed_dim": 16, "pool_frames": 3},
  "pipeline": {"clip_len": 3, "frame_stride": 1, "points_per_frame": 48},
  "pretrain": {"epochs": 200, "lr_init": 0.1, "lr_final": 0.0, "weight_decay": 0.0001,
               "batch_size": 32, "momentum": 0.9, "decay": "cosine"},
  "finetune": {"epochs": 60, "lr_init": 0.01, "lr_final": 0.001, "weight_decay": 0.0001,
               "batch_size": 32, "momentum": 0.9, "decay": "cosine"}
})";
}

struct PipelineArtifacts {
  std::string config;
  std::string manifest;
  std::string checkpoint;       // pretrained
  std::string fine_checkpoint;  // finetuned
  std::string store;
  double fused_acc = -1;
  bool data_ok = false;
  bool pretrain_ok = false;
  bool finetune_ok = false;
};

void criterion_end_to_end(PipelineArtifacts& art) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = g_work / "c5";
  art.config = (g_work / "accept.json").string();
  write_accept_config(art.config);

  const std::string data = (dir / "data").string();
  int rc = run_cli("synth-data --config '" + art.config + "' --seed 42 --output-dir '" + data + "'");
  if (rc != 0) {
    report(5, "end-to-end synthetic", false, "synth-data exited " + std::to_string(rc));
    return;
  }
  art.manifest = (fs::path(data) / "manifest.jsonl").string();
  art.data_ok = true;

  const std::string pre = (dir / "pretrain").string();
  rc = run_cli("pretrain --config '" + art.config + "' --seed 42 --manifest '" + art.manifest +
               "' --output-dir '" + pre + "'");
  if (rc != 0) {
    report(5, "end-to-end synthetic", false, "pretrain exited " + std::to_string(rc));
    return;
  }
  art.checkpoint = (fs::path(pre) / "checkpoint.ckpt").string();
  art.pretrain_ok = true;

  const std::string ev = (dir / "eval").string();
  rc = run_cli("eval --config '" + art.config + "' --seed 42 --manifest '" + art.manifest +
               "' --checkpoint '" + art.checkpoint + "' --output-dir '" + ev + "'");
  const double secs = seconds_since(t0);
  if (rc != 0) {
    report(5, "end-to-end synthetic", false, "eval exited " + std::to_string(rc));
    return;
  }
  const double acc = read_accuracy(fs::path(ev) / "eval.json");
  const bool pass = acc >= 0.90 && secs < 600.0;
  report(5, "end-to-end synthetic", pass,
         "pc-only test top-1 " + fmt(acc) + " (need >= 0.9) after 200 pretrain epochs, " + fmt(secs) +
             " s (limit 600 s)");
}

void criterion_alignment(PipelineArtifacts& art) {
  if (!art.pretrain_ok) {
    report(6, "alignment efficacy", false, "skipped: pretrain prerequisite failed");
    return;
  }
  const fs::path dir = g_work / "c6";

  const std::string embed = (dir / "embed").string();
  int rc = run_cli("synth-embed --config '" + art.config + "' --seed 43 --manifest '" + art.manifest +
                   "' --output-dir '" + embed + "'");
  if (rc != 0) {
    report(6, "alignment efficacy", false, "synth-embed exited " + std::to_string(rc));
    return;
  }
  art.store = (fs::path(embed) / "store").string();

  const std::string fine = (dir / "finetune").string();
  rc = run_cli("finetune --config '" + art.config + "' --seed 43 --manifest '" + art.manifest +
               "' --store '" + art.store + "' --init-checkpoint '" + art.checkpoint +
               "' --output-dir '" + fine + "'");
  if (rc != 0) {
    report(6, "alignment efficacy", false, "finetune exited " + std::to_string(rc));
    return;
  }
  art.fine_checkpoint = (fs::path(fine) / "checkpoint.ckpt").string();
  art.finetune_ok = true;

  const auto eval_channels = [&](const std::string& channels, const std::string& out) {
    const std::string flags = channels.empty() ? "" : " --channels " + channels;
    const int erc = run_cli("eval --config '" + art.config + "' --seed 43 --manifest '" + art.manifest +
                            "' --store '" + art.store + "' --checkpoint '" + art.fine_checkpoint +
                            "'" + flags + " --output-dir '" + (dir / out).string() + "'");
    return erc == 0 ? read_accuracy(dir / out / "eval.json") : -1.0;
  };
  const double acc_text = eval_channels("pc_text", "eval_pc_text");
  const double acc_pc = eval_channels("pc", "eval_pc");
  art.fused_acc = eval_channels("", "eval_fused");

  const bool pass = acc_text >= 0.85 && art.fused_acc >= acc_pc && acc_pc >= 0.0;
  report(6, "alignment efficacy", pass,
         "pc-text top-1 " + fmt(acc_text) + " (need >= 0.85), fused " + fmt(art.fused_acc) +
             " vs pc-only " + fmt(acc_pc) + " (need fused >= pc-only)");
}

void criterion_ablation(const PipelineArtifacts& art) {
  if (!art.data_ok) {
    report(7, "ablation harness", false, "skipped: dataset prerequisite failed");
    return;
  }
  const fs::path dir = g_work / "c7";
  const int rc = run_cli("ablate --config '" + art.config + "' --seed 44 --manifest '" + art.manifest +
                         "' --epochs 3 --output-dir '" + dir.string() + "'");
  if (rc != 0) {
    report(7, "ablation harness", false, "ablate exited " + std::to_string(rc));
    return;
  }

  std::istringstream csv(slurp(dir / "ablation.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line))
    if (!line.empty()) lines.push_back(line);

  bool shape_ok = lines.size() == 6 && lines[0] == std::string(vg4d::kAblationHeader);
  const char* expected[5] = {"baseline", "+random_frame_sampling", "+cosine_decay", "+normalize_offsets",
                             "+include_center_feature"};
  std::string accs;
  for (int i = 1; shape_ok && i <= 5; ++i) {
    const std::string& row = lines[static_cast<std::size_t>(i)];
    shape_ok = shape_ok && row.rfind(std::string(expected[i - 1]) + ",", 0) == 0;
    const std::size_t last = row.find_last_of(',');
    const double acc = std::strtod(row.c_str() + last + 1, nullptr);
    shape_ok = shape_ok && acc >= 0.0 && acc <= 1.0;
    accs += (i > 1 ? " " : "") + fmt(acc);
  }
  report(7, "ablation harness", shape_ok,
         shape_ok ? "5 rows (baseline + 4 additive toggles), accuracies " + accs
                  : "ablation.csv malformed: " + std::to_string(lines.size()) + " lines");
}

void criterion_determinism(const PipelineArtifacts& art) {
  if (!art.finetune_ok) {
    report(8, "determinism", false, "skipped: finetune prerequisite failed");
    return;
  }
  const fs::path dir = g_work / "c8";

  // identical eval re-run: metrics JSON must match byte for byte
  const std::string ev = (dir / "eval_rerun").string();
  int rc = run_cli("eval --config '" + art.config + "' --seed 43 --manifest '" + art.manifest +
                   "' --store '" + art.store + "' --checkpoint '" + art.fine_checkpoint +
                   "' --output-dir '" + ev + "'");
  const std::string a = slurp(g_work / "c6" / "eval_fused" / "eval.json");
  const std::string b = slurp(fs::path(ev) / "eval.json");
  const bool eval_same = rc == 0 && !a.empty() && a == b;

  // identical short training runs: metrics log and checkpoint must match
  const auto train_once = [&](const std::string& out) {
    return run_cli("pretrain --config '" + art.config + "' --seed 77 --epochs 3 --manifest '" +
                   art.manifest + "' --output-dir '" + (dir / out).string() + "'");
  };
  const bool t_ok = train_once("p1") == 0 && train_once("p2") == 0;
  const bool train_same = t_ok && slurp(dir / "p1" / "metrics.csv") == slurp(dir / "p2" / "metrics.csv") &&
                          !slurp(dir / "p1" / "metrics.csv").empty() &&
                          slurp(dir / "p1" / "checkpoint.ckpt") == slurp(dir / "p2" / "checkpoint.ckpt");

  report(8, "determinism", eval_same && train_same,
         std::string("same-seed eval.json ") + (eval_same ? "byte-identical" : "DIFFERS") +
             ", 3-epoch rerun metrics.csv+checkpoint " + (train_same ? "byte-identical" : "DIFFERS"));
}

// --------------------------------------------------------------------------
// criterion 9: fusion identities, in-process
// --------------------------------------------------------------------------

void criterion_fusion_identities() {
  Rng rng(9);
  bool one_hot_ok = true, scale_ok = true;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(8));
    vg4d::ScoreBundle b;
    for (Eigen::VectorXd* v : {&b.pc, &b.pc_text, &b.rgb, &b.rgb_text}) {
      v->resize(k);
      for (int i = 0; i < k; ++i) (*v)(i) = rng.uniform() + 1e-3;
      *v /= v->sum();
    }
    b.has_text = true;
    b.has_video = true;

    for (int c = 0; c < 4; ++c) {
      vg4d::FusionWeights w;
      w.w_pc = w.w_pc_text = w.w_rgb = w.w_rgb_text = 0;
      const double amount = 0.5 + rng.uniform() * 3.0;
      const Eigen::VectorXd* channel = nullptr;
      switch (c) {
        case 0: w.w_pc = amount; channel = &b.pc; break;
        case 1: w.w_pc_text = amount; channel = &b.pc_text; break;
        case 2: w.w_rgb = amount; channel = &b.rgb; break;
        default: w.w_rgb_text = amount; channel = &b.rgb_text; break;
      }
      const auto [fused, arg] = vg4d::fuse(b, w);
      one_hot_ok = one_hot_ok && (fused.array() == channel->array()).all();
    }

    vg4d::FusionWeights w;
    w.w_pc = rng.uniform() + 0.01;
    w.w_pc_text = rng.uniform();
    w.w_rgb = rng.uniform();
    w.w_rgb_text = rng.uniform();
    const double lambda = std::array<double, 4>{3.0, 7.0, 0.13, 1000.0}[trial % 4];
    vg4d::FusionWeights ws = w;
    ws.w_pc *= lambda;
    ws.w_pc_text *= lambda;
    ws.w_rgb *= lambda;
    ws.w_rgb_text *= lambda;
    const auto [f1, a1] = vg4d::fuse(b, w);
    const auto [f2, a2] = vg4d::fuse(b, ws);
    const double diff = (f1 - f2).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    scale_ok = scale_ok && diff <= 1e-12 && a1 == a2;
  }
  report(9, "fusion identities", one_hot_ok && scale_ok,
         std::string("one-hot channels ") + (one_hot_ok ? "bit-exact" : "NOT bit-exact") +
             ", weight-scaling max deviation " + fmt(worst) + " (tol 1e-12), 200 trials");
}

}  // namespace

int main(int argc, char** argv) {
  std::string work;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") {
      g_cli = argv[i + 1];
    } else if (flag == "--work") {
      work = argv[i + 1];
    } else {
      std::cerr << "usage: acceptance --cli <vg4d binary> [--work <dir>]\n";
      return 2;
    }
  }
  if (g_cli.empty() || !fs::exists(g_cli)) {
    std::cerr << "acceptance: --cli must point at the built vg4d binary\n";
    return 2;
  }
  g_work = work.empty() ? fs::temp_directory_path() / "vg4d_acceptance" : fs::path(work);
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  criterion_gradients();
  criterion_geometry_oracles();
  criterion_conv_oracle();
  criterion_loss_identities();

  PipelineArtifacts art;
  criterion_end_to_end(art);
  criterion_alignment(art);
  criterion_ablation(art);
  criterion_determinism(art);

  criterion_fusion_identities();

  std::cout << (g_all_pass ? "ACCEPTANCE PASSED (9/9)" : "ACCEPTANCE FAILED") << std::endl;
  if (!g_all_pass) std::cout << "logs: " << (g_work / "cli.log").string() << std::endl;
  return g_all_pass ? 0 : 5;
}
