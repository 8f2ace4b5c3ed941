#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crtbev/config.hpp"
#include "crtbev/io.hpp"
#include "crtbev/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitGeneration = 3;
constexpr int kExitIo = 4;

crtbev::RunConfig load_config(const std::string& path, const std::string& mode_flag) {
  crtbev::RunConfig cfg =
      path.empty() ? crtbev::default_run_config() : crtbev::load_run_config(path);
  if (const char* env_seed = std::getenv("CRTBEV_SEED")) {
    try {
      std::size_t pos = 0;
      cfg.seed = std::stoull(env_seed, &pos);
      if (pos != std::string(env_seed).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw crtbev::ConfigError("CRTBEV_SEED: must be an unsigned integer");
    }
    cfg.scene.seed = cfg.seed;
  }
  if (!mode_flag.empty()) cfg.mode = crtbev::pipeline_mode_from_string(mode_flag);
  cfg.validate();
  return cfg;
}

std::vector<std::string> sequence_ids(const crtbev::RunConfig& cfg) {
  std::vector<std::string> ids;
  ids.reserve(cfg.n_sequences);
  for (int i = 0; i < cfg.n_sequences; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "seq_%03d", i);
    ids.emplace_back(buf);
  }
  return ids;
}

std::vector<crtbev::FrameSequence> load_scene_set(const std::filesystem::path& dir) {
  const nlohmann::json manifest =
      nlohmann::json::parse(crtbev::read_text(dir / "manifest.json"));
  std::vector<crtbev::FrameSequence> seqs;
  for (const auto& entry : manifest.at("sequences"))
    seqs.push_back(crtbev::load_sequence(dir / entry.at("id").get<std::string>()));
  return seqs;
}

int cmd_generate(const crtbev::RunConfig& cfg, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  const std::vector<crtbev::FrameSequence> seqs = crtbev::generate_scene_set(cfg);
  const std::vector<std::string> ids = sequence_ids(cfg);
  const std::uint64_t scene_stream = crtbev::derive_seed(cfg.seed, "scene");
  for (int i = 0; i < cfg.n_sequences; ++i) {
    crtbev::SceneConfig per_seq = cfg.scene;
    per_seq.seed = crtbev::derive_seed(scene_stream, static_cast<std::uint64_t>(i));
    crtbev::save_sequence(out / ids[i], seqs[i], per_seq);
  }
  const nlohmann::json manifest = crtbev::build_manifest(out, ids, cfg.seed);
  crtbev::write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "generated " << cfg.n_sequences << " sequences of " << cfg.n_frames
            << " frames in " << out.string() << "\n";
  return kExitOk;
}

int cmd_run(const crtbev::RunConfig& cfg, const std::filesystem::path& scenes,
            const std::filesystem::path& out, const std::string& weights_path) {
  std::filesystem::create_directories(out);
  const std::vector<crtbev::FrameSequence> seqs = load_scene_set(scenes);
  crtbev::PipelineContext ctx = crtbev::PipelineContext::create(cfg);
  if (!weights_path.empty()) {
    crtbev::load_heads(weights_path, ctx.weights.velocity, ctx.weights.occupancy);
    ctx.weights.heads_fitted = true;
  }

  std::vector<crtbev::SequenceResult> results(seqs.size());
  crtbev::parallel_for(static_cast<int>(seqs.size()), cfg.workers, [&](int i) {
    results[i] = crtbev::run_sequence(seqs[i], ctx);
  });

  std::vector<crtbev::ScenePrediction> preds;
  std::vector<crtbev::EvalReport> per_scene;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const std::filesystem::path seq_dir = out / ("seq_" + std::to_string(i));
    std::filesystem::create_directories(seq_dir);
    crtbev::save_grid(seq_dir / "fused.bin", results[i].final_bev);
    nlohmann::json dets = nlohmann::json::array();
    for (const crtbev::Detection& d : results[i].detections) {
      dets.push_back({{"center", {d.center.x, d.center.y}},
                      {"score", d.score},
                      {"velocity", {d.velocity.x, d.velocity.y}}});
    }
    crtbev::write_text_atomic(seq_dir / "detections.json", dets.dump(2) + "\n");
    preds.push_back({results[i].detections, results[i].eval_gt});
    per_scene.push_back(crtbev::match_and_score(
        {{results[i].detections, results[i].eval_gt}}, cfg.eval.eval));
  }
  const crtbev::EvalReport pooled = crtbev::match_and_score(preds, cfg.eval.eval);
  crtbev::write_text_atomic(out / "eval_report.json", pooled.to_json().dump(2) + "\n");
  crtbev::write_text_atomic(out / "eval_report.csv",
                            crtbev::eval_report_csv(per_scene, pooled, cfg.eval.eval));
  std::cout << "mode " << crtbev::to_string(cfg.mode) << ": mean AP " << pooled.mean_ap
            << " over " << seqs.size() << " sequences\n";
  return kExitOk;
}

int cmd_fit(const crtbev::RunConfig& cfg, const std::filesystem::path& scenes,
            const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  const std::vector<crtbev::FrameSequence> seqs = load_scene_set(scenes);
  const crtbev::PipelineContext ctx = crtbev::PipelineContext::create(cfg);
  const crtbev::FitResult fit = crtbev::fit_sequences(seqs, ctx, cfg.mode);
  crtbev::save_heads(out / "heads.bin", fit.velocity, fit.occupancy);
  const nlohmann::json report = {{"l_vel", fit.l_vel},
                                 {"l_occ", fit.l_occ},
                                 {"n_samples", fit.n_samples},
                                 {"lambda_r", fit.ridge_lambda}};
  crtbev::write_text_atomic(out / "fit_report.json", report.dump(2) + "\n");
  std::cout << "fitted heads on " << fit.n_samples << " cells: l_vel " << fit.l_vel
            << ", l_occ " << fit.l_occ << "\n";
  return kExitOk;
}

int cmd_compare(const crtbev::RunConfig& cfg, const std::filesystem::path& scenes,
                const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  const std::vector<crtbev::FrameSequence> seqs = load_scene_set(scenes);
  const crtbev::CompareReport report = crtbev::compare_pipelines(seqs, cfg);
  crtbev::write_text_atomic(out / "compare.csv", report.csv());
  crtbev::write_text_atomic(out / "compare.json", report.to_json().dump(2) + "\n");
  std::cout << report.table();
  return kExitOk;
}

int cmd_bench(const crtbev::RunConfig& cfg, const std::filesystem::path& out) {
  const nlohmann::json result = crtbev::bench_pipeline(cfg);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    crtbev::write_text_atomic(out / "bench.json", result.dump(2) + "\n");
  }
  std::cout << result.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camera-radar-temporal BEV fusion harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scenes_dir, weights_path, mode_flag;
  int workers = 0;

  const auto add_common = [&](CLI::App* cmd, bool needs_scenes) {
    cmd->add_option("--config", config_path, "config JSON path");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--workers", workers, "worker threads for scene-level parallelism");
    cmd->add_option("--mode", mode_flag, "motion-aware | naive-concat | camera-only");
    if (needs_scenes)
      cmd->add_option("--scenes", scenes_dir, "generated scene set directory")->required();
  };

  CLI::App* generate = app.add_subcommand("generate", "write a seeded scene set");
  add_common(generate, false);
  CLI::App* run = app.add_subcommand("run", "run the fusion pipeline over scenes");
  add_common(run, true);
  run->add_option("--weights", weights_path, "fitted head weights (heads.bin)");
  CLI::App* fit = app.add_subcommand("fit", "fit motion/occupancy heads");
  add_common(fit, true);
  CLI::App* compare = app.add_subcommand("compare", "motion-aware vs naive-concat gains");
  add_common(compare, true);
  CLI::App* bench = app.add_subcommand("bench", "per-stage latency");
  add_common(bench, false);

  CLI11_PARSE(app, argc, argv);

  try {
    crtbev::RunConfig cfg = load_config(config_path, mode_flag);
    if (workers > 0) cfg.workers = workers;
    const std::filesystem::path out = out_dir.empty() ? "crtbev_out" : out_dir;
    if (generate->parsed()) return cmd_generate(cfg, out);
    if (run->parsed()) return cmd_run(cfg, scenes_dir, out, weights_path);
    if (fit->parsed()) return cmd_fit(cfg, scenes_dir, out);
    if (compare->parsed()) return cmd_compare(cfg, scenes_dir, out);
    if (bench->parsed()) return cmd_bench(cfg, out_dir.empty() ? "" : out_dir);
  } catch (const crtbev::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const crtbev::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.find("scene overconstrained") != std::string::npos) {
      std::cerr << "generation error: " << what << "\n";
      return kExitGeneration;
    }
    std::cerr << "error: " << what << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
