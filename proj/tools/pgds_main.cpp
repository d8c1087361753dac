#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pgds/ablation.hpp"
#include "pgds/checkpoint.hpp"
#include "pgds/common.hpp"
#include "pgds/config.hpp"
#include "pgds/datagen.hpp"
#include "pgds/encoders.hpp"
#include "pgds/evaluate.hpp"
#include "pgds/kernels.hpp"
#include "pgds/png_io.hpp"
#include "pgds/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  bool strict = false;
};

// The shared flags attach to every subcommand so they can appear anywhere on
// the command line.
void add_globals(CLI::App* cmd, GlobalArgs& g) {
  cmd->add_option("--config", g.config_path, "configuration file");
  cmd->add_option("--seed", g.seed, "root random seed")->each([&g](const std::string&) {
    g.seed_given = true;
  });
  cmd->add_option("--out", g.out, "output path");
  cmd->add_flag("--strict-deterministic", g.strict,
                "pin kernels to one thread for bitwise-reproducible output");
}

pgds::PGDSConfig build_config(const GlobalArgs& g) {
  pgds::PGDSConfig cfg;
  if (!g.config_path.empty()) cfg = pgds::load_config(g.config_path);
  if (g.seed_given) cfg.seed = g.seed;
  if (g.strict) cfg.strict_deterministic = true;
  pgds::validate(cfg);
  return cfg;
}

std::string require_data_dir(const std::string& data_flag) {
  if (!data_flag.empty()) return data_flag;
  const char* env = std::getenv("PGDS_DATA_DIR");
  PGDS_CHECK_ARG(env && *env, "no dataset directory: pass --data or set PGDS_DATA_DIR");
  return env;
}

std::string default_pose_path(const std::string& data_dir, const std::string& flag) {
  return flag.empty() ? data_dir + "/pose_encoder.bin" : flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-guided deep-supervision toolkit for clothes-changing re-identification"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::simple);

  GlobalArgs g;

  auto* cmd_gen = app.add_subcommand("gen-data", "render a synthetic re-identification dataset");
  int gd_ids = 8, gd_cams = 2, gd_clothes = 2, gd_images = 4, gd_h = 96, gd_w = 32;
  double gd_train_frac = 0.6;
  std::string gd_style = "a";
  cmd_gen->add_option("--identities", gd_ids, "number of identities");
  cmd_gen->add_option("--cameras", gd_cams, "number of cameras");
  cmd_gen->add_option("--clothes", gd_clothes, "outfits per identity");
  cmd_gen->add_option("--images-per", gd_images, "images per (identity, camera, outfit)");
  cmd_gen->add_option("--height", gd_h, "image height");
  cmd_gen->add_option("--width", gd_w, "image width");
  cmd_gen->add_option("--style", gd_style, "rendering style, a or b");
  cmd_gen->add_option("--train-fraction", gd_train_frac, "fraction of identities for training");
  add_globals(cmd_gen, g);

  auto* cmd_pose = app.add_subcommand("pretrain-pose", "pretrain and freeze the pose encoder");
  std::string pp_data;
  int pp_epochs = 12;
  cmd_pose->add_option("--data", pp_data, "dataset directory");
  cmd_pose->add_option("--epochs", pp_epochs, "pretraining epochs");
  add_globals(cmd_pose, g);

  auto* cmd_train = app.add_subcommand("train", "train the student with pose guidance");
  std::string tr_data, tr_pose, tr_resume;
  double tr_lambda = -1.0;
  std::vector<int> tr_stages;
  cmd_train->add_option("--data", tr_data, "dataset directory");
  cmd_train->add_option("--pose", tr_pose, "pose-encoder checkpoint (default <data>/pose_encoder.bin)");
  cmd_train->add_option("--resume", tr_resume, "resume from a training checkpoint");
  cmd_train->add_option("--lambda", tr_lambda, "guide-loss weight override");
  cmd_train->add_option("--php-stages", tr_stages, "projector stages override")->delimiter(',');
  add_globals(cmd_train, g);

  auto* cmd_eval = app.add_subcommand("eval", "retrieval evaluation of a checkpoint");
  std::string ev_ckpt, ev_data, ev_mode = "standard", ev_report;
  cmd_eval->add_option("--checkpoint", ev_ckpt, "training checkpoint")->required();
  cmd_eval->add_option("--data", ev_data, "dataset directory");
  cmd_eval->add_option("--mode", ev_mode, "standard, cc, or cross");
  cmd_eval->add_option("--report", ev_report, "metrics JSON output path");
  add_globals(cmd_eval, g);

  auto* cmd_query = app.add_subcommand("query", "rank gallery matches for one image");
  std::string qu_ckpt, qu_image, qu_gallery;
  int qu_topk = 5;
  cmd_query->add_option("--checkpoint", qu_ckpt, "training checkpoint")->required();
  cmd_query->add_option("--image", qu_image, "query image PNG")->required();
  cmd_query->add_option("--gallery", qu_gallery, "dataset directory providing the gallery");
  cmd_query->add_option("--topk", qu_topk, "matches to print");
  add_globals(cmd_query, g);

  auto* cmd_heat = app.add_subcommand("heatmap", "saliency overlay for one image");
  std::string hm_ckpt, hm_image;
  cmd_heat->add_option("--checkpoint", hm_ckpt, "training checkpoint")->required();
  cmd_heat->add_option("--image", hm_image, "input image PNG")->required();
  add_globals(cmd_heat, g);

  auto* cmd_ablate = app.add_subcommand("ablate", "sweep lambda or projector depth");
  std::string ab_data, ab_pose, ab_param = "lambda";
  std::vector<double> ab_values;
  std::vector<std::uint64_t> ab_seeds;
  int ab_parallel = 1;
  cmd_ablate->add_option("--data", ab_data, "dataset directory");
  cmd_ablate->add_option("--pose", ab_pose, "pose-encoder checkpoint");
  cmd_ablate->add_option("--param", ab_param, "lambda or php_depth");
  cmd_ablate->add_option("--values", ab_values, "sweep values")->delimiter(',')->required();
  cmd_ablate->add_option("--seeds", ab_seeds, "seeds per value")->delimiter(',')->required();
  cmd_ablate->add_option("--parallel", ab_parallel, "independent cells to run concurrently");
  add_globals(cmd_ablate, g);

  auto* cmd_report = app.add_subcommand("report", "markdown summary of finished runs");
  std::vector<std::string> rp_runs;
  cmd_report->add_option("--runs", rp_runs, "run directories")->delimiter(',')->required();
  add_globals(cmd_report, g);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.strict) pgds::kernels::set_thread_count(1);

    if (cmd_gen->parsed()) {
      pgds::GenOptions opt;
      opt.n_identities = gd_ids;
      opt.cameras = gd_cams;
      opt.clothes_per_identity = gd_clothes;
      opt.images_per_combination = gd_images;
      opt.image_height = gd_h;
      opt.image_width = gd_w;
      opt.style = gd_style;
      opt.train_fraction = gd_train_frac;
      if (g.seed_given) opt.seed = g.seed;
      PGDS_CHECK_ARG(!g.out.empty(), "gen-data needs --out DIR");
      pgds::generate_dataset(opt, g.out);
      pgds::Dataset ds = pgds::load_dataset(g.out);
      std::cout << "dataset written to " << g.out << " (" << ds.records.size() << " images)\n";
      return 0;
    }

    if (cmd_pose->parsed()) {
      const std::string data_dir = require_data_dir(pp_data);
      pgds::Dataset ds = pgds::load_dataset(data_dir);
      pgds::PGDSConfig cfg = build_config(g);
      pgds::PoseEncoder enc(ds.meta.joints, cfg.embedding_dim);
      enc.init(cfg.seed);
      pgds::PosePretrainReport rep = pgds::pretrain_pose_encoder(enc, ds, pp_epochs, cfg.seed);
      const std::string out = g.out.empty() ? data_dir + "/pose_encoder.bin" : g.out;
      pgds::save_pose_checkpoint(out, enc, cfg.seed);
      std::cout << "pose encoder frozen at " << out << " (train mse " << rep.first_epoch_train_mse
                << " -> " << rep.last_epoch_train_mse << ", held-out mse " << rep.held_out_mse
                << ")\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      const std::string data_dir = require_data_dir(tr_data);
      pgds::Dataset ds = pgds::load_dataset(data_dir);
      pgds::PGDSConfig cfg = build_config(g);
      if (tr_lambda >= 0.0) cfg.guide_weight = tr_lambda;
      if (!tr_stages.empty()) cfg.php_stages = tr_stages;
      pgds::validate(cfg);
      const std::string out = g.out.empty() ? "pgds_run" : g.out;
      pgds::TrainResult res = pgds::train(cfg, ds, default_pose_path(data_dir, tr_pose), out,
                                          tr_resume);
      std::cout << "trained " << res.epochs_run << " epochs (" << res.steps_run
                << " steps); checkpoint " << res.checkpoint_path << "\n";
      return 0;
    }

    if (cmd_eval->parsed()) {
      const std::string data_dir = require_data_dir(ev_data);
      pgds::Dataset ds = pgds::load_dataset(data_dir);
      auto model = pgds::load_model_checkpoint(ev_ckpt);
      PGDS_CHECK_ARG(ev_mode == "standard" || ev_mode == "cc" || ev_mode == "cross",
                     "unknown mode '", ev_mode, "' (expected standard, cc, or cross)");
      pgds::MetricsReport rep =
          ev_mode == "cross" ? pgds::cross_domain_evaluate(*model, ds)
                             : pgds::evaluate_dataset(*model, ds, ev_mode);
      if (!ev_report.empty()) {
        pgds::write_metrics_json(ev_report, rep);
        const fs::path p(ev_report);
        pgds::write_cmc_csv((p.parent_path() / (p.stem().string() + "_cmc.csv")).string(), rep);
      }
      std::cout << "mode=" << rep.mode << " map=" << rep.map << " rank1=" << rep.rank1
                << " rank5=" << rep.rank5 << " queries=" << rep.queries_evaluated
                << " excluded=" << rep.queries_excluded << "\n";
      return 0;
    }

    if (cmd_query->parsed()) {
      const std::string data_dir = require_data_dir(qu_gallery);
      pgds::Dataset ds = pgds::load_dataset(data_dir);
      auto model = pgds::load_model_checkpoint(qu_ckpt);
      auto g_idx = pgds::indices_with_split(ds.records, pgds::Split::gallery);
      PGDS_CHECK_ARG(!g_idx.empty(), "gallery dataset has no gallery split");
      pgds::GalleryIndex gallery = pgds::extract_embeddings(*model, ds, g_idx);

      pgds::Tensor img = pgds::read_png(qu_image);
      pgds::Tensor batch({1, img.dim(0), img.dim(1), 3});
      std::copy(img.data(), img.data() + img.size(), batch.data());
      pgds::MultiScaleFeatureSet feats = model->human.forward(batch, false);
      const std::size_t dim = feats.embedding.dim(1);
      double norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) norm += feats.embedding[k] * feats.embedding[k];
      norm = std::sqrt(std::max(norm, 1e-24));

      std::vector<std::pair<double, int>> ranked;
      for (std::size_t gi = 0; gi < gallery.records.size(); ++gi) {
        double d = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = feats.embedding[k] / norm - gallery.embeddings[gi * dim + k];
          d += diff * diff;
        }
        ranked.emplace_back(d, static_cast<int>(gi));
      }
      std::sort(ranked.begin(), ranked.end());
      const int topk = std::min<int>(qu_topk, static_cast<int>(ranked.size()));
      for (int r = 0; r < topk; ++r) {
        const auto& rec = gallery.records[ranked[r].second];
        std::cout << "rank " << (r + 1) << ": identity " << rec.identity_id << " camera "
                  << rec.camera_id << " clothes " << rec.clothes_id << " dist "
                  << ranked[r].first << " " << rec.image_path << "\n";
      }
      return 0;
    }

    if (cmd_heat->parsed()) {
      auto model = pgds::load_model_checkpoint(hm_ckpt);
      pgds::Tensor img = pgds::read_png(hm_image);
      PGDS_CHECK_ARG(!g.out.empty(), "heatmap needs --out PNG");
      pgds::saliency_heatmap(*model, img, g.out);
      std::cout << "saliency overlay written to " << g.out << "\n";
      return 0;
    }

    if (cmd_ablate->parsed()) {
      const std::string data_dir = require_data_dir(ab_data);
      pgds::Dataset ds = pgds::load_dataset(data_dir);
      pgds::AblationSpec spec;
      spec.parameter = ab_param;
      spec.values = ab_values;
      spec.seeds = ab_seeds;
      spec.base = build_config(g);
      const std::string out = g.out.empty() ? "pgds_ablation" : g.out;
      pgds::AblationTable table =
          pgds::run_ablation(spec, ds, default_pose_path(data_dir, ab_pose), out, ab_parallel);
      pgds::write_ablation_json(out + "/ablation.json", table);
      std::cout << pgds::format_ablation_text(table);
      return 0;
    }

    if (cmd_report->parsed()) {
      const std::string out = g.out.empty() ? "pgds_report" : g.out;
      pgds::run_report(rp_runs, out);
      std::cout << "report written to " << out << "/report.md\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}
