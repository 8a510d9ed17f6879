// Command-line front end: environment generation, data collection,
// training, evaluation, the k-to-m suite and visualization.

#include <malloc.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "oodp/checkpoint.hpp"
#include "oodp/data_pipeline.hpp"
#include "oodp/env_sim.hpp"
#include "oodp/harness.hpp"

namespace fs = std::filesystem;
using namespace oodp;

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw CLI::ValidationError("--k-list", "expected a comma-separated list");
  return out;
}

void print_progress(std::int64_t step, const objective::LossBundle& b) {
  if (step % 100 != 0) return;
  std::cerr << "step " << step << "  total " << objective::total_loss(b) << "  highway " << b.highway
            << "  prediction " << b.prediction << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates the same large activations every step; keeping them
  // on the heap avoids an mmap/munmap pair per tensor.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Object-oriented dynamics predictor"};
  app.require_subcommand(1);

  // gen-envs
  auto* gen = app.add_subcommand("gen-envs", "Generate k training and m unseen layouts");
  int gen_k = 2, gen_m = 10, grid_h = 10, grid_w = 10, palette = 0;
  std::uint64_t gen_seed = 7;
  std::string variant_name = "platform", gen_out;
  gen->add_option("--k", gen_k, "Training layouts")->check(CLI::PositiveNumber);
  gen->add_option("--m", gen_m, "Unseen layouts")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Suite seed");
  gen->add_option("--grid-h", grid_h, "Grid rows (tiles)");
  gen->add_option("--grid-w", grid_w, "Grid columns (tiles)");
  gen->add_option("--palette", palette, "Appearance palette 0-2");
  gen->add_option("--variant", variant_name, "platform or mars")->check(CLI::IsMember({"platform", "mars"}));
  gen->add_option("--out", gen_out, "Output directory")->required();

  // collect
  auto* col = app.add_subcommand("collect", "Collect a balanced random-policy dataset");
  std::string col_envs, col_split = "train", col_out;
  int col_steps = 2000, col_episode = 100;
  std::uint64_t col_seed = 1;
  col->add_option("--envs", col_envs, "Suite directory from gen-envs")->required();
  col->add_option("--split", col_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  col->add_option("--steps", col_steps, "Balanced transitions per layout (even)");
  col->add_option("--episode-len", col_episode, "Steps per random-policy episode");
  col->add_option("--seed", col_seed, "Collection seed");
  col->add_option("--out", col_out, "Dataset directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train from a config file");
  std::string tr_config, tr_variant;
  std::int64_t tr_steps = -1;
  tr->add_option("--config", tr_config, "Flat key = value config")->required();
  tr->add_option("--variant", tr_variant, "+p or -p (overrides the config)")->check(CLI::IsMember({"+p", "-p"}));
  tr->add_option("--steps", tr_steps, "Override max_steps");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a suite");
  std::string ev_ckpt, ev_suite, ev_out;
  int ev_per_env = 200;
  std::uint64_t ev_seed = 11;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--suite", ev_suite, "Suite directory")->required();
  ev->add_option("--per-env", ev_per_env, "Balanced evaluation transitions per layout");
  ev->add_option("--seed", ev_seed, "Evaluation collection seed");
  ev->add_option("--out", ev_out, "Write the accuracy CSV here as well as to stdout");

  // suite
  auto* su = app.add_subcommand("suite", "Run the k-to-m generalization suite");
  std::string su_k = "1,2,3,4,5", su_config, su_out;
  int su_m = 10;
  harness::SuiteOptions su_opts;
  su->add_option("--k-list", su_k, "Comma-separated k values");
  su->add_option("--m", su_m, "Unseen layouts");
  su->add_option("--config", su_config, "Training config");
  su->add_option("--train-per-env", su_opts.train_per_env, "Training transitions per layout");
  su->add_option("--eval-per-env", su_opts.eval_per_env, "Evaluation transitions per layout");
  su->add_option("--seed", su_opts.suite_seed, "Suite seed");
  su->add_option("--out", su_out, "Directory for table1.csv / table2.csv")->required();

  // viz
  auto* vz = app.add_subcommand("viz", "Export masks, background and predictions as PNG");
  std::string vz_ckpt, vz_data, vz_out;
  int vz_count = 4;
  vz->add_option("--checkpoint", vz_ckpt, "Checkpoint file")->required();
  vz->add_option("--data", vz_data, "Dataset directory")->required();
  vz->add_option("--count", vz_count, "Records to export");
  vz->add_option("--out", vz_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      env::LayoutSpec spec;
      spec.variant = env::parse_variant(variant_name);
      spec.grid_h = grid_h;
      spec.grid_w = grid_w;
      spec.palette = palette;
      const auto suite = env::generate_env_suite(gen_k, gen_m, gen_seed, spec);
      env::save_suite(suite, gen_out);
      std::cout << "wrote " << suite.train.size() << " training and " << suite.test.size() << " unseen layouts to "
                << gen_out << "\n";
    } else if (*col) {
      const auto suite = env::load_suite(col_envs);
      const bool train_split = col_split == "train";
      const auto& layouts = train_split ? suite.train : suite.test;
      const int first_id = train_split ? 0 : static_cast<int>(suite.train.size());
      const auto records = harness::collect_balanced(layouts, col_steps, col_seed, col_episode, first_id);
      data::write_dataset(records, col_out, {col_seed});
      std::cout << "wrote " << records.size() << " records to " << col_out << "\n";
    } else if (*tr) {
      auto cfg = harness::load_config(tr_config);
      if (!tr_variant.empty()) {
        cfg.variant = objective::parse_variant(tr_variant);
        cfg.weight_overrides = {};
      }
      if (tr_steps >= 0) cfg.max_steps = tr_steps;
      if (cfg.train_data.empty()) throw harness::ConfigError("config needs train_data");
      if (cfg.out_dir.empty()) cfg.out_dir = "run";
      const auto ds = data::read_dataset(cfg.train_data);
      harness::TrainHooks hooks;
      hooks.on_step = print_progress;
      auto result = harness::train(cfg, ds.records, hooks);
      std::cout << "trained " << result.steps << " steps; best step " << result.best_step << "; checkpoint "
                << (fs::path(cfg.out_dir) / "best.bin").string() << "\n";
      if (!cfg.test_data.empty()) {
        const auto test = data::read_dataset(cfg.test_data);
        const auto m = harness::evaluate(result.model, test.records);
        std::cout << "test accuracy 0/1/2-error " << m.accuracy[0] << " " << m.accuracy[1] << " " << m.accuracy[2]
                  << "  rmse " << m.rmse << "\n";
      }
    } else if (*ev) {
      auto model = load_checkpoint(ev_ckpt);
      const auto suite = env::load_suite(ev_suite);
      harness::SuiteRow row;
      row.k = static_cast<int>(suite.train.size());
      row.m = static_cast<int>(suite.test.size());
      const auto train_set = harness::collect_balanced(suite.train, ev_per_env, ev_seed, 100, 0);
      const auto unseen = harness::collect_balanced(suite.test, ev_per_env, ev_seed + 1, 100, row.k);
      row.train = harness::evaluate(model, train_set);
      row.unseen = harness::evaluate(model, unseen);
      std::vector<harness::SuiteRow> rows{row};
      harness::write_accuracy_table(std::cout, rows);
      harness::write_rmse_table(std::cout, rows);
      if (!ev_out.empty()) {
        std::ofstream out(ev_out);
        harness::write_accuracy_table(out, rows);
      }
    } else if (*su) {
      harness::TrainConfig cfg = su_config.empty() ? harness::TrainConfig{} : harness::load_config(su_config);
      cfg.out_dir = su_out;
      su_opts.progress = [](const std::string& m) { std::cerr << m << "\n"; };
      const auto ks = parse_int_list(su_k);
      const auto rows = harness::run_generalization_suite(cfg, ks, su_m, su_opts);
      fs::create_directories(su_out);
      std::ofstream t1(fs::path(su_out) / "table1.csv"), t2(fs::path(su_out) / "table2.csv");
      harness::write_accuracy_table(t1, rows);
      harness::write_rmse_table(t2, rows);
      harness::write_accuracy_table(std::cout, rows);
      harness::write_rmse_table(std::cout, rows);
    } else if (*vz) {
      auto model = load_checkpoint(vz_ckpt);
      const auto ds = data::read_dataset(vz_data);
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(vz_count, 0)), ds.records.size());
      const auto files =
          harness::visualize(model, std::span(ds.records).subspan(0, n), vz_out);
      std::cout << "wrote " << files.size() << " files to " << vz_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
