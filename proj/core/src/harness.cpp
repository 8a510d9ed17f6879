#include "oodp/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "oodp/checkpoint.hpp"
#include "oodp/image_io.hpp"

namespace oodp::harness {

using data::TransitionRecord;
using objective::Variant;

// ------------------------------------------------------------------ config

objective::LossWeights TrainConfig::weights() const {
  auto w = objective::LossWeights::for_variant(variant);
  const auto& o = weight_overrides;
  if (o.prediction) w.prediction = *o.prediction;
  if (o.entropy) w.entropy = *o.entropy;
  if (o.reconstruction) w.reconstruction = *o.reconstruction;
  if (o.consistency) w.consistency = *o.consistency;
  if (o.background) w.background = *o.background;
  if (o.proposal) w.proposal = *o.proposal;
  return w;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid config: " + m); };
  if (n_static < 1) fail("n_static must be >= 1");
  if (n_dynamic < 1) fail("n_dynamic must be >= 1");
  if (n_actions != env::kNumActions) fail("n_actions must be " + std::to_string(env::kNumActions));
  if (window < 1 || window % 2 == 0) fail("window must be odd and positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) fail("learning_rate must be finite and >= 0");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (!(val_fraction >= 0 && val_fraction < 1)) fail("val_fraction must be in [0, 1)");
  if (eval_transitions < 1) fail("eval_transitions must be >= 1");
}

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

template <typename V>
V parse_number(const std::string& key, const std::string& value) {
  V out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config key '" + key + "': bad value '" + value + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    auto& o = cfg.weight_overrides;
    if (key == "n_static") cfg.n_static = parse_number<int>(key, value);
    else if (key == "n_dynamic") cfg.n_dynamic = parse_number<int>(key, value);
    else if (key == "n_actions") cfg.n_actions = parse_number<int>(key, value);
    else if (key == "window") cfg.window = parse_number<int>(key, value);
    else if (key == "variant") {
      try {
        cfg.variant = objective::parse_variant(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    else if (key == "lambda_prediction") o.prediction = parse_number<double>(key, value);
    else if (key == "lambda_entropy") o.entropy = parse_number<double>(key, value);
    else if (key == "lambda_reconstruction") o.reconstruction = parse_number<double>(key, value);
    else if (key == "lambda_consistency") o.consistency = parse_number<double>(key, value);
    else if (key == "lambda_background") o.background = parse_number<double>(key, value);
    else if (key == "lambda_proposal") o.proposal = parse_number<double>(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
    else if (key == "max_steps") cfg.max_steps = parse_number<std::int64_t>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_number<std::int64_t>(key, value);
    else if (key == "val_fraction") cfg.val_fraction = parse_number<double>(key, value);
    else if (key == "eval_transitions") cfg.eval_transitions = parse_number<int>(key, value);
    else if (key == "train_data") cfg.train_data = value;
    else if (key == "test_data") cfg.test_data = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

std::string to_text(const TrainConfig& cfg) {
  std::ostringstream s;
  s << "n_static = " << cfg.n_static << "\n"
    << "n_dynamic = " << cfg.n_dynamic << "\n"
    << "n_actions = " << cfg.n_actions << "\n"
    << "window = " << cfg.window << "\n"
    << "variant = " << objective::to_string(cfg.variant) << "\n";
  const auto& o = cfg.weight_overrides;
  const std::pair<const char*, const std::optional<double>*> ws[] = {
      {"lambda_prediction", &o.prediction},         {"lambda_entropy", &o.entropy},
      {"lambda_reconstruction", &o.reconstruction}, {"lambda_consistency", &o.consistency},
      {"lambda_background", &o.background},         {"lambda_proposal", &o.proposal}};
  for (const auto& [k, v] : ws)
    if (*v) s << k << " = " << fmt(**v) << "\n";
  s << "learning_rate = " << fmt(cfg.learning_rate) << "\n"
    << "batch_size = " << cfg.batch_size << "\n"
    << "max_steps = " << cfg.max_steps << "\n"
    << "seed = " << cfg.seed << "\n"
    << "checkpoint_every = " << cfg.checkpoint_every << "\n"
    << "val_fraction = " << fmt(cfg.val_fraction) << "\n"
    << "eval_transitions = " << cfg.eval_transitions << "\n";
  if (!cfg.train_data.empty()) s << "train_data = " << cfg.train_data << "\n";
  if (!cfg.test_data.empty()) s << "test_data = " << cfg.test_data << "\n";
  if (!cfg.out_dir.empty()) s << "out_dir = " << cfg.out_dir << "\n";
  return s.str();
}

ModelConfig model_config(const TrainConfig& cfg, int height, int width) {
  ModelConfig m;
  m.n_static = cfg.n_static;
  m.n_dynamic = cfg.n_dynamic;
  m.height = height;
  m.width = width;
  m.window = cfg.window;
  m.seed = cfg.seed;
  return m;
}

// ------------------------------------------------------------------ batches

TrainBatch<float> make_batch(std::span<const TransitionRecord> records, std::span<const std::size_t> indices,
                             bool with_proposals) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const auto& first = records[indices[0]].frame_t;
  const int n = static_cast<int>(indices.size());
  TrainBatch<float> b{Tensor<float>(n, 3, first.h, first.w), Tensor<float>(n, 3, first.h, first.w), {}, {}};
  for (int i = 0; i < n; ++i) {
    const auto& r = records[indices[static_cast<std::size_t>(i)]];
    data::image_to_frame(r.frame_t, b.frames_t, i);
    data::image_to_frame(r.frame_t1, b.frames_t1, i);
    b.actions.push_back(r.action);
    if (with_proposals) b.proposals.push_back(data::compute_proposal_mask(r.frame_t, r.frame_t1));
  }
  return b;
}

// --------------------------------------------------------------- evaluation

EvalMetrics score(std::span<const MotionSample> samples) {
  EvalMetrics m;
  m.count = samples.size();
  if (samples.empty()) return m;
  double se = 0, se0 = 0;
  for (const auto& s : samples) {
    const int tu = s.truth[0], tv = s.truth[1];
    const int base = std::max(std::abs(tu), std::abs(tv));
    for (int n = 0; n < 3; ++n)
      if (base <= n) m.baseline_accuracy[static_cast<std::size_t>(n)] += 1;
    se0 += static_cast<double>(tu * tu + tv * tv);
    if (s.degenerate) {
      ++m.degenerate;
      se += static_cast<double>(tu * tu + tv * tv);
      continue;
    }
    const double eu = std::round(s.u) - tu, ev = std::round(s.v) - tv;
    const double err = std::max(std::abs(eu), std::abs(ev));
    for (int n = 0; n < 3; ++n)
      if (err <= n) m.accuracy[static_cast<std::size_t>(n)] += 1;
    se += (s.u - tu) * (s.u - tu) + (s.v - tv) * (s.v - tv);
  }
  const double count = static_cast<double>(samples.size());
  for (int n = 0; n < 3; ++n) {
    m.accuracy[static_cast<std::size_t>(n)] /= count;
    m.baseline_accuracy[static_cast<std::size_t>(n)] /= count;
  }
  m.rmse = std::sqrt(se / count);
  m.baseline_rmse = std::sqrt(se0 / count);
  return m;
}

std::vector<MotionSample> predict_agent_motions(OodpModel<float>& model, std::span<const TransitionRecord> records,
                                                int batch, int sprite_px) {
  std::vector<MotionSample> out;
  out.reserve(records.size());
  const int nd = model.config().n_dynamic;
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(batch), records.size() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const TrainBatch<float> b = make_batch(records, idx, false);
    const Prediction<float> p = model.predict(b.frames_t, b.actions);
    const auto& probs = p.masks.probs;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& r = records[start + i];
      int best = 0;
      if (nd > 1) {
        // The dynamic mask with the most mass on the agent's sprite.
        double best_mass = -1;
        for (int j = 0; j < nd; ++j) {
          double mass = 0;
          for (int y = r.pos_t[0]; y < r.pos_t[0] + sprite_px && y < probs.h(); ++y)
            for (int x = r.pos_t[1]; x < r.pos_t[1] + sprite_px && x < probs.w(); ++x)
              mass += probs(static_cast<int>(i), p.masks.dynamic_channel(j), y, x);
          if (mass > best_mass) {
            best_mass = mass;
            best = j;
          }
        }
      }
      const auto k = i * static_cast<std::size_t>(nd) + static_cast<std::size_t>(best);
      MotionSample s;
      s.u = p.motions[k].u;
      s.v = p.motions[k].v;
      s.truth = r.motion();
      s.degenerate = p.degenerate[k] != 0;
      out.push_back(s);
    }
  }
  return out;
}

EvalMetrics evaluate(OodpModel<float>& model, std::span<const TransitionRecord> records) {
  const auto samples = predict_agent_motions(model, records);
  return score(samples);
}

// ----------------------------------------------------------------- training

TrainResult train(const TrainConfig& cfg, std::span<const TransitionRecord> records, const TrainHooks& hooks) {
  cfg.validate();
  if (records.empty()) throw std::invalid_argument("train: dataset is empty");
  const int h = records[0].frame_t.h, w = records[0].frame_t.w;
  const bool with_proposals = cfg.variant == Variant::WithProposal;
  const auto weights = cfg.weights();

  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(records.size())));
  if (n_val >= records.size()) n_val = 0;
  std::vector<TransitionRecord> val;
  for (std::size_t i = 0; i < n_val; ++i) val.push_back(records[order[i]]);
  std::vector<std::size_t> pool(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  TrainResult result{OodpModel<float>(model_config(cfg, h, w))};
  OodpModel<float>& model = result.model;
  std::optional<OodpModel<float>> best;
  nn::Adam<float> opt(model.parameters(), {static_cast<float>(cfg.learning_rate)});

  std::unique_ptr<objective::TrainLogWriter> log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log = std::make_unique<objective::TrainLogWriter>(std::filesystem::path(cfg.out_dir) / "train_log.csv");
    std::ofstream(std::filesystem::path(cfg.out_dir) / "config.txt") << to_text(cfg);
  }

  auto validate_now = [&](std::int64_t step) {
    if (val.empty()) return;
    const EvalMetrics m = evaluate(model, val);
    if (hooks.on_validation) hooks.on_validation(step, m);
    if (m.accuracy[1] > result.best_val_accuracy) {
      result.best_val_accuracy = m.accuracy[1];
      result.best_step = step;
      if (best) {
        copy_state(model, *best);
      } else {
        best.emplace(model);
      }
    }
  };

  std::size_t cursor = pool.size();
  std::vector<std::size_t> idx;
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    idx.clear();
    while (idx.size() < static_cast<std::size_t>(cfg.batch_size)) {
      if (cursor == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), rng);
        cursor = 0;
      }
      idx.push_back(pool[cursor++]);
    }
    const TrainBatch<float> batch = make_batch(records, idx, with_proposals);
    const objective::LossBundle losses = model.compute_gradients(batch, cfg.variant, weights);
    double total = 0;
    try {
      total = objective::total_loss(losses);
    } catch (const objective::LossInvariantError& e) {
      throw DivergenceError("step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(total)) throw DivergenceError("step " + std::to_string(step) + ": total loss is not finite");
    opt.step();
    result.total_loss.push_back(total);
    result.steps = step;
    if (log) log->write(step, losses);
    if (hooks.on_step) hooks.on_step(step, losses);
    if (step % cfg.checkpoint_every == 0 || step == cfg.max_steps) {
      if (!cfg.out_dir.empty()) {
        std::ostringstream name;
        name << "ckpt_" << std::setw(7) << std::setfill('0') << step << ".bin";
        save_checkpoint(model, std::filesystem::path(cfg.out_dir) / name.str());
      }
      validate_now(step);
    }
  }
  if (best) copy_state(*best, model);
  else result.best_step = result.steps;
  if (!cfg.out_dir.empty()) save_checkpoint(model, std::filesystem::path(cfg.out_dir) / "best.bin");
  return result;
}

// -------------------------------------------------------------- collection

std::vector<TransitionRecord> collect_balanced(std::span<const env::EnvLayout> layouts, int per_env,
                                               std::uint64_t seed, int episode_len, int first_env_id) {
  if (per_env < 2 || per_env % 2 != 0) throw std::invalid_argument("collect_balanced: per_env must be even and >= 2");
  std::vector<TransitionRecord> out;
  std::mt19937_64 rng(seed);
  for (std::size_t e = 0; e < layouts.size(); ++e) {
    std::vector<TransitionRecord> changed, still;
    const auto half = static_cast<std::size_t>(per_env / 2);
    for (int episode = 0; changed.size() < half || still.size() < half; ++episode) {
      if (episode > 100000) throw data::BalanceError("collect_balanced: layout never yields both classes");
      for (auto& r : data::collect(layouts[e], episode_len, rng(), first_env_id + static_cast<int>(e))) {
        auto& bucket = r.changed() ? changed : still;
        if (bucket.size() < half) bucket.push_back(std::move(r));
      }
    }
    std::vector<TransitionRecord> env_records;
    for (auto& r : changed) env_records.push_back(std::move(r));
    for (auto& r : still) env_records.push_back(std::move(r));
    std::shuffle(env_records.begin(), env_records.end(), rng);
    for (auto& r : env_records) out.push_back(std::move(r));
  }
  return out;
}

// -------------------------------------------------------------------- suite

std::vector<SuiteRow> run_generalization_suite(const TrainConfig& cfg, std::span<const int> k_list, int m,
                                               const SuiteOptions& opts) {
  if (k_list.empty()) throw std::invalid_argument("run_generalization_suite: empty k list");
  const int k_max = *std::ranges::max_element(k_list);
  if (*std::ranges::min_element(k_list) < 1) throw std::invalid_argument("run_generalization_suite: k must be >= 1");
  const env::EnvSuite suite = env::generate_env_suite(k_max, m, opts.suite_seed, opts.layout_spec);
  const auto unseen = collect_balanced(suite.test, opts.eval_per_env, opts.suite_seed + 1, 100, k_max);
  std::vector<SuiteRow> rows;
  for (int k : k_list) {
    std::span<const env::EnvLayout> train_layouts(suite.train.data(), static_cast<std::size_t>(k));
    const auto train_records = collect_balanced(train_layouts, opts.train_per_env, opts.suite_seed + 2, 100, 0);
    const auto train_eval = collect_balanced(train_layouts, opts.eval_per_env, opts.suite_seed + 3, 100, 0);
    if (opts.progress) opts.progress("training k=" + std::to_string(k));
    TrainConfig run_cfg = cfg;
    if (!cfg.out_dir.empty()) run_cfg.out_dir = (std::filesystem::path(cfg.out_dir) / ("k" + std::to_string(k))).string();
    TrainResult result = train(run_cfg, train_records);
    SuiteRow row;
    row.k = k;
    row.m = m;
    row.variant = cfg.variant;
    row.train = evaluate(result.model, train_eval);
    row.unseen = evaluate(result.model, unseen);
    rows.push_back(row);
  }
  return rows;
}

void write_accuracy_table(std::ostream& out, std::span<const SuiteRow> rows) {
  out << "problem,model,train_0err,train_1err,train_2err,unseen_0err,unseen_1err,unseen_2err,"
         "baseline_unseen_0err,baseline_unseen_1err,baseline_unseen_2err,unseen_degenerate,unseen_samples\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << r.k << "-" << r.m << ",OODP" << objective::to_string(r.variant);
    for (double a : r.train.accuracy) out << ',' << a;
    for (double a : r.unseen.accuracy) out << ',' << a;
    for (double a : r.unseen.baseline_accuracy) out << ',' << a;
    out << ',' << r.unseen.degenerate << ',' << r.unseen.count << '\n';
  }
}

void write_rmse_table(std::ostream& out, std::span<const SuiteRow> rows) {
  out << "problem,model,train_rmse,unseen_rmse,baseline_unseen_rmse\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << r.k << "-" << r.m << ",OODP" << objective::to_string(r.variant) << ',' << r.train.rmse << ','
        << r.unseen.rmse << ',' << r.unseen.baseline_rmse << '\n';
  }
}

// ---------------------------------------------------------- interpretability

std::vector<ClassIoU> static_mask_iou(OodpModel<float>& model, std::span<const TransitionRecord> records,
                                      std::span<const env::EnvLayout> layouts_by_env_id) {
  const int ns = model.config().n_static;
  constexpr int kCells = 5;
  // inter[s][c], mask_area[s], class_area[c]
  std::vector<std::array<double, kCells>> inter(static_cast<std::size_t>(ns));
  std::vector<double> mask_area(static_cast<std::size_t>(ns), 0);
  std::array<double, kCells> class_area{};
  const int batch = 32;
  for (std::size_t start = 0; start < records.size(); start += batch) {
    const std::size_t count = std::min<std::size_t>(batch, records.size() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const auto b = make_batch(records, idx, false);
    const auto p = model.predict(b.frames_t, b.actions);
    const auto& probs = p.masks.probs;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& r = records[start + i];
      const auto env_id = static_cast<std::size_t>(r.env_id);
      if (env_id >= layouts_by_env_id.size()) throw std::out_of_range("static_mask_iou: unknown env_id");
      const auto& layout = layouts_by_env_id[env_id];
      const auto cells = env::cell_map(layout);
      const int t = layout.tile_px;
      for (int y = 0; y < probs.h(); ++y) {
        for (int x = 0; x < probs.w(); ++x) {
          if (y >= r.pos_t[0] && y < r.pos_t[0] + t && x >= r.pos_t[1] && x < r.pos_t[1] + t) continue;
          int arg = 0;
          for (int c = 1; c < probs.c(); ++c)
            if (probs(static_cast<int>(i), c, y, x) > probs(static_cast<int>(i), arg, y, x)) arg = c;
          const auto cell = static_cast<std::size_t>(cells[static_cast<std::size_t>(y * probs.w() + x)]);
          class_area[cell] += 1;
          if (arg < ns) {
            mask_area[static_cast<std::size_t>(arg)] += 1;
            inter[static_cast<std::size_t>(arg)][cell] += 1;
          }
        }
      }
    }
  }
  std::vector<ClassIoU> out;
  for (std::size_t c = 0; c < kCells; ++c) {
    if (class_area[c] == 0) continue;
    ClassIoU best{static_cast<env::Cell>(c), -1, 0};
    for (int s = 0; s < ns; ++s) {
      const double i = inter[static_cast<std::size_t>(s)][c];
      const double u = mask_area[static_cast<std::size_t>(s)] + class_area[c] - i;
      const double iou = u > 0 ? i / u : 0;
      if (best.best_channel < 0 || iou > best.iou) best = {static_cast<env::Cell>(c), s, iou};
    }
    out.push_back(best);
  }
  return out;
}

RedundancyReport redundancy_study(const TrainConfig& cfg, std::span<const TransitionRecord> train_records,
                                  std::span<const TransitionRecord> test_records,
                                  std::span<const env::EnvLayout> layouts_by_env_id, int n_static_oversized) {
  RedundancyReport rep;
  rep.n_static_matched = cfg.n_static;
  rep.n_static_oversized = n_static_oversized;
  for (int pass = 0; pass < 2; ++pass) {
    TrainConfig c = cfg;
    c.n_static = pass == 0 ? rep.n_static_matched : rep.n_static_oversized;
    if (!cfg.out_dir.empty())
      c.out_dir = (std::filesystem::path(cfg.out_dir) / ("n_static_" + std::to_string(c.n_static))).string();
    TrainResult r = train(c, train_records);
    (pass == 0 ? rep.matched : rep.oversized) = evaluate(r.model, test_records);
    (pass == 0 ? rep.coverage_matched : rep.coverage_oversized) =
        static_mask_iou(r.model, test_records, layouts_by_env_id);
  }
  return rep;
}

// ------------------------------------------------------------ visualization

std::vector<std::filesystem::path> visualize(OodpModel<float>& model, std::span<const TransitionRecord> records,
                                             const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  const int ns = model.config().n_static, nd = model.config().n_dynamic;
  std::ofstream meta(out_dir / "metadata.txt");
  if (!meta) throw std::runtime_error("cannot write " + (out_dir / "metadata.txt").string());
  meta << "mask_threshold = " << kMaskThreshold << "\n"
       << "n_static = " << ns << "\n"
       << "n_dynamic = " << nd << "\n"
       << "records = " << records.size() << "\n";
  files.push_back(out_dir / "metadata.txt");
  auto save = [&](const env::Image& img, const std::string& name) {
    const auto path = out_dir / name;
    write_png(img, path);
    files.push_back(path);
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::vector<std::size_t> idx{i};
    const auto b = make_batch(records, idx, false);
    const auto p = model.predict(b.frames_t, b.actions);
    std::ostringstream prefix;
    prefix << "frame_" << std::setw(4) << std::setfill('0') << i << "_";
    save(r.frame_t, prefix.str() + "input.png");
    for (int c = 0; c < ns + nd; ++c) {
      env::Image img(r.frame_t.h, r.frame_t.w);
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
          if (p.masks.probs(0, c, y, x) > kMaskThreshold) std::copy_n(r.frame_t.px(y, x), 3, img.px(y, x));
      const std::string kind = c < ns ? "static" + std::to_string(c) : "dynamic" + std::to_string(c - ns);
      save(img, prefix.str() + "object_" + kind + ".png");
    }
    save(data::frame_to_image(p.background, 0), prefix.str() + "background.png");
    save(data::frame_to_image(p.next_frame, 0), prefix.str() + "prediction.png");
    const auto proposal = data::compute_proposal_mask(r.frame_t, r.frame_t1);
    env::Image overlay = r.frame_t;
    for (int y = 0; y < overlay.h; ++y) {
      for (int x = 0; x < overlay.w; ++x) {
        if (!proposal.bits[static_cast<std::size_t>(y * overlay.w + x)]) continue;
        auto* px = overlay.px(y, x);
        px[0] = static_cast<std::uint8_t>((px[0] + 255) / 2);
        px[1] = static_cast<std::uint8_t>(px[1] / 2);
        px[2] = static_cast<std::uint8_t>(px[2] / 2);
      }
    }
    save(overlay, prefix.str() + "proposal.png");
    meta << prefix.str() << "action = " << env::to_string(r.action);
    for (int j = 0; j < nd; ++j)
      meta << " motion" << j << " = (" << p.motions[static_cast<std::size_t>(j)].u << ", "
           << p.motions[static_cast<std::size_t>(j)].v << ")";
    meta << "\n";
  }
  return files;
}

}  // namespace oodp::harness
