// Copyright 2026 The fairguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// fairguide — guidance-bias laboratory for diffusion samplers.
//
// Subcommands: sweep, train-classifier, alpha-search, alpha-fit,
// verify-theory, decompose. Every command reads a single JSON config
// (strictly validated, unknown keys rejected with field paths), writes its
// outputs plus a run manifest into --out, and is deterministic under fixed
// seeds. Exit codes: 0 success, 1 runtime failure, 2 invalid config/usage.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fairguide/alphaselect.hpp"
#include "fairguide/classifier.hpp"
#include "fairguide/common.hpp"
#include "fairguide/diffusion.hpp"
#include "fairguide/guidance.hpp"
#include "fairguide/manifest.hpp"
#include "fairguide/metrics.hpp"
#include "fairguide/serialize.hpp"
#include "fairguide/theory.hpp"
#include "fairguide/version.hpp"
#include "fairguide/world.hpp"

namespace fg = fairguide;
using fg::Json;

namespace {

// ---------------------------------------------------------------------------
// Config model.
// ---------------------------------------------------------------------------

struct WorldSection {
  std::string type;  // strong_imbalance | weak_imbalance | imbalance |
                     // components | embedding
  fg::MixtureWorld world;           // mixture types
  fg::EmbeddingWorldMap map;        // type == embedding
  bool is_embedding = false;
};

struct PromptSpec {
  std::string label;
  double score = 0.0;
  double strength = 1.0;
  fg::Vec e;  // resolved embedding
  bool explicit_e = false;
};

struct GuidanceSection {
  std::string regime;  // cg | cfg | adaptive_null | ag | composed | theory
  std::vector<double> w_grid;
  double w_ref = 0.0;
  bool w_ref_given = false;
  double alpha = 0.0;
  bool alpha_auto = false;
  bool alpha_given = false;
  std::string estimator_file;
  std::string classifier_file;
  int condition = 1;
  int designated_group = 1;
  std::optional<PromptSpec> prompt;
  std::optional<fg::Vec> target;
  std::string construction = "sdp";  // theory regime
  bool exact_h_transform = true;     // theory regime
};

struct TrainingSection {
  fg::TrainConfig train;
  fg::WdpConfig wdp;
  int n_data = 20000;
};

struct AlphaSearchSection {
  fg::AlphaGrid grid;
  double w_low = 1.0;
  double w_high = 9.0;
  int n_per_point = 4000;
  int designated_group = 1;
  std::vector<PromptSpec> prompts;
};

struct AlphaFitSection {
  std::string records_file = "alpha_records.jsonl";
  fg::AlphaGrid grid;
  std::vector<double> lambda_grid = fg::default_lambda_grid();
  double holdout_frac = 0.15;
};

struct TheorySection {
  std::string construction = "sdp";  // sdp | non_sdp
  std::vector<double> w_grid = {0, 1, 3, 5, 7, 9, 11, 13};
  int t_bins = 10;
};

struct ParsedConfig {
  Json raw;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_dir = "out";
  fg::NoiseSchedule schedule;
  fg::SdeOptions sde;
  int n_per_w = 4000;
  std::optional<WorldSection> world;
  std::optional<GuidanceSection> guidance;
  std::optional<TrainingSection> training;
  std::optional<AlphaSearchSection> alpha_search;
  std::optional<AlphaFitSection> alpha_fit;
  std::optional<TheorySection> theory;
};

// ---------------------------------------------------------------------------
// Section parsers (strict; every key accounted for).
// ---------------------------------------------------------------------------

WorldSection parse_world(const Json& j, const std::string& path) {
  // A file reference loads the referenced JSON in place of the section.
  {
    fg::StrictObject probe(j, path);
    if (probe.has("file")) {
      const std::string file = probe.str("file");
      probe.finish();
      return parse_world(fg::read_json_file(file), path + "<" + file + ">");
    }
  }
  fg::StrictObject o(j, path);
  WorldSection out;
  out.type = o.str("type");
  if (out.type == "strong_imbalance") {
    o.finish();
    out.world = fg::make_strong_imbalance_world();
  } else if (out.type == "weak_imbalance") {
    o.finish();
    out.world = fg::make_weak_imbalance_world();
  } else if (out.type == "imbalance") {
    const double p11 = o.number("p_a1_y1");
    const double p10 = o.number("p_a1_y0");
    const double cgap = o.number_or("condition_gap", 1.6);
    const double ggap = o.number_or("group_gap", 1.2);
    const double var = o.number_or("var", 0.4);
    o.finish();
    out.world = fg::make_imbalance_world(p11, p10, cgap, ggap, var);
  } else if (out.type == "components") {
    // Inline full mixture: delegate to the world schema reader, which does
    // its own strict walk (we re-wrap to keep field paths rooted here).
    Json inner = j;
    inner.erase("type");
    inner["schema_version"] = 1;
    inner["kind"] = "mixture_world";
    out.world = fg::world_from_json(inner, path);
  } else if (out.type == "embedding") {
    const double kappa = o.number_or("kappa", 0.3);
    const double base_logit = o.number_or("base_logit", 0.4);
    const int k = static_cast<int>(o.integer_or("embed_dim", 8));
    const std::uint64_t frame_seed = o.uinteger_or("frame_seed", 71);
    o.finish();
    out.map = fg::make_embedding_world(kappa, base_logit, k, frame_seed);
    out.is_embedding = true;
  } else {
    throw fg::PreconditionError(
        path + ".type: unknown world type '" + out.type +
        "' (expected strong_imbalance, weak_imbalance, imbalance, "
        "components, or embedding)");
  }
  return out;
}

PromptSpec parse_prompt(const Json& j, const std::string& path,
                        const fg::EmbeddingWorldMap& map) {
  fg::StrictObject o(j, path);
  PromptSpec p;
  p.label = o.str("label");
  if (o.has("e")) {
    p.e = o.vec("e");
    p.explicit_e = true;
    fg::require(p.e.size() == map.embed_dim(),
                path + ".e: dimension must match the embedding world");
    p.score = p.e.dot(map.g_hat);
  } else {
    p.score = o.number("score");
    p.strength = o.number_or("strength", 1.0);
    p.e = p.score * map.g_hat +
          p.strength * fg::embedding_condition_direction(map);
  }
  o.finish();
  return p;
}

GuidanceSection parse_guidance(const Json& j, const std::string& path,
                               const std::optional<WorldSection>& world) {
  fg::StrictObject o(j, path);
  GuidanceSection g;
  g.regime = o.str("regime");
  const bool known = g.regime == "cg" || g.regime == "cfg" ||
                     g.regime == "adaptive_null" || g.regime == "ag" ||
                     g.regime == "composed" || g.regime == "theory";
  fg::require(known, path + ".regime: unknown regime '" + g.regime + "'");
  g.w_grid = o.number_list("w_grid");
  fg::require(!g.w_grid.empty(), path + ".w_grid: must be non-empty");
  for (std::size_t i = 1; i < g.w_grid.size(); ++i)
    fg::require(g.w_grid[i] > g.w_grid[i - 1],
                path + ".w_grid: must be strictly ascending");
  if (o.has("w_ref")) {
    g.w_ref = o.number("w_ref");
    g.w_ref_given = true;
  }
  if (o.has("alpha")) {
    const Json& a = o.raw("alpha");
    if (a.is_string()) {
      fg::require(a.get<std::string>() == "auto",
                  path + ".alpha: expected a number or \"auto\"");
      g.alpha_auto = true;
    } else {
      fg::require(a.is_number(), path + ".alpha: expected a number or \"auto\"");
      g.alpha = a.get<double>();
    }
    g.alpha_given = true;
  }
  g.estimator_file = o.str_or("estimator_file", "");
  g.classifier_file = o.str_or("classifier_file", "");
  g.condition = static_cast<int>(o.integer_or("condition", 1));
  g.designated_group = static_cast<int>(o.integer_or("designated_group", 1));
  if (o.has("prompt")) {
    fg::require(world.has_value() && world->is_embedding,
                path + ".prompt: requires an embedding world");
    g.prompt = parse_prompt(o.raw("prompt"), path + ".prompt", world->map);
  }
  if (o.has("target")) g.target = o.vec("target");
  g.construction = o.str_or("construction", "sdp");
  fg::require(g.construction == "sdp" || g.construction == "non_sdp",
              path + ".construction: expected 'sdp' or 'non_sdp'");
  g.exact_h_transform = o.boolean_or("exact_h_transform", true);
  o.finish();

  // Regime-specific requirements surface here, not at run time.
  if (g.regime == "cg")
    fg::require(!g.classifier_file.empty(),
                path + ": regime 'cg' requires classifier_file");
  if (g.regime == "cfg" || g.regime == "adaptive_null" || g.regime == "ag" ||
      g.regime == "composed")
    fg::require(g.prompt.has_value(),
                path + ": regime '" + g.regime + "' requires a prompt");
  if (g.alpha_auto)
    fg::require(!g.estimator_file.empty(),
                path + ".alpha: \"auto\" requires estimator_file");
  if (g.regime == "composed")
    fg::require(g.w_ref_given, path + ": regime 'composed' requires w_ref");
  return g;
}

TrainingSection parse_training(const Json& j, const std::string& path) {
  fg::StrictObject o(j, path);
  TrainingSection s;
  s.train.method = fg::train_method_from_name(o.str("method"));
  s.train.steps = static_cast<int>(o.integer_or("steps", s.train.steps));
  s.train.batch = static_cast<int>(o.integer_or("batch", s.train.batch));
  s.train.lr = o.number_or("lr", s.train.lr);
  s.train.momentum = o.number_or("momentum", s.train.momentum);
  s.train.hidden = static_cast<int>(o.integer_or("hidden", s.train.hidden));
  s.train.warmup_frac = o.number_or("warmup_frac", s.train.warmup_frac);
  s.train.window_frac = o.number_or("window_frac", s.train.window_frac);
  s.train.center_sigma = o.number_or("center_sigma", s.train.center_sigma);
  s.train.log_every = static_cast<int>(o.integer_or("log_every", s.train.log_every));
  s.n_data = static_cast<int>(o.integer_or("n_data", s.n_data));
  fg::require(s.n_data >= 10, path + ".n_data: too small");
  if (o.has("wdp")) {
    fg::StrictObject w = o.child("wdp");
    s.wdp.lambda = w.number_or("lambda", s.wdp.lambda);
    s.wdp.gamma = w.number_or("gamma", s.wdp.gamma);
    s.wdp.condition = static_cast<int>(w.integer_or("condition", s.wdp.condition));
    w.finish();
  }
  o.finish();
  s.train.validate();
  return s;
}

fg::AlphaGrid parse_alpha_grid(const Json& j, const std::string& path) {
  fg::StrictObject o(j, path);
  fg::AlphaGrid grid;
  grid.lo = o.number("lo");
  grid.hi = o.number("hi");
  grid.step = o.number("step");
  o.finish();
  grid.validate();
  return grid;
}

AlphaSearchSection parse_alpha_search(const Json& j, const std::string& path,
                                      const std::optional<WorldSection>& world) {
  fg::require(world.has_value() && world->is_embedding,
              path + ": alpha search requires an embedding world");
  fg::StrictObject o(j, path);
  AlphaSearchSection s;
  if (o.has("grid")) s.grid = parse_alpha_grid(o.raw("grid"), path + ".grid");
  s.w_low = o.number_or("w_low", s.w_low);
  s.w_high = o.number_or("w_high", s.w_high);
  fg::require(s.w_high > s.w_low, path + ": need w_high > w_low");
  s.n_per_point = static_cast<int>(o.integer_or("n_per_point", s.n_per_point));
  s.designated_group =
      static_cast<int>(o.integer_or("designated_group", s.designated_group));
  const Json& prompts = o.array("prompts");
  fg::require(!prompts.empty(), path + ".prompts: must be non-empty");
  for (std::size_t i = 0; i < prompts.size(); ++i)
    s.prompts.push_back(parse_prompt(
        prompts[i], path + ".prompts[" + std::to_string(i) + "]", world->map));
  o.finish();
  return s;
}

AlphaFitSection parse_alpha_fit(const Json& j, const std::string& path) {
  fg::StrictObject o(j, path);
  AlphaFitSection s;
  s.records_file = o.str_or("records_file", s.records_file);
  if (o.has("grid")) s.grid = parse_alpha_grid(o.raw("grid"), path + ".grid");
  if (o.has("lambda_grid")) s.lambda_grid = o.number_list("lambda_grid");
  s.holdout_frac = o.number_or("holdout_frac", s.holdout_frac);
  o.finish();
  return s;
}

TheorySection parse_theory(const Json& j, const std::string& path) {
  fg::StrictObject o(j, path);
  TheorySection s;
  s.construction = o.str_or("construction", s.construction);
  fg::require(s.construction == "sdp" || s.construction == "non_sdp",
              path + ".construction: expected 'sdp' or 'non_sdp'");
  if (o.has("w_grid")) s.w_grid = o.number_list("w_grid");
  s.t_bins = static_cast<int>(o.integer_or("t_bins", s.t_bins));
  fg::require(s.t_bins >= 2, path + ".t_bins: need at least 2");
  o.finish();
  return s;
}

ParsedConfig parse_config(const Json& j) {
  ParsedConfig cfg;
  cfg.raw = j;
  fg::StrictObject o(j, "config");
  fg::require(o.integer("schema_version") == 1,
              "config.schema_version: unsupported version (expected 1)");
  cfg.seed = o.uinteger_or("seed", 1);
  cfg.threads = static_cast<int>(o.integer_or("threads", 0));
  cfg.out_dir = o.str_or("out_dir", "out");
  if (o.has("schedule")) {
    fg::StrictObject s = o.child("schedule");
    cfg.schedule.sigma_min = s.number_or("sigma_min", cfg.schedule.sigma_min);
    cfg.schedule.sigma_max = s.number_or("sigma_max", cfg.schedule.sigma_max);
    cfg.schedule.T = s.number_or("T", cfg.schedule.T);
    s.finish();
  }
  cfg.schedule.validate();
  if (o.has("sampler")) {
    fg::StrictObject s = o.child("sampler");
    cfg.sde.steps = static_cast<int>(s.integer_or("steps", cfg.sde.steps));
    cfg.sde.t_min_frac = s.number_or("t_min_frac", cfg.sde.t_min_frac);
    cfg.n_per_w = static_cast<int>(s.integer_or("n_per_w", cfg.n_per_w));
    s.finish();
    fg::require(cfg.sde.steps >= 2, "config.sampler.steps: need >= 2");
    fg::require(cfg.n_per_w >= 1, "config.sampler.n_per_w: need >= 1");
  }
  if (o.has("world")) cfg.world = parse_world(o.raw("world"), "config.world");
  if (o.has("guidance"))
    cfg.guidance = parse_guidance(o.raw("guidance"), "config.guidance", cfg.world);
  if (o.has("training"))
    cfg.training = parse_training(o.raw("training"), "config.training");
  if (o.has("alpha_search"))
    cfg.alpha_search =
        parse_alpha_search(o.raw("alpha_search"), "config.alpha_search", cfg.world);
  if (o.has("alpha_fit"))
    cfg.alpha_fit = parse_alpha_fit(o.raw("alpha_fit"), "config.alpha_fit");
  if (o.has("theory")) cfg.theory = parse_theory(o.raw("theory"), "config.theory");
  o.finish();
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared command plumbing.
// ---------------------------------------------------------------------------

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;  // −1: use config
  int threads = -1;        // −1: use config/env
};

ParsedConfig load_config(const CliOptions& opt) {
  fg::require(!opt.config_path.empty(), "missing --config PATH");
  ParsedConfig cfg = parse_config(fg::read_json_file(opt.config_path));
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
  if (opt.threads >= 0) cfg.threads = opt.threads;
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

double resolve_alpha(const GuidanceSection& g) {
  if (!g.alpha_auto) return g.alpha;
  const fg::AlphaEstimator est = fg::estimator_from_json(
      fg::read_json_file(g.estimator_file), "estimator<" + g.estimator_file + ">");
  fg::require(g.prompt.has_value(), "alpha=auto requires a prompt");
  return fg::predict_alpha(est, g.prompt->e);
}

/*! Assembly + target + default w_ref for the configured regime. */
struct RegimeSetup {
  fg::SweepAssembly assembly;
  fg::Vec target;
  double w_ref = 0.0;
  double alpha = 0.0;
};

RegimeSetup build_regime(const ParsedConfig& cfg) {
  fg::require(cfg.guidance.has_value(), "config.guidance: section required");
  const GuidanceSection& g = *cfg.guidance;
  RegimeSetup setup;
  setup.alpha = resolve_alpha(g);

  if (g.regime == "cg") {
    fg::require(cfg.world.has_value() && !cfg.world->is_embedding,
                "config.world: regime 'cg' requires a mixture world");
    auto world = std::make_shared<const fg::MixtureWorld>(cfg.world->world);
    auto clf = std::make_shared<const fg::NoisyClassifier>(
        fg::classifier_from_json(fg::read_json_file(g.classifier_file),
                                 "classifier<" + g.classifier_file + ">"));
    const fg::NoiseSchedule sched = cfg.schedule;
    const int y = g.condition;
    setup.assembly = fg::make_cg_assembly(
        world, sched, cfg.sde,
        [clf, sched, y] { return fg::cg_potential(clf, sched, y); }, y);
    setup.target = world->target.row(y).transpose();
    setup.w_ref = 0.0;
  } else if (g.regime == "cfg" || g.regime == "adaptive_null") {
    const double alpha = g.regime == "cfg" && !g.alpha_given ? 0.0 : setup.alpha;
    setup.alpha = alpha;
    setup.assembly =
        fg::make_cfg_assembly(cfg.world->map, cfg.schedule, cfg.sde,
                              fg::PromptEmbedding{g.prompt->label, g.prompt->e},
                              alpha);
    setup.target = fg::Vec::Constant(2, 0.5);
    setup.w_ref = 1.0;
  } else if (g.regime == "ag") {
    setup.assembly =
        fg::make_ag_assembly(cfg.world->map, cfg.schedule, cfg.sde,
                             fg::PromptEmbedding{g.prompt->label, g.prompt->e});
    setup.target = fg::Vec::Constant(2, 0.5);
    setup.w_ref = 1.0;
  } else if (g.regime == "composed") {
    setup.assembly = fg::make_composed_assembly(
        cfg.world->map, cfg.schedule, cfg.sde,
        fg::PromptEmbedding{g.prompt->label, g.prompt->e}, setup.alpha, g.w_ref);
    setup.target = fg::Vec::Constant(2, 0.5);
    setup.w_ref = g.w_ref;
  } else {  // theory
    const fg::TheoryConstruction tc = g.construction == "sdp"
                                          ? fg::make_sdp_construction()
                                          : fg::make_non_sdp_construction();
    auto model = std::make_shared<const fg::GaussianGroupModel>(tc.model);
    setup.assembly = fg::make_theory_assembly(model, tc.pot, cfg.schedule,
                                              cfg.sde, g.exact_h_transform);
    setup.target.resize(model->n_groups());
    for (int a = 0; a < model->n_groups(); ++a)
      setup.target[a] = model->groups[a].prior;
    setup.w_ref = 0.0;
  }
  if (g.w_ref_given) setup.w_ref = g.w_ref;
  if (g.target.has_value()) setup.target = *g.target;
  setup.assembly.designated_group = g.designated_group;
  return setup;
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

int cmd_sweep(const CliOptions& opt) {
  const ParsedConfig cfg = load_config(opt);
  const RegimeSetup setup = build_regime(cfg);
  const fg::SweepResult sweep = fg::measure_sweep(
      setup.assembly, cfg.guidance->w_grid, cfg.n_per_w, cfg.seed, cfg.threads);
  const fg::BiasReport report =
      fg::decompose_bias(sweep, setup.target, setup.w_ref);
  const fg::SweepSummary summary = fg::sweep_summary(report);

  std::ostringstream csv;
  fg::write_sweep_csv(csv, sweep, report);
  fg::write_text_file(cfg.out_dir + "/sweep.csv", csv.str());
  Json rj = fg::bias_report_to_json(sweep, report, summary);
  rj["regime"] = cfg.guidance->regime;
  rj["alpha"] = setup.alpha;
  fg::write_text_file(cfg.out_dir + "/bias_report.json", rj.dump(2) + "\n");
  fg::write_manifest(cfg.out_dir, "sweep", cfg.raw, cfg.seed,
                     {"sweep.csv", "bias_report.json"});
  std::cout << "sweep: wrote " << cfg.out_dir << "/sweep.csv ("
            << sweep.rows.size() << " scales, " << cfg.n_per_w
            << " paths each); designated-group range "
            << fg::format_double(summary.range) << "\n";
  return 0;
}

int cmd_train_classifier(const CliOptions& opt) {
  const ParsedConfig cfg = load_config(opt);
  fg::require(cfg.world.has_value() && !cfg.world->is_embedding,
              "config.world: training requires a mixture world");
  fg::require(cfg.training.has_value(), "config.training: section required");
  const TrainingSection& ts = *cfg.training;

  fg::Rng data_rng(cfg.seed);
  const fg::Dataset data =
      fg::sample_world(cfg.world->world, ts.n_data, data_rng);
  fg::TrainConfig tc = ts.train;
  tc.seed = cfg.seed;
  const fg::TrainResult result =
      fg::train_classifier(data, cfg.schedule, tc, ts.wdp);

  Json cj = fg::classifier_to_json(result.clf);
  cj["training"] = {{"method", fg::train_method_name(tc.method)},
                    {"steps", tc.steps},
                    {"batch", tc.batch},
                    {"lr", tc.lr},
                    {"seed", cfg.seed},
                    {"n_data", ts.n_data},
                    {"wdp_lambda", ts.wdp.lambda},
                    {"wdp_gamma", ts.wdp.gamma}};
  fg::write_text_file(cfg.out_dir + "/classifier.json", cj.dump(2) + "\n");
  std::ostringstream curve;
  fg::write_learning_curve_csv(curve, result.curve);
  fg::write_text_file(cfg.out_dir + "/learning_curve.csv", curve.str());
  fg::write_manifest(cfg.out_dir, "train-classifier", cfg.raw, cfg.seed,
                     {"classifier.json", "learning_curve.csv"});
  std::cout << "train-classifier: method="
            << fg::train_method_name(tc.method) << ", final ce_loss="
            << fg::format_double(result.curve.back().ce_loss) << "\n";
  return 0;
}

int cmd_alpha_search(const CliOptions& opt) {
  const ParsedConfig cfg = load_config(opt);
  fg::require(cfg.alpha_search.has_value(),
              "config.alpha_search: section required");
  const AlphaSearchSection& as = *cfg.alpha_search;
  const fg::EmbeddingWorldMap& map = cfg.world->map;
  const int g_star = as.designated_group;

  std::ostringstream lines;
  for (const PromptSpec& prompt : as.prompts) {
    // Common random numbers: the same per-prompt seed for every α, so the
    // proxy differences across α are not drowned in resampling noise.
    const std::uint64_t prompt_seed = cfg.seed ^ fg::fnv1a64(prompt.label);
    auto bias_eval = [&](double alpha) -> std::pair<double, double> {
      fg::SweepAssembly assembly = fg::make_cfg_assembly(
          map, cfg.schedule, cfg.sde,
          fg::PromptEmbedding{prompt.label, prompt.e}, alpha);
      const fg::SweepResult sr =
          fg::measure_sweep(assembly, {as.w_low, as.w_high}, as.n_per_point,
                            prompt_seed, cfg.threads);
      const double bias = sr.rows[1].ratio[g_star] - sr.rows[0].ratio[g_star];
      const double half0 =
          0.5 * (sr.rows[0].ci_high[g_star] - sr.rows[0].ci_low[g_star]);
      const double half1 =
          0.5 * (sr.rows[1].ci_high[g_star] - sr.rows[1].ci_low[g_star]);
      return {bias, std::hypot(half0, half1)};
    };
    const fg::AlphaRecord rec =
        fg::search_alpha_star(bias_eval, prompt.label, prompt.e.dot(map.g_hat),
                              as.grid, as.w_low, as.w_high);
    lines << fg::alpha_record_to_json(rec, prompt.e).dump() << "\n";
    std::cout << "alpha-search: " << prompt.label << " -> alpha*="
              << fg::format_double(rec.alpha_star)
              << (rec.saturated ? " [saturated]" : "")
              << (rec.non_monotone ? " [non-monotone]" : "") << "\n";
  }
  fg::write_text_file(cfg.out_dir + "/alpha_records.jsonl", lines.str());
  fg::write_manifest(cfg.out_dir, "alpha-search", cfg.raw, cfg.seed,
                     {"alpha_records.jsonl"});
  return 0;
}

int cmd_alpha_fit(const CliOptions& opt) {
  const ParsedConfig cfg = load_config(opt);
  fg::require(cfg.alpha_fit.has_value(), "config.alpha_fit: section required");
  const AlphaFitSection& af = *cfg.alpha_fit;
  fg::require(cfg.world.has_value() && cfg.world->is_embedding,
              "config.world: alpha-fit requires an embedding world");

  std::ifstream in(af.records_file);
  fg::require(in.good(), "cannot open records file: " + af.records_file);
  std::vector<fg::AlphaRecord> records;
  std::vector<std::pair<std::string, fg::Vec>> embeddings;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    fg::require(!j.is_discarded(), af.records_file + ":" +
                                       std::to_string(lineno) +
                                       ": invalid JSON line");
    auto [rec, e] = fg::alpha_record_from_json(
        j, af.records_file + ":" + std::to_string(lineno));
    embeddings.emplace_back(rec.prompt_label, std::move(e));
    records.push_back(std::move(rec));
  }
  const fg::AlphaEstimator est =
      fg::fit_alpha_estimator(records, embeddings, cfg.world->map.g_hat,
                              af.grid, af.lambda_grid, af.holdout_frac);
  fg::write_text_file(cfg.out_dir + "/estimator.json",
                      fg::estimator_to_json(est).dump(2) + "\n");
  fg::write_manifest(cfg.out_dir, "alpha-fit", cfg.raw, cfg.seed,
                     {"estimator.json"});
  std::cout << "alpha-fit: " << est.n_train << " train / " << est.n_holdout
            << " holdout prompts; lambda=" << fg::format_double(est.lambda)
            << ", holdout MAE=" << fg::format_double(est.holdout_mae_raw)
            << "\n";
  return 0;
}

int cmd_verify_theory(const CliOptions& opt) {
  const ParsedConfig cfg = load_config(opt);
  TheorySection ts = cfg.theory.value_or(TheorySection{});
  const fg::TheoryConstruction tc = ts.construction == "sdp"
                                        ? fg::make_sdp_construction()
                                        : fg::make_non_sdp_construction();
  // Noise bins spread uniformly over the sampler's t range.
  std::vector<double> t_grid(ts.t_bins);
  const double t_lo = 1e-3 * cfg.schedule.T;
  for (int i = 0; i < ts.t_bins; ++i)
    t_grid[i] = t_lo + (cfg.schedule.T - t_lo) * i / (ts.t_bins - 1);
  const fg::RatioInvarianceReport rep =
      fg::check_ratio_invariance(tc.model, tc.pot, ts.w_grid, t_grid, cfg.schedule);

  Json j;
  j["schema_version"] = 1;
  j["kind"] = "theory_report";
  j["construction"] = ts.construction;
  j["sdp"] = rep.sdp;
  j["max_deviation"] = rep.max_deviation;
  j["monotone_in_w"] = rep.monotone_in_w;
  j["sdp_tolerance"] = rep.sdp_tolerance;
  Json cells = Json::array();
  for (const auto& c : rep.cells)
    cells.push_back({{"w", c.w}, {"t", c.t}, {"deviation", c.deviation}});
  j["cells"] = std::move(cells);
  Json qw = Json::array();
  bool endpoint_ok = true;
  for (double w : ts.w_grid) {
    const fg::Vec q = fg::group_reweighting(tc.model, tc.pot, w);
    Json e;
    e["w"] = w;
    e["ratio"] = fg::vec_to_json(q);
    if (ts.construction == "sdp") {
      for (int a = 0; a < tc.model.n_groups(); ++a)
        endpoint_ok = endpoint_ok &&
                      std::abs(q[a] - tc.model.groups[a].prior) < 1e-12;
    } else {
      endpoint_ok = endpoint_ok && std::abs(q[1] - fg::sigmoid(w)) < 1e-12;
    }
    qw.push_back(std::move(e));
  }
  j["endpoint_reweighting"] = std::move(qw);
  bool all_pass;
  if (ts.construction == "sdp") {
    all_pass = rep.sdp && rep.max_deviation < rep.sdp_tolerance && endpoint_ok;
  } else {
    all_pass = !rep.sdp && rep.max_deviation > 1e-3 && rep.monotone_in_w &&
               endpoint_ok;
  }
  j["all_checks_pass"] = all_pass;
  fg::write_text_file(cfg.out_dir + "/theory_report.json", j.dump(2) + "\n");
  fg::write_manifest(cfg.out_dir, "verify-theory", cfg.raw, cfg.seed,
                     {"theory_report.json"});
  std::cout << "verify-theory: construction=" << ts.construction
            << " max_deviation=" << fg::format_double(rep.max_deviation)
            << " all_checks_pass=" << (all_pass ? "true" : "false") << "\n";
  return all_pass ? 0 : 1;
}

int cmd_decompose(const std::string& sweep_file, const std::string& target_csv,
                  double w_ref, const std::string& out_dir) {
  std::ifstream in(sweep_file);
  fg::require(in.good(), "cannot open sweep file: " + sweep_file);
  auto [sweep, parsed_rep] = fg::parse_sweep_csv(in);

  fg::Vec target(sweep.n_groups);
  {
    std::istringstream ts(target_csv);
    std::string tok;
    int i = 0;
    while (std::getline(ts, tok, ',')) {
      fg::require(i < sweep.n_groups, "--target: too many values");
      try {
        target[i++] = std::stod(tok);
      } catch (const std::exception&) {
        throw fg::PreconditionError("--target: not a number: " + tok);
      }
    }
    fg::require(i == sweep.n_groups,
                "--target: expected " + std::to_string(sweep.n_groups) +
                    " comma-separated values");
  }
  const fg::BiasReport report = fg::decompose_bias(sweep, target, w_ref);
  const fg::SweepSummary summary = fg::sweep_summary(report);
  std::filesystem::create_directories(out_dir);
  fg::write_text_file(out_dir + "/bias_report.json",
                      fg::bias_report_to_json(sweep, report, summary).dump(2) +
                          "\n");
  Json args;
  args["command"] = "decompose";
  args["sweep_file"] = sweep_file;
  args["target"] = target_csv;
  args["w_ref"] = w_ref;
  fg::write_manifest(out_dir, "decompose", args, 0, {"bias_report.json"});
  std::cout << "decompose: w_ref=" << fg::format_double(w_ref)
            << " avg|bias|=" << fg::format_double(summary.avg_bias) << "\n";
  return 0;
}

void add_common(CLI::App* sub, CliOptions& opt) {
  sub->add_option("--config", opt.config_path, "JSON config path")
      ->type_name("PATH");
  sub->add_option("--out", opt.out_dir, "Output directory (overrides config)")
      ->type_name("DIR");
  sub->add_option("--seed", opt.seed, "Seed override")->type_name("N");
  sub->add_option("--threads", opt.threads,
                  "Worker threads (0 = auto; env FAIRGUIDE_THREADS)")
      ->type_name("N");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(fairguide::kToolName) +
               " — guidance-bias laboratory for diffusion samplers"};
  app.set_version_flag("--version", fairguide::kVersion);
  app.require_subcommand(1);

  CliOptions opt;
  CLI::App* sweep = app.add_subcommand("sweep", "Guidance-scale ratio sweep");
  add_common(sweep, opt);
  CLI::App* train =
      app.add_subcommand("train-classifier", "Train a noisy classifier");
  add_common(train, opt);
  CLI::App* asearch =
      app.add_subcommand("alpha-search", "Per-prompt α* grid search");
  add_common(asearch, opt);
  CLI::App* afit =
      app.add_subcommand("alpha-fit", "Fit the prompt-based α estimator");
  add_common(afit, opt);
  CLI::App* vtheory =
      app.add_subcommand("verify-theory", "Closed-form invariance checks");
  add_common(vtheory, opt);

  std::string sweep_file, target_csv = "0.5,0.5", dec_out = "out";
  double dec_w_ref = 0.0;
  CLI::App* dec = app.add_subcommand(
      "decompose", "Re-decompose a stored sweep around a reference scale");
  dec->add_option("--sweep", sweep_file, "sweep.csv produced by `sweep`")
      ->required()
      ->type_name("PATH");
  dec->add_option("--target", target_csv, "Comma-separated target ratios")
      ->type_name("LIST");
  dec->add_option("--w-ref", dec_w_ref, "Reference scale")->type_name("W");
  dec->add_option("--out", dec_out, "Output directory")->type_name("DIR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // CLI11 returns 0 for --help/--version; anything else is a usage error.
    return code == 0 ? 0 : 2;
  }

  try {
    if (sweep->parsed()) return cmd_sweep(opt);
    if (train->parsed()) return cmd_train_classifier(opt);
    if (asearch->parsed()) return cmd_alpha_search(opt);
    if (afit->parsed()) return cmd_alpha_fit(opt);
    if (vtheory->parsed()) return cmd_verify_theory(opt);
    if (dec->parsed())
      return cmd_decompose(sweep_file, target_csv, dec_w_ref, dec_out);
  } catch (const fairguide::PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
