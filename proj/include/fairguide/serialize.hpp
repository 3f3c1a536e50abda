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
// JSON (de)serialization with strict schemas: every reader tracks its full
// field path, rejects unknown keys, and reports both in error messages.
// File formats covered here: mixture worlds, classifiers (flat parameter
// array + architecture header), α-search records, α estimators, bias
// reports, and the sweep CSV round-trip.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairguide/alphaselect.hpp"
#include "fairguide/classifier.hpp"
#include "fairguide/common.hpp"
#include "fairguide/metrics.hpp"
#include "fairguide/world.hpp"

namespace fairguide {

using Json = nlohmann::json;

/*!
 * Strict reader over one JSON object. Accessors mark keys as consumed;
 * finish() rejects anything left over, so schema drift surfaces as a
 * field-path error instead of being silently ignored.
 */
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), path_ + ": expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key) {
    const Json& v = fetch(key);
    require(v.is_number(), path_ + "." + key + ": expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& key, double def) {
    return has(key) ? number(key) : def;
  }

  std::int64_t integer(const std::string& key) {
    const Json& v = fetch(key);
    require(v.is_number_integer(), path_ + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer_or(const std::string& key, std::int64_t def) {
    return has(key) ? integer(key) : def;
  }

  std::uint64_t uinteger(const std::string& key) {
    const Json& v = fetch(key);
    require(v.is_number_unsigned() || (v.is_number_integer() &&
                                       v.get<std::int64_t>() >= 0),
            path_ + "." + key + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t uinteger_or(const std::string& key, std::uint64_t def) {
    return has(key) ? uinteger(key) : def;
  }

  bool boolean(const std::string& key) {
    const Json& v = fetch(key);
    require(v.is_boolean(), path_ + "." + key + ": expected a boolean");
    return v.get<bool>();
  }
  bool boolean_or(const std::string& key, bool def) {
    return has(key) ? boolean(key) : def;
  }

  std::string str(const std::string& key) {
    const Json& v = fetch(key);
    require(v.is_string(), path_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }
  std::string str_or(const std::string& key, const std::string& def) {
    return has(key) ? str(key) : def;
  }

  /*! Raw access for union-typed fields (e.g. alpha: number | "auto"). */
  const Json& raw(const std::string& key) { return fetch(key); }

  StrictObject child(const std::string& key) {
    return StrictObject(fetch(key), path_ + "." + key);
  }

  const Json& array(const std::string& key) {
    const Json& v = fetch(key);
    require(v.is_array(), path_ + "." + key + ": expected an array");
    return v;
  }

  std::vector<double> number_list(const std::string& key) {
    const Json& v = array(key);
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      require(v[i].is_number(), path_ + "." + key + "[" + std::to_string(i) +
                                    "]: expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Vec vec(const std::string& key) {
    const std::vector<double> v = number_list(key);
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return out;
  }

  /*! Throws if any key of the object was never consumed. */
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      require(seen_.count(it.key()) > 0,
              path_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& fetch(const std::string& key) {
    require(j_.contains(key), path_ + ": missing required key '" + key + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/*! Parses a JSON document from a file; parse failures and missing files
 *  surface as PreconditionError with the path. */
inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: " + path);
  Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded(), "invalid JSON in file: " + path);
  return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open file for writing: " + path);
  out << text;
  require(out.good(), "failed writing file: " + path);
}

// ---------------------------------------------------------------------------
// Mixture worlds.
// ---------------------------------------------------------------------------

inline Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const Json& j, const std::string& path) {
  require(j.is_array() && !j.empty(), path + ": expected a non-empty 2-D array");
  const std::size_t rows = j.size();
  require(j[0].is_array() && !j[0].empty(),
          path + ": expected a non-empty 2-D array");
  const std::size_t cols = j[0].size();
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    require(j[i].is_array() && j[i].size() == cols,
            path + "[" + std::to_string(i) + "]: ragged or non-array row");
    for (std::size_t c = 0; c < cols; ++c) {
      require(j[i][c].is_number(), path + "[" + std::to_string(i) + "][" +
                                       std::to_string(c) +
                                       "]: expected a number");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

inline Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json world_to_json(const MixtureWorld& world) {
  Json j;
  j["schema_version"] = 1;
  j["kind"] = "mixture_world";
  j["dim"] = world.dim;
  j["n_groups"] = world.n_groups;
  j["n_conditions"] = world.n_conditions;
  Json comps = Json::array();
  for (const auto& c : world.components) {
    Json jc;
    jc["group"] = c.group;
    jc["condition"] = c.condition;
    jc["weight"] = c.weight;
    jc["mean"] = vec_to_json(c.mean);
    jc["cov"] = matrix_to_json(c.cov);
    comps.push_back(std::move(jc));
  }
  j["components"] = std::move(comps);
  j["target"] = matrix_to_json(world.target);
  return j;
}

inline MixtureWorld world_from_json(const Json& j, const std::string& path) {
  StrictObject o(j, path);
  require(o.integer("schema_version") == 1,
          path + ".schema_version: unsupported version");
  require(o.str("kind") == "mixture_world",
          path + ".kind: expected 'mixture_world'");
  MixtureWorld world;
  world.dim = static_cast<int>(o.integer("dim"));
  world.n_groups = static_cast<int>(o.integer("n_groups"));
  world.n_conditions = static_cast<int>(o.integer("n_conditions"));
  const Json& comps = o.array("components");
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const std::string cpath = path + ".components[" + std::to_string(i) + "]";
    StrictObject co(comps[i], cpath);
    MixtureComponent c;
    c.group = static_cast<int>(co.integer("group"));
    c.condition = static_cast<int>(co.integer("condition"));
    c.weight = co.number("weight");
    c.mean = co.vec("mean");
    c.cov = matrix_from_json(co.raw("cov"), cpath + ".cov");
    co.finish();
    world.components.push_back(std::move(c));
  }
  if (o.has("target")) world.target = matrix_from_json(o.raw("target"), path + ".target");
  o.finish();
  world.finalize();
  return world;
}

// ---------------------------------------------------------------------------
// Classifier: flat parameter array + architecture header.
// ---------------------------------------------------------------------------

inline Json classifier_to_json(const NoisyClassifier& clf) {
  clf.validate();
  Json j;
  j["schema_version"] = 1;
  j["kind"] = "classifier";
  Json arch;
  arch["data_dim"] = clf.data_dim;
  arch["hidden"] = clf.hidden;
  arch["input_dim"] = clf.input_dim();
  arch["layers"] = Json::array({"linear_tanh", "linear_tanh", "linear"});
  j["architecture"] = std::move(arch);
  Json params = Json::array();
  for (Eigen::Index i = 0; i < clf.w1.rows(); ++i)
    for (Eigen::Index k = 0; k < clf.w1.cols(); ++k) params.push_back(clf.w1(i, k));
  for (Eigen::Index i = 0; i < clf.b1.size(); ++i) params.push_back(clf.b1[i]);
  for (Eigen::Index i = 0; i < clf.w2.rows(); ++i)
    for (Eigen::Index k = 0; k < clf.w2.cols(); ++k) params.push_back(clf.w2(i, k));
  for (Eigen::Index i = 0; i < clf.b2.size(); ++i) params.push_back(clf.b2[i]);
  for (Eigen::Index i = 0; i < clf.w3.size(); ++i) params.push_back(clf.w3[i]);
  params.push_back(clf.b3);
  j["params"] = std::move(params);
  return j;
}

inline NoisyClassifier classifier_from_json(const Json& j,
                                            const std::string& path) {
  StrictObject o(j, path);
  require(o.integer("schema_version") == 1,
          path + ".schema_version: unsupported version");
  require(o.str("kind") == "classifier", path + ".kind: expected 'classifier'");
  StrictObject arch = o.child("architecture");
  NoisyClassifier clf;
  clf.data_dim = static_cast<int>(arch.integer("data_dim"));
  clf.hidden = static_cast<int>(arch.integer("hidden"));
  const int f = static_cast<int>(arch.integer("input_dim"));
  require(f == clf.data_dim + 3,
          path + ".architecture.input_dim: must equal data_dim + 3");
  (void)arch.array("layers");
  arch.finish();
  const std::vector<double> p = o.number_list("params");
  // Writers may attach an opaque "training" provenance block (method, seed,
  // …); it does not affect the loaded parameters and is tolerated here.
  if (o.has("training")) (void)o.raw("training");
  o.finish();
  const int h = clf.hidden;
  const std::size_t expect = static_cast<std::size_t>(h) * f + h +
                             static_cast<std::size_t>(h) * h + h + h + 1;
  require(p.size() == expect,
          path + ".params: expected " + std::to_string(expect) +
              " values, got " + std::to_string(p.size()));
  std::size_t at = 0;
  clf.w1.resize(h, f);
  for (int i = 0; i < h; ++i)
    for (int k = 0; k < f; ++k) clf.w1(i, k) = p[at++];
  clf.b1.resize(h);
  for (int i = 0; i < h; ++i) clf.b1[i] = p[at++];
  clf.w2.resize(h, h);
  for (int i = 0; i < h; ++i)
    for (int k = 0; k < h; ++k) clf.w2(i, k) = p[at++];
  clf.b2.resize(h);
  for (int i = 0; i < h; ++i) clf.b2[i] = p[at++];
  clf.w3.resize(h);
  for (int i = 0; i < h; ++i) clf.w3[i] = p[at++];
  clf.b3 = p[at++];
  clf.validate();
  return clf;
}

/*! Learning curve CSV: step,ce_loss,wdp_loss,group_loss_0,…  */
inline void write_learning_curve_csv(std::ostream& os,
                                     const std::vector<LearningCurveRow>& curve) {
  require(!curve.empty(), "write_learning_curve_csv: empty curve");
  os << "step,ce_loss,wdp_loss";
  for (std::size_t a = 0; a < curve.front().group_losses.size(); ++a)
    os << ",group_loss_" << a;
  os << '\n';
  for (const auto& row : curve) {
    os << row.step << ',' << format_double(row.ce_loss) << ','
       << format_double(row.wdp_loss);
    for (double g : row.group_losses) os << ',' << format_double(g);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// α-search records and the estimator.
// ---------------------------------------------------------------------------

inline Json alpha_record_to_json(const AlphaRecord& rec, const Vec& embedding) {
  Json j;
  j["label"] = rec.prompt_label;
  j["e"] = vec_to_json(embedding);
  j["alpha_star"] = rec.alpha_star;
  j["saturated"] = rec.saturated;
  j["non_monotone"] = rec.non_monotone;
  j["flatness"] = rec.flatness;
  j["feature_score"] = rec.feature_score;
  j["feature_level"] = rec.feature_level;
  j["w_low"] = rec.w_low;
  j["w_high"] = rec.w_high;
  Json curve = Json::array();
  for (const auto& p : rec.curve) {
    Json jp;
    jp["alpha"] = p.alpha;
    jp["bias"] = p.bias;
    jp["ci_half"] = p.ci_half;
    curve.push_back(std::move(jp));
  }
  j["curve"] = std::move(curve);
  return j;
}

inline std::pair<AlphaRecord, Vec> alpha_record_from_json(
    const Json& j, const std::string& path) {
  StrictObject o(j, path);
  AlphaRecord rec;
  rec.prompt_label = o.str("label");
  Vec e = o.vec("e");
  rec.alpha_star = o.number("alpha_star");
  rec.saturated = o.boolean("saturated");
  rec.non_monotone = o.boolean("non_monotone");
  rec.flatness = o.number("flatness");
  rec.feature_score = o.number("feature_score");
  rec.feature_level = o.number("feature_level");
  rec.w_low = o.number("w_low");
  rec.w_high = o.number("w_high");
  const Json& curve = o.array("curve");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    StrictObject cp(curve[i], path + ".curve[" + std::to_string(i) + "]");
    AlphaCurvePoint p;
    p.alpha = cp.number("alpha");
    p.bias = cp.number("bias");
    p.ci_half = cp.number("ci_half");
    cp.finish();
    rec.curve.push_back(p);
  }
  o.finish();
  return {std::move(rec), std::move(e)};
}

inline Json estimator_to_json(const AlphaEstimator& est) {
  Json j;
  j["schema_version"] = 1;
  j["kind"] = "alpha_estimator";
  j["g"] = vec_to_json(est.g);
  j["w_score"] = est.w_score;
  j["w_level"] = est.w_level;
  j["bias"] = est.bias;
  j["lambda"] = est.lambda;
  Json grid;
  grid["lo"] = est.grid.lo;
  grid["hi"] = est.grid.hi;
  grid["step"] = est.grid.step;
  j["grid"] = std::move(grid);
  Json diag;
  diag["n_train"] = est.n_train;
  diag["n_holdout"] = est.n_holdout;
  diag["holdout_mae_raw"] = est.holdout_mae_raw;
  diag["holdout_exact_rate"] = est.holdout_exact_rate;
  diag["loo_mse"] = est.loo_mse;
  j["diagnostics"] = std::move(diag);
  return j;
}

inline AlphaEstimator estimator_from_json(const Json& j,
                                          const std::string& path) {
  StrictObject o(j, path);
  require(o.integer("schema_version") == 1,
          path + ".schema_version: unsupported version");
  require(o.str("kind") == "alpha_estimator",
          path + ".kind: expected 'alpha_estimator'");
  AlphaEstimator est;
  est.g = o.vec("g");
  est.w_score = o.number("w_score");
  est.w_level = o.number("w_level");
  est.bias = o.number("bias");
  est.lambda = o.number("lambda");
  StrictObject grid = o.child("grid");
  est.grid.lo = grid.number("lo");
  est.grid.hi = grid.number("hi");
  est.grid.step = grid.number("step");
  grid.finish();
  est.grid.validate();
  if (o.has("diagnostics")) {
    StrictObject diag = o.child("diagnostics");
    est.n_train = static_cast<int>(diag.integer("n_train"));
    est.n_holdout = static_cast<int>(diag.integer("n_holdout"));
    est.holdout_mae_raw = diag.number("holdout_mae_raw");
    est.holdout_exact_rate = diag.number("holdout_exact_rate");
    est.loo_mse = diag.number("loo_mse");
    diag.finish();
  }
  o.finish();
  return est;
}

// ---------------------------------------------------------------------------
// Bias report JSON and the sweep CSV round-trip.
// ---------------------------------------------------------------------------

inline Json bias_report_to_json(const SweepResult& sweep, const BiasReport& rep,
                                const SweepSummary& summary) {
  Json j;
  j["schema_version"] = 1;
  j["kind"] = "bias_report";
  j["w_ref"] = rep.w_ref;
  j["interpolated_ref"] = rep.interpolated_ref;
  j["target"] = vec_to_json(rep.target);
  j["ref_ratio"] = vec_to_json(rep.ref_ratio);
  j["designated_group"] = rep.designated_group;
  j["seed"] = sweep.seed;
  j["n_per_w"] = sweep.rows.empty() ? 0 : sweep.rows.front().n;
  Json entries = Json::array();
  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    const BiasEntry& e = rep.entries[i];
    Json je;
    je["w"] = e.w;
    je["ratio"] = vec_to_json(rep.ratios[i]);
    je["total_bias"] = vec_to_json(e.total);
    je["guidance_bias"] = vec_to_json(e.guidance);
    je["model_bias"] = vec_to_json(e.model);
    if (i < sweep.rows.size()) {
      je["ci_low"] = vec_to_json(sweep.rows[i].ci_low);
      je["ci_high"] = vec_to_json(sweep.rows[i].ci_high);
    }
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  Json s;
  s["avg_bias"] = summary.avg_bias;
  s["worst_bias"] = summary.worst_bias;
  s["range"] = summary.range;
  j["summary"] = std::move(s);
  return j;
}

/*!
 * Parses a sweep CSV produced by write_sweep_csv back into a SweepResult
 * (ratio and CI columns; sample counts and hard ratios are not stored in
 * the CSV and are left empty). Re-emitting a parsed file is byte-identical
 * because doubles are printed in round-trip form.
 */
inline std::pair<SweepResult, BiasReport> parse_sweep_csv(std::istream& is) {
  std::string header;
  require(static_cast<bool>(std::getline(is, header)),
          "parse_sweep_csv: empty file");
  require(header ==
              "w,group,ratio,ci_low,ci_high,total_bias,guidance_bias,"
              "model_bias",
          "parse_sweep_csv: unexpected header: " + header);
  struct RawRow {
    double w;
    int group;
    double ratio, ci_low, ci_high, total, guidance, model;
  };
  std::vector<RawRow> raw;
  std::string line;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RawRow r{};
    char c;
    ls >> r.w >> c >> r.group >> c >> r.ratio >> c >> r.ci_low >> c >>
        r.ci_high >> c >> r.total >> c >> r.guidance >> c >> r.model;
    require(!ls.fail(),
            "parse_sweep_csv: malformed line " + std::to_string(lineno));
    raw.push_back(r);
  }
  require(!raw.empty(), "parse_sweep_csv: no data rows");
  int n_groups = 0;
  for (const auto& r : raw) n_groups = std::max(n_groups, r.group + 1);
  require(raw.size() % n_groups == 0,
          "parse_sweep_csv: rows not divisible by group count");

  SweepResult sweep;
  sweep.n_groups = n_groups;
  BiasReport rep;
  rep.designated_group = sweep.designated_group;
  const std::size_t n_w = raw.size() / n_groups;
  for (std::size_t i = 0; i < n_w; ++i) {
    SweepRow row;
    BiasEntry entry;
    row.w = raw[i * n_groups].w;
    entry.w = row.w;
    row.ratio.resize(n_groups);
    row.ci_low.resize(n_groups);
    row.ci_high.resize(n_groups);
    entry.total.resize(n_groups);
    entry.guidance.resize(n_groups);
    entry.model.resize(n_groups);
    for (int a = 0; a < n_groups; ++a) {
      const RawRow& r = raw[i * n_groups + a];
      require(r.group == a && r.w == row.w,
              "parse_sweep_csv: rows out of order near w=" + format_double(row.w));
      row.ratio[a] = r.ratio;
      row.ci_low[a] = r.ci_low;
      row.ci_high[a] = r.ci_high;
      entry.total[a] = r.total;
      entry.guidance[a] = r.guidance;
      entry.model[a] = r.model;
    }
    sweep.rows.push_back(row);
    rep.entries.push_back(entry);
    rep.w_grid.push_back(row.w);
    rep.ratios.push_back(row.ratio);
  }
  return {std::move(sweep), std::move(rep)};
}

}  // namespace fairguide
