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
// Tests for strict JSON (de)serialization: field-path error messages on
// unknown/missing/mistyped keys, bitwise round-trips for worlds,
// classifiers, α records, and estimators, and file-level error handling.

#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "fairguide/alphaselect.hpp"
#include "fairguide/classifier.hpp"
#include "fairguide/common.hpp"
#include "fairguide/serialize.hpp"
#include "fairguide/world.hpp"

namespace fairguide {
namespace {

// Runs fn, which must throw PreconditionError, and returns the message so
// tests can pin the field path it reports.
std::string precondition_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const PreconditionError& e) {
    return e.what();
  } catch (...) {
    ADD_FAILURE() << "threw something other than PreconditionError";
    return "";
  }
  ADD_FAILURE() << "expected PreconditionError, nothing was thrown";
  return "";
}

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

MixtureWorld sample_world() {
  MixtureWorld world;
  world.dim = 2;
  world.n_groups = 2;
  world.n_conditions = 2;
  auto add = [&world](int group, int condition, double weight, double mx,
                      double my) {
    MixtureComponent c;
    c.group = group;
    c.condition = condition;
    c.weight = weight;
    c.mean = Vec(2);
    c.mean << mx, my;
    c.cov = Mat(2, 2);
    c.cov << 0.5, 0.1, 0.1, 0.4;
    world.components.push_back(std::move(c));
  };
  add(0, 0, 0.3, -1.0, 0.5);
  add(1, 0, 0.2, 1.0, 0.5);
  add(0, 1, 0.1, -1.0, -0.5);
  add(1, 1, 0.4, 1.0 / 3.0, -0.5);  // awkward decimal must survive JSON
  world.target = Mat(2, 2);
  world.target << 0.6, 0.4, 0.3, 0.7;
  world.finalize();
  return world;
}

// ---------------------------------------------------------------------------
// StrictObject.
// ---------------------------------------------------------------------------

TEST(StrictObject, ReportsUnknownKeysWithFullPath) {
  const Json j = Json::parse(R"({"a": 1.5, "b": 2})");
  const std::string msg = precondition_message([&] {
    StrictObject o(j, "root");
    o.number("a");
    o.finish();  // "b" was never consumed
  });
  EXPECT_TRUE(contains(msg, "root: unknown key 'b'")) << msg;
}

TEST(StrictObject, ReportsMissingKeysWithFullPath) {
  const Json j = Json::parse(R"({"a": 1.5})");
  const std::string msg = precondition_message([&] {
    StrictObject o(j, "cfg.inner");
    o.number("missing");
  });
  EXPECT_TRUE(contains(msg, "cfg.inner: missing required key 'missing'"))
      << msg;
}

TEST(StrictObject, ReportsTypeErrorsWithKeyPath) {
  const Json j = Json::parse(
      R"({"s": "text", "x": 1.5, "neg": -3, "b": 1, "arr": [0.5, "oops"]})");
  {
    const std::string msg = precondition_message([&] {
      StrictObject o(j, "root");
      o.number("s");
    });
    EXPECT_TRUE(contains(msg, "root.s: expected a number")) << msg;
  }
  {
    const std::string msg = precondition_message([&] {
      StrictObject o(j, "root");
      o.integer("x");
    });
    EXPECT_TRUE(contains(msg, "root.x: expected an integer")) << msg;
  }
  {
    const std::string msg = precondition_message([&] {
      StrictObject o(j, "root");
      o.uinteger("neg");
    });
    EXPECT_TRUE(contains(msg, "root.neg: expected a nonnegative integer"))
        << msg;
  }
  {
    const std::string msg = precondition_message([&] {
      StrictObject o(j, "root");
      o.boolean("b");  // JSON 1 is a number, not a boolean
    });
    EXPECT_TRUE(contains(msg, "root.b: expected a boolean")) << msg;
  }
  {
    const std::string msg = precondition_message([&] {
      StrictObject o(j, "root");
      o.str("x");
    });
    EXPECT_TRUE(contains(msg, "root.x: expected a string")) << msg;
  }
  {
    const std::string msg = precondition_message([&] {
      StrictObject o(j, "root");
      o.number_list("arr");
    });
    EXPECT_TRUE(contains(msg, "root.arr[1]: expected a number")) << msg;
  }
}

TEST(StrictObject, ChildExtendsThePathAndDefaultsFillAbsentKeys) {
  const Json j = Json::parse(R"({"inner": {"v": "nope"}})");
  const std::string msg = precondition_message([&] {
    StrictObject o(j, "root");
    StrictObject inner = o.child("inner");
    inner.number("v");
  });
  EXPECT_TRUE(contains(msg, "root.inner.v: expected a number")) << msg;

  const Json k = Json::parse(R"({"present": 4.0})");
  StrictObject o(k, "root");
  EXPECT_TRUE(o.has("present"));
  EXPECT_FALSE(o.has("absent"));
  EXPECT_EQ(o.number_or("present", -1.0), 4.0);
  EXPECT_EQ(o.number_or("absent", 2.5), 2.5);
  EXPECT_EQ(o.integer_or("absent", 7), 7);
  EXPECT_EQ(o.uinteger_or("absent", 9u), 9u);
  EXPECT_EQ(o.boolean_or("absent", true), true);
  EXPECT_EQ(o.str_or("absent", "dflt"), "dflt");
  o.finish();  // the *_or probes must not leave "present" unconsumed
}

TEST(StrictObject, RejectsNonObjectRoot) {
  EXPECT_THROW(StrictObject(Json::parse("[1, 2]"), "root"), PreconditionError);
  EXPECT_THROW(StrictObject(Json::parse("3.5"), "root"), PreconditionError);
}

// ---------------------------------------------------------------------------
// Mixture-world JSON.
// ---------------------------------------------------------------------------

TEST(WorldJson, RoundTripsBitwise) {
  const MixtureWorld world = sample_world();
  const Json j = world_to_json(world);
  const MixtureWorld back = world_from_json(j, "world");

  EXPECT_EQ(back.dim, world.dim);
  EXPECT_EQ(back.n_groups, world.n_groups);
  EXPECT_EQ(back.n_conditions, world.n_conditions);
  ASSERT_EQ(back.components.size(), world.components.size());
  for (std::size_t i = 0; i < world.components.size(); ++i) {
    const MixtureComponent& a = world.components[i];
    const MixtureComponent& b = back.components[i];
    EXPECT_EQ(b.group, a.group);
    EXPECT_EQ(b.condition, a.condition);
    EXPECT_EQ(b.weight, a.weight);  // JSON stores binary64 exactly
    EXPECT_EQ((b.mean - a.mean).norm(), 0.0);
    EXPECT_EQ((b.cov - a.cov).norm(), 0.0);
  }
  EXPECT_EQ((back.target - world.target).norm(), 0.0);
}

TEST(WorldJson, MissingTargetDefaultsToUniform) {
  Json j = world_to_json(sample_world());
  j.erase("target");
  const MixtureWorld back = world_from_json(j, "world");
  ASSERT_EQ(back.target.rows(), 2);
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < 2; ++a) EXPECT_EQ(back.target(c, a), 0.5);
}

TEST(WorldJson, ReportsSchemaViolationsByFieldPath) {
  const MixtureWorld world = sample_world();
  {
    Json j = world_to_json(world);
    j["extra"] = 1;
    const std::string msg =
        precondition_message([&] { world_from_json(j, "world"); });
    EXPECT_TRUE(contains(msg, "world: unknown key 'extra'")) << msg;
  }
  {
    Json j = world_to_json(world);
    j.erase("dim");
    const std::string msg =
        precondition_message([&] { world_from_json(j, "world"); });
    EXPECT_TRUE(contains(msg, "world: missing required key 'dim'")) << msg;
  }
  {
    Json j = world_to_json(world);
    j["components"][0]["bogus"] = true;
    const std::string msg =
        precondition_message([&] { world_from_json(j, "world"); });
    EXPECT_TRUE(contains(msg, "world.components[0]: unknown key 'bogus'"))
        << msg;
  }
  {
    Json j = world_to_json(world);
    j["components"][1]["cov"] = Json::parse("[[1, 2], [3]]");
    const std::string msg =
        precondition_message([&] { world_from_json(j, "world"); });
    EXPECT_TRUE(contains(msg, "world.components[1].cov")) << msg;
  }
  {
    Json j = world_to_json(world);
    j["kind"] = "classifier";
    EXPECT_THROW(world_from_json(j, "world"), PreconditionError);
  }
  {
    Json j = world_to_json(world);
    j["schema_version"] = 2;
    EXPECT_THROW(world_from_json(j, "world"), PreconditionError);
  }
  {
    // Semantic validation still runs after parsing: weights must sum to 1.
    Json j = world_to_json(world);
    j["components"][0]["weight"] = 0.9;
    EXPECT_THROW(world_from_json(j, "world"), PreconditionError);
  }
}

// ---------------------------------------------------------------------------
// Classifier JSON.
// ---------------------------------------------------------------------------

TEST(ClassifierJson, RoundTripsBitwise) {
  const NoisyClassifier clf = make_classifier(2, 3, 424242);
  const Json j = classifier_to_json(clf);
  const NoisyClassifier back = classifier_from_json(j, "clf");

  EXPECT_EQ(back.data_dim, clf.data_dim);
  EXPECT_EQ(back.hidden, clf.hidden);
  EXPECT_EQ((back.w1 - clf.w1).norm(), 0.0);
  EXPECT_EQ((back.b1 - clf.b1).norm(), 0.0);
  EXPECT_EQ((back.w2 - clf.w2).norm(), 0.0);
  EXPECT_EQ((back.b2 - clf.b2).norm(), 0.0);
  EXPECT_EQ((back.w3 - clf.w3).norm(), 0.0);
  EXPECT_EQ(back.b3, clf.b3);
}

TEST(ClassifierJson, RejectsParameterCountAndArchitectureMismatch) {
  const NoisyClassifier clf = make_classifier(2, 3, 7);
  {
    Json j = classifier_to_json(clf);
    j["params"].erase(j["params"].size() - 1);
    const std::string msg =
        precondition_message([&] { classifier_from_json(j, "clf"); });
    EXPECT_TRUE(contains(msg, "clf.params: expected")) << msg;
    EXPECT_TRUE(contains(msg, "got")) << msg;
  }
  {
    Json j = classifier_to_json(clf);
    j["architecture"]["input_dim"] = 4;  // data_dim + 3 = 5
    const std::string msg =
        precondition_message([&] { classifier_from_json(j, "clf"); });
    EXPECT_TRUE(contains(msg, "clf.architecture.input_dim")) << msg;
  }
  {
    Json j = classifier_to_json(clf);
    j["architecture"]["activation"] = "relu";
    const std::string msg =
        precondition_message([&] { classifier_from_json(j, "clf"); });
    EXPECT_TRUE(contains(msg, "clf.architecture: unknown key 'activation'"))
        << msg;
  }
}

TEST(LearningCurveCsv, EmitsHeaderAndRoundTripValues) {
  std::vector<LearningCurveRow> curve(2);
  curve[0].step = 0;
  curve[0].ce_loss = 1.0 / 3.0;
  curve[0].wdp_loss = 0.0;
  curve[0].group_losses = {0.5, 0.25};
  curve[1].step = 10;
  curve[1].ce_loss = 0.125;
  curve[1].wdp_loss = 0.07;
  curve[1].group_losses = {0.2, 0.1};

  std::ostringstream os;
  write_learning_curve_csv(os, curve);
  const std::string text = os.str();
  EXPECT_TRUE(contains(text, "step,ce_loss,wdp_loss,group_loss_0,group_loss_1"))
      << text;
  EXPECT_TRUE(contains(text, "\n0," + format_double(1.0 / 3.0) + ",0,")) << text;
  EXPECT_TRUE(contains(text, "\n10,0.125," + format_double(0.07) + ",")) << text;

  std::ostringstream empty;
  EXPECT_THROW(write_learning_curve_csv(empty, {}), PreconditionError);
}

// ---------------------------------------------------------------------------
// α records and the estimator.
// ---------------------------------------------------------------------------

TEST(AlphaRecordJson, RoundTripsBitwise) {
  AlphaRecord rec;
  rec.prompt_label = "portrait of a firefighter";
  rec.alpha_star = -2.5;
  rec.saturated = false;
  rec.non_monotone = true;
  rec.flatness = 0.0125;
  rec.feature_score = -0.31;
  rec.feature_level = 0.31;
  rec.w_low = 1.0;
  rec.w_high = 7.0;
  rec.curve = {{-5.0, 0.2, 0.01}, {-2.5, -0.01, 0.01}, {0.0, -0.22, 0.02}};
  Vec e(3);
  e << 0.1, -0.7, 1.0 / 7.0;

  const Json j = alpha_record_to_json(rec, e);
  const auto [back, e_back] = alpha_record_from_json(j, "rec");

  EXPECT_EQ(back.prompt_label, rec.prompt_label);
  EXPECT_EQ(back.alpha_star, rec.alpha_star);
  EXPECT_EQ(back.saturated, rec.saturated);
  EXPECT_EQ(back.non_monotone, rec.non_monotone);
  EXPECT_EQ(back.flatness, rec.flatness);
  EXPECT_EQ(back.feature_score, rec.feature_score);
  EXPECT_EQ(back.feature_level, rec.feature_level);
  EXPECT_EQ(back.w_low, rec.w_low);
  EXPECT_EQ(back.w_high, rec.w_high);
  EXPECT_EQ((e_back - e).norm(), 0.0);
  ASSERT_EQ(back.curve.size(), rec.curve.size());
  for (std::size_t i = 0; i < rec.curve.size(); ++i) {
    EXPECT_EQ(back.curve[i].alpha, rec.curve[i].alpha);
    EXPECT_EQ(back.curve[i].bias, rec.curve[i].bias);
    EXPECT_EQ(back.curve[i].ci_half, rec.curve[i].ci_half);
  }

  Json damaged = j;
  damaged["curve"][0]["note"] = "hi";
  const std::string msg = precondition_message(
      [&] { alpha_record_from_json(damaged, "rec"); });
  EXPECT_TRUE(contains(msg, "rec.curve[0]: unknown key 'note'")) << msg;
}

TEST(EstimatorJson, RoundTripsBitwiseAndValidatesGrid) {
  AlphaEstimator est;
  est.g = Vec(3);
  est.g << 0.6, 0.0, 0.8;
  est.w_score = 1.75;
  est.w_level = -0.4;
  est.bias = 0.31;
  est.lambda = 0.1;
  est.grid.lo = -10.0;
  est.grid.hi = 10.0;
  est.grid.step = 2.5;
  est.n_train = 34;
  est.n_holdout = 6;
  est.holdout_mae_raw = 0.61;
  est.holdout_exact_rate = 5.0 / 6.0;
  est.loo_mse = 0.44;

  const Json j = estimator_to_json(est);
  const AlphaEstimator back = estimator_from_json(j, "est");

  EXPECT_EQ((back.g - est.g).norm(), 0.0);
  EXPECT_EQ(back.w_score, est.w_score);
  EXPECT_EQ(back.w_level, est.w_level);
  EXPECT_EQ(back.bias, est.bias);
  EXPECT_EQ(back.lambda, est.lambda);
  EXPECT_EQ(back.grid.lo, est.grid.lo);
  EXPECT_EQ(back.grid.hi, est.grid.hi);
  EXPECT_EQ(back.grid.step, est.grid.step);
  EXPECT_EQ(back.n_train, est.n_train);
  EXPECT_EQ(back.n_holdout, est.n_holdout);
  EXPECT_EQ(back.holdout_mae_raw, est.holdout_mae_raw);
  EXPECT_EQ(back.holdout_exact_rate, est.holdout_exact_rate);
  EXPECT_EQ(back.loo_mse, est.loo_mse);

  // Diagnostics are optional on read.
  Json no_diag = j;
  no_diag.erase("diagnostics");
  const AlphaEstimator lean = estimator_from_json(no_diag, "est");
  EXPECT_EQ(lean.n_train, 0);
  EXPECT_EQ(lean.holdout_mae_raw, 0.0);
  EXPECT_EQ(lean.w_score, est.w_score);

  // A malformed grid fails AlphaGrid::validate after parsing.
  Json bad_grid = j;
  bad_grid["grid"]["step"] = -1.0;
  EXPECT_THROW(estimator_from_json(bad_grid, "est"), PreconditionError);

  Json wrong_kind = j;
  wrong_kind["kind"] = "mixture_world";
  EXPECT_THROW(estimator_from_json(wrong_kind, "est"), PreconditionError);
}

// ---------------------------------------------------------------------------
// File-level helpers.
// ---------------------------------------------------------------------------

TEST(JsonFiles, ReadWriteAndErrorPaths) {
  const std::string dir = ::testing::TempDir();
  const std::string good = dir + "/fairguide_serialize_good.json";
  const std::string bad = dir + "/fairguide_serialize_bad.json";

  write_text_file(good, R"({"k": 3.5})");
  const Json j = read_json_file(good);
  EXPECT_EQ(j.at("k").get<double>(), 3.5);

  write_text_file(bad, "{not json");
  const std::string msg = precondition_message([&] { read_json_file(bad); });
  EXPECT_TRUE(contains(msg, "invalid JSON in file")) << msg;
  EXPECT_TRUE(contains(msg, bad)) << msg;

  const std::string missing = dir + "/fairguide_does_not_exist.json";
  const std::string msg2 =
      precondition_message([&] { read_json_file(missing); });
  EXPECT_TRUE(contains(msg2, "cannot open file")) << msg2;

  std::remove(good.c_str());
  std::remove(bad.c_str());
}

TEST(JsonFiles, WorldSurvivesDiskRoundTrip) {
  const MixtureWorld world = sample_world();
  const std::string path =
      ::testing::TempDir() + "/fairguide_world_roundtrip.json";
  write_text_file(path, world_to_json(world).dump(2) + "\n");
  const MixtureWorld back = world_from_json(read_json_file(path), "world");
  ASSERT_EQ(back.components.size(), world.components.size());
  for (std::size_t i = 0; i < world.components.size(); ++i) {
    EXPECT_EQ(back.components[i].weight, world.components[i].weight);
    EXPECT_EQ((back.components[i].mean - world.components[i].mean).norm(),
              0.0);
  }
  std::remove(path.c_str());
}

}  // namespace
}  // namespace fairguide
