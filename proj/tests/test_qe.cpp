#include "oracles.hpp"
#include "qeadapt/qe.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <sstream>

using namespace qea;

namespace {

std::size_t feature(const char *name) {
  const auto &names = qe_feature_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (std::strcmp(names[i], name) == 0)
      return i;
  FAIL("unknown feature ", name);
  return 0;
}

struct Fixture {
  Lexicon lex = build_lexicon(2, 5, 5);
  NgramLm lm = train_lm({{0, 1, 2}, {1, 1}}, 2, 0.5, 5);
  NgramLm cls = train_lm({{0, 1, 2}}, 2, 0.5, kNumLexClasses);
  QeExtractor qe{lex, lm, lm, cls};
};

Hypothesis words(TokenSeq w) {
  Hypothesis h;
  h.words = std::move(w);
  h.pause_before.assign(h.words.size() + 1, false);
  return h;
}

ConfusionNetwork certain_cn(const TokenSeq &w) {
  ConfusionNetwork cn;
  for (TokenId t : w)
    cn.bins.push_back({{t, 1.0}});
  return cn;
}

Matrix features_matrix(const std::vector<std::vector<double>> &rows) {
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

} // namespace

TEST_CASE("feature names are unique and complete") {
  std::set<std::string> names;
  for (const char *n : qe_feature_names())
    names.insert(n);
  CHECK(names.size() == kNumQeFeatures);
}

TEST_CASE("confusion network features") {
  Fixture f;
  const QeFeatureVector v = f.qe.extract(words({3}), certain_cn({3}));
  CHECK(v[feature("cn_log_top")] == 0.0);
  CHECK(v[feature("cn_bin_std")] == 0.0);

  ConfusionNetwork cn;
  cn.bins = {{{0, 0.5}, {1, 0.5}}, {{-1, 1.0}}};
  const QeFeatureVector w = f.qe.extract(words({0}), cn);
  CHECK(w[feature("cn_log_top")] == doctest::Approx(std::log(0.5) / 2.0));
  CHECK(w[feature("cn_next_silence")] == doctest::Approx(0.5));
  CHECK(w[feature("cn_prev_silence")] == 0.0);
  CHECK(w[feature("cn_bin_mean")] == doctest::Approx(std::log(0.5) / 2.0));
}

TEST_CASE("sentence and word features") {
  Fixture f;
  // classes follow id modulo 5: noun, verb, function, number
  const TokenSeq s = {0, 1, 2, 3};
  const QeFeatureVector v = f.qe.extract(words(s), certain_cn(s));
  CHECK(v[feature("pct_noun")] == doctest::Approx(0.25));
  CHECK(v[feature("pct_verb")] == doctest::Approx(0.25));
  CHECK(v[feature("pct_number")] == doctest::Approx(0.25));
  CHECK(v[feature("pct_content")] == doctest::Approx(0.75));
  CHECK(v[feature("word_count")] == 4.0);
  CHECK(v[feature("lm_logprob")] == doctest::Approx(logprob(f.lm, s)));
  CHECK(v[feature("log_ppl")] == doctest::Approx(-logprob(f.lm, s) / 5.0));
  CHECK(v[feature("class_logprob")] == doctest::Approx(logprob(f.cls, class_sequence(f.lex, s))));
  CHECK(v[feature("is_stop")] == doctest::Approx(0.25));
  CHECK(v[feature("class_cur")] == doctest::Approx((1 + 2 + 3 + 4) / 4.0));
  CHECK(v[feature("class_prev")] == doctest::Approx((1 + 2 + 3) / 4.0));

  double phones = 0.0;
  for (TokenId w : s)
    phones += static_cast<double>(f.lex.at(w).phones.size());
  double counted = 0.0;
  for (const char *n : {"fricatives", "liquids", "nasals", "stops", "vowels"})
    counted += v[feature(n)];
  CHECK(counted == doctest::Approx(phones / 4.0));
}

TEST_CASE("repetition and silence features") {
  Fixture f;
  const QeFeatureVector v = f.qe.extract(words({1, 1}), certain_cn({1, 1}));
  CHECK(v[feature("before_repetition")] == doctest::Approx(0.5));
  CHECK(v[feature("after_repetition")] == doctest::Approx(0.5));

  Hypothesis h = words({1, 2});
  h.pause_before = {true, false, true};
  const QeFeatureVector p = f.qe.extract(h, certain_cn({1, 2}));
  CHECK(p[feature("after_silence")] == doctest::Approx(0.5));
  CHECK(p[feature("before_silence")] == doctest::Approx(0.5));
}

TEST_CASE("empty hypothesis gives zero word features") {
  Fixture f;
  const QeFeatureVector v = f.qe.extract(words({}), ConfusionNetwork{});
  for (double x : v)
    CHECK(x == 0.0);
}

TEST_CASE("homophones and phone neighbours") {
  const Lexicon lex = build_lexicon(1, 20, 10);
  const NgramLm lm = NgramLm::uniform(21);
  const QeExtractor qe(lex, lm, lm, NgramLm::uniform(6));
  CHECK(qe.homophones(19) >= 1);
  CHECK(qe.homophones(14) >= 1);
}

TEST_CASE("feature files round trip") {
  std::mt19937_64 rng(1);
  std::vector<QeFeatureVector> rows(3);
  for (auto &r : rows)
    for (auto &x : r)
      x = std::normal_distribution<double>()(rng);
  std::stringstream ss;
  write_features(ss, {"a", "b", "c"}, rows);
  const auto [ids, back] = read_features(ss);
  CHECK(ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(back == rows);
}

TEST_CASE("mean absolute error") {
  CHECK(mae({0.1, 0.5}, {0.1, 0.5}) == 0.0);
  CHECK(mae({0.1, 0.3}, {0.2, 0.2}) == doctest::Approx(0.1));
  CHECK_THROWS_AS(mae({0.1}, {0.1, 0.2}), Error);
}

TEST_CASE("trees on constant or degenerate data") {
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(rng, 40, 6);
  const std::vector<double> y(40, 0.3);
  XrtParams p;
  p.n_bags = 2;
  const XrtModel m = xrt_fit(x, y, p);
  for (double v : xrt_predict(m, oracle::random_matrix(rng, 10, 6)))
    CHECK(v == doctest::Approx(0.3).epsilon(1e-15));

  std::vector<double> z(40);
  double mean = 0.0;
  for (auto &v : z)
    mean += (v = std::uniform_real_distribution<double>()(rng));
  mean /= 40.0;
  XrtParams q;
  q.n_bags = 1;
  q.bootstrap = false;
  q.n_min = 40;
  const XrtModel g = xrt_fit(x, z, q);
  for (double v : xrt_predict(g, x))
    CHECK(v == doctest::Approx(mean).epsilon(1e-12));

  Matrix flat(10, 6);
  std::vector<double> w(10);
  for (std::size_t i = 0; i < 10; ++i)
    w[i] = static_cast<double>(i) / 10.0;
  const XrtModel c = xrt_fit(flat, w, XrtParams{});
  for (const auto &bag : c.bags)
    for (const auto &tree : bag)
      CHECK(tree.nodes.size() == 1);
  CHECK_THROWS_AS(xrt_fit(Matrix(1, 3), {0.5}, XrtParams{}), Error);
}

TEST_CASE("trees fit a staircase") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    const double x = std::uniform_real_distribution<double>()(rng);
    rows.push_back({x});
    y.push_back(x > 0.5 ? 1.0 : 0.0);
  }
  XrtParams p;
  p.n_bags = 4;
  p.trees_per_bag = 16;
  p.k_features = 1;
  p.n_min = 2;
  const Matrix x = features_matrix(rows);
  const XrtModel m = xrt_fit(x, y, p);
  CHECK(p.total_trees() == 64);
  CHECK(mae(xrt_predict(m, x), y) < 0.05);

  const XrtModel again = xrt_fit(x, y, p);
  CHECK(xrt_predict(again, x) == xrt_predict(m, x));
}

TEST_CASE("prediction uses the tree mean and clamps") {
  XrtModel m;
  m.n_features = 2;
  XrtTree leaf;
  leaf.nodes = {{-1, 0.2, -1, -1}};
  m.bags = {{leaf}};
  const std::vector<double> x = {0.0, 1.0};
  CHECK(xrt_predict(m, x) == doctest::Approx(0.2));

  XrtTree neg;
  neg.nodes = {{-1, -0.4, -1, -1}};
  m.bags = {{neg, neg}};
  CHECK(xrt_predict(m, x) == 0.0);
  CHECK(xrt_tree_outputs(m, x) == std::vector<double>{-0.4, -0.4});
  CHECK_THROWS_AS(xrt_predict(m, std::vector<double>{1.0}), Error);
}

TEST_CASE("speaker folds are disjoint and balanced") {
  std::vector<int> spk;
  for (int s = 0; s < 10; ++s)
    for (int i = 0; i < 5; ++i)
      spk.push_back(s);
  const auto folds = speaker_folds(spk, 4, 9);
  std::map<int, int> fold_of;
  for (std::size_t i = 0; i < spk.size(); ++i) {
    auto [it, inserted] = fold_of.try_emplace(spk[i], folds[i]);
    CHECK(it->second == folds[i]);
  }
  std::map<int, int> per_fold;
  for (const auto &[s, f] : fold_of)
    ++per_fold[f];
  CHECK(per_fold.size() == 4);
  for (const auto &[f, n] : per_fold)
    CHECK((n == 2 || n == 3));
  CHECK_THROWS_AS(speaker_folds({0, 1}, 3, 1), Error);
}

TEST_CASE("cross-validation picks the only grid point and is reproducible") {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(rng, 60, static_cast<std::size_t>(kNumQeFeatures));
  std::vector<double> y;
  std::vector<int> spk;
  for (std::size_t i = 0; i < 60; ++i) {
    y.push_back(x(i, 0) > 0 ? 0.8 : 0.1);
    spk.push_back(static_cast<int>(i % 6));
  }
  XrtParams only;
  only.trees_per_bag = 8;
  const CvOutcome r = tune_cv(x, y, spk, {only}, 3, 1);
  CHECK(r.best == only);
  CHECK(r.scores.size() == 1);
  CHECK(r.oof_predictions.size() == 60);
  CHECK(mae(r.oof_predictions, y) == doctest::Approx(r.scores[0].second));

  const auto grid = default_xrt_grid(1);
  const CvOutcome a = tune_cv(x, y, spk, grid, 3, 1);
  const CvOutcome b = tune_cv(x, y, spk, grid, 3, 1);
  CHECK(a.best == b.best);
  CHECK(a.oof_predictions == b.oof_predictions);
  double lowest = 1e9;
  for (const auto &[p, s] : a.scores)
    lowest = std::min(lowest, s);
  for (const auto &[p, s] : a.scores)
    if (p == a.best)
      CHECK(s == lowest);
}

TEST_CASE("model and prediction files round trip") {
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(rng, 30, 6);
  std::vector<double> y(30);
  for (std::size_t i = 0; i < 30; ++i)
    y[i] = x(i, 1) > 0 ? 0.6 : 0.2;
  const XrtModel m = xrt_fit(x, y, XrtParams{});
  std::stringstream ss;
  save_xrt(ss, m);
  CHECK(xrt_predict(load_xrt(ss), x) == xrt_predict(m, x));

  std::stringstream pp;
  write_predictions(pp, {"u1", "u2"}, {0.25, 0.125});
  const auto back = read_predictions(pp);
  CHECK(back.at("u1") == 0.25);
  CHECK(back.at("u2") == 0.125);
}
