// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance <path to the qeadapt CLI> [scratch dir]

#include "oracles.hpp"
#include "qeadapt/adaptation.hpp"
#include "qeadapt/harness.hpp"
#include "qeadapt/qe.hpp"
#include "small_world.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace qea;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char *name, bool ok, const std::string &detail, double secs, double limit) {
  const bool in_time = limit <= 0 || secs < limit;
  const bool pass = ok && in_time;
  failures += !pass;
  char timing[64];
  if (limit > 0)
    std::snprintf(timing, sizeof(timing), "%.1fs (limit %.0fs)", secs, limit);
  else
    std::snprintf(timing, sizeof(timing), "%.1fs", secs);
  std::printf("%s\t%2d\t%-22s\t%s\t%s%s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str(), timing,
              in_time ? "" : " TIMEOUT");
  std::fflush(stdout);
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

AcousticModel random_model(std::mt19937_64 &rng) {
  Layout l;
  l.feature_dim = 2 + static_cast<int>(rng() % 3);
  l.context = static_cast<int>(rng() % 2);
  l.hidden.assign(1 + rng() % 2, 0);
  for (int &h : l.hidden)
    h = 3 + static_cast<int>(rng() % 4);
  l.outputs = 2 + static_cast<int>(rng() % 4);
  AcousticModel m = init_model(rng(), l);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto &layer : m.layers)
    for (double &b : layer.bias)
      b = n(rng);
  if (rng() % 3 == 0) {
    m = with_identity_transform(m);
    for (double &w : m.odlr->weights.data)
      w += 0.1 * n(rng);
    for (double &b : m.odlr->bias)
      b = n(rng);
  }
  return m;
}

Matrix random_one_hot(std::mt19937_64 &rng, std::size_t T, std::size_t I) {
  Matrix m(T, I);
  for (std::size_t t = 0; t < T; ++t)
    m(t, rng() % I) = 1.0;
  return m;
}

double max_rel_error(const std::vector<double> &a, const std::vector<double> &b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-7}));
  return worst;
}

// ---- 1 ----
void gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst_ce = 0.0, worst_blend = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const AcousticModel m = random_model(rng);
    const auto T = 3 + rng() % 4;
    const auto I = static_cast<std::size_t>(m.outputs());
    const Matrix x = oracle::random_matrix(rng, T, static_cast<std::size_t>(m.feature_dim));
    const Matrix hard = random_one_hot(rng, T, I);
    const Matrix soft = oracle::random_stochastic(rng, T, I);
    worst_ce = std::max(worst_ce, max_rel_error(flatten(ce_loss_and_grad(m, x, hard).grad),
                                                oracle::fd_gradient(m, x, hard, 1e-5)));
    const double alpha = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const Matrix p = blend_targets(alpha, hard, soft);
    worst_blend = std::max(worst_blend,
                           max_rel_error(flatten(ce_loss_and_grad(m, x, p).grad), oracle::fd_gradient(m, x, p, 1e-5)));
  }
  const bool ok = worst_ce < 1e-4 && worst_blend < 1e-4;
  report(1, "gradient-check", ok,
         "20 models, max rel err CE " + fmt("%.2e", worst_ce) + ", blended " + fmt("%.2e", worst_blend),
         seconds_since(t0), 30);
}

// ---- 2 ----
void blend_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const AcousticModel m = random_model(rng);
    const auto T = 2 + rng() % 8;
    const auto I = static_cast<std::size_t>(m.outputs());
    const Matrix x = oracle::random_matrix(rng, T, static_cast<std::size_t>(m.feature_dim));
    const Matrix hard = random_one_hot(rng, T, I);
    const Matrix soft = oracle::random_stochastic(rng, T, I);
    const double a = std::uniform_real_distribution<double>()(rng);
    const auto g = flatten(ce_loss_and_grad(m, x, blend_targets(a, hard, soft)).grad);
    const auto gh = flatten(ce_loss_and_grad(m, x, hard).grad);
    const auto gs = flatten(ce_loss_and_grad(m, x, soft).grad);
    for (std::size_t i = 0; i < g.size(); ++i)
      worst = std::max(worst, std::abs(g[i] - ((1.0 - a) * gh[i] + a * gs[i])));
  }
  report(2, "blend-equivalence", worst < 1e-10, "50 points, max abs diff " + fmt("%.2e", worst), seconds_since(t0), 0);
}

// ---- 3 ----
void boundary_identities() {
  const auto t0 = Clock::now();
  const Scenario sc = build_scenario(small_config(11));
  const auto &lex = sc.data.lexicon;
  AdaptationSet set;
  for (std::size_t i = 0; i < 40; ++i) {
    set.utterances.push_back(sc.data.test.utterances[i]);
    set.supervision.push_back(strip_silence(lex, sc.data.test.utterances[i].reference));
  }
  AdaptationConfig cfg;
  cfg.alpha = 0.0;
  cfg.schedule.max_epochs = 4;
  const AdaptResult zero = adapt(sc.baseline, sc.priors, lex, set, cfg);

  // plain retraining: one-hot forced-alignment targets, same split and schedule
  std::vector<TrainItem> items;
  double grad_norm = 0.0;
  for (std::size_t i = 0; i < set.utterances.size(); ++i) {
    const auto &u = set.utterances[i];
    const Matrix post = forward(sc.baseline, u.frames);
    const Alignment al = forced_align_loglik(scaled_loglik(post, sc.priors), lex, set.supervision[i], true);
    Matrix hard(al.states.size(), static_cast<std::size_t>(sc.baseline.outputs()));
    for (std::size_t t = 0; t < al.states.size(); ++t)
      hard(t, static_cast<std::size_t>(al.states[t])) = 1.0;
    grad_norm = std::max(grad_norm, l2_norm(ce_loss_and_grad(sc.baseline, u.frames, blend_targets(1.0, hard, post)).grad));
    items.push_back({splice(u.frames, sc.baseline.context), hard});
  }
  const auto cv = cv_partition(items.size(), cfg.cv_fraction, derive_seed(cfg.schedule.seed, {0xc5ULL}));
  std::vector<TrainItem> tr, held;
  for (std::size_t i = 0; i < items.size(); ++i)
    (cv[i] ? held : tr).push_back(items[i]);
  const TrainResult plain = train(sc.baseline, tr, cfg.schedule, held);
  const bool identical = zero.model == plain.model && !(zero.model == sc.baseline);

  cfg.alpha = 1.0;
  const AdaptResult one = adapt(sc.baseline, sc.priors, lex, set, cfg);
  const bool ok = identical && grad_norm < 1e-10 && one.model == sc.baseline;
  report(3, "boundary-identities", ok,
         std::string("alpha=0 ") + (identical ? "bit-identical" : "DIFFERS") + ", alpha=1 max grad norm " +
             fmt("%.2e", grad_norm) + (one.model == sc.baseline ? ", model unchanged" : ", model CHANGED"),
         seconds_since(t0), 0);
}

// ---- 4 ----
void edit_oracle() {
  const auto t0 = Clock::now();
  std::vector<TokenSeq> seqs = {{}};
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (seqs[i].size() < 6)
      for (TokenId a = 0; a < 3; ++a) {
        TokenSeq s = seqs[i];
        s.push_back(a);
        seqs.push_back(s);
      }
  std::size_t pairs = 0, bad = 0;
  for (const auto &r : seqs)
    for (const auto &h : seqs) {
      ++pairs;
      bad += !(edit_align(r, h).counts == oracle::edit_counts(r, h));
    }
  report(4, "edit-distance-oracle", bad == 0,
         std::to_string(pairs) + " pairs, " + std::to_string(bad) + " mismatches", seconds_since(t0), 60);
}

// ---- 5 ----
void decoder_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(505);
  std::size_t instances = 0, bad = 0;
  for (int V = 1; V <= 3; ++V) {
    const Lexicon lex = oracle::tiny_lexicon(V);
    std::vector<TokenSeq> text;
    for (int i = 0; i < 20; ++i) {
      TokenSeq s(1 + rng() % 4);
      for (auto &w : s)
        w = static_cast<TokenId>(rng() % static_cast<unsigned>(V));
      text.push_back(s);
    }
    const NgramLm lm = train_lm(text, 2, 0.75, V);
    for (bool sil : {false, true})
      for (double lmw : {0.0, 1.0}) {
        DecoderConfig cfg;
        cfg.optional_silence = sil;
        cfg.lm_weight = lmw;
        cfg.silence_penalty = sil ? -0.5 : 0.0;
        const DecodingGraph g(lex, lm, cfg);
        for (int T = 1; T <= 6; ++T)
          for (int rep = 0; rep < 20; ++rep) {
            Matrix ll(static_cast<std::size_t>(T), static_cast<std::size_t>(V + 1));
            for (auto &v : ll.data)
              v = lmw == 0.0 ? -0.25 * static_cast<double>(rng() % 9) : std::normal_distribution<double>()(rng);
            ++instances;
            const auto truth = oracle::enumerate(ll, g);
            const NBestList list = nbest_loglik(ll, g, static_cast<int>(truth.size()) + 2);
            // dyadic scores are exact, so ranks must match token for token; otherwise
            // mathematically tied sequences may differ in the last bit and swap
            const bool exact = lmw == 0.0;
            const auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * (1.0 + std::abs(y)); };
            std::map<TokenSeq, double> truth_score;
            for (const auto &p : truth)
              truth_score[p.words] = p.score;
            bool same = list.hyps.size() == truth.size() && list.truncated;
            std::set<TokenSeq> returned;
            for (std::size_t k = 0; same && k < truth.size(); ++k) {
              const auto &h = list.hyps[k];
              const auto it = truth_score.find(h.words);
              same = returned.insert(h.words).second && it != truth_score.end() && close(h.score, truth[k].score) &&
                     close(it->second, truth[k].score) && (!exact || h.words == truth[k].words);
            }
            const DecodeResult best = viterbi_loglik(ll, g);
            const auto top = truth_score.find(best.best.words);
            same = same && close(best.best.score, truth[0].score) && top != truth_score.end() &&
                   close(top->second, truth[0].score) && (!exact || best.best.words == truth[0].words);
            bad += !same;
          }
      }
  }
  report(5, "decoder-oracle", bad == 0,
         std::to_string(instances) + " instances (T<=6, V<=3), " + std::to_string(bad) + " mismatches",
         seconds_since(t0), 60);
}

// ---- 6 ----
void normalization_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(606);
  double soft_err = 0, blend_err = 0, cn_err = 0, lm_err = 0;
  const auto row_err = [](const Matrix &m) {
    double e = 0;
    for (std::size_t r = 0; r < m.rows; ++r) {
      double s = 0;
      for (double v : m.row(r))
        s += v;
      e = std::max(e, std::abs(s - 1.0));
    }
    return e;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const AcousticModel m = random_model(rng);
    const Matrix x = oracle::random_matrix(rng, 10, static_cast<std::size_t>(m.feature_dim), 3.0);
    const Matrix post = forward(m, x);
    soft_err = std::max(soft_err, row_err(post));
    const Matrix hard = random_one_hot(rng, 10, static_cast<std::size_t>(m.outputs()));
    blend_err = std::max(blend_err, row_err(blend_targets(std::uniform_real_distribution<double>()(rng), hard, post)));

    NBestList list;
    std::set<TokenSeq> seen;
    double score = 0;
    const auto n = 1 + rng() % 10;
    while (list.hyps.size() < n) {
      TokenSeq w(1 + rng() % 6);
      for (auto &t : w)
        t = static_cast<TokenId>(rng() % 5);
      if (!seen.insert(w).second)
        continue;
      Hypothesis h;
      h.words = w;
      h.score = (score -= std::uniform_real_distribution<double>(0, 3)(rng));
      list.hyps.push_back(h);
    }
    for (const auto &bin : build_cn(list, 0.5 + static_cast<double>(trial % 3)).bins) {
      double s = 0;
      for (const auto &e : bin)
        s += e.posterior;
      cn_err = std::max(cn_err, std::abs(s - 1.0));
    }
  }
  for (int order = 1; order <= 3; ++order)
    for (int trial = 0; trial < 5; ++trial) {
      const int V = 3 + static_cast<int>(rng() % 6);
      std::vector<TokenSeq> text(50 + rng() % 200);
      for (auto &s : text) {
        s.resize(1 + rng() % 7);
        for (auto &w : s)
          w = static_cast<TokenId>(rng() % static_cast<unsigned>(V));
      }
      const NgramLm lm = train_lm(text, order, std::uniform_real_distribution<double>(0.1, 0.9)(rng), V);
      for (int h = 0; h < 100; ++h) {
        TokenSeq hist(rng() % 3);
        for (auto &w : hist)
          w = static_cast<TokenId>(rng() % static_cast<unsigned>(V));
        double s = 0;
        for (TokenId w : lm.outcomes())
          s += std::exp(lm.logprob_word(w, hist));
        lm_err = std::max(lm_err, std::abs(s - 1.0));
      }
    }
  const bool ok = soft_err <= 1e-9 && blend_err <= 1e-9 && cn_err <= 1e-9 && lm_err <= 1e-8;
  report(6, "normalization", ok,
         "max |sum-1|: softmax " + fmt("%.1e", soft_err) + ", blended " + fmt("%.1e", blend_err) + ", CN " +
             fmt("%.1e", cn_err) + ", n-gram " + fmt("%.1e", lm_err),
         seconds_since(t0), 0);
}

// ---- 7 ----
void qe_signal() {
  const auto t0 = Clock::now();
  int passed = 0;
  bool disjoint = true;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(derive_seed(seed, {0x7e}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.05);
    const int n_spk = 24, per_spk = 20;
    Matrix x(static_cast<std::size_t>(n_spk * per_spk), kNumQeFeatures);
    std::vector<double> y;
    std::vector<int> spk;
    for (int s = 0; s < n_spk; ++s)
      for (int i = 0; i < per_spk; ++i) {
        const std::size_t r = y.size();
        for (std::size_t f = 0; f < kNumQeFeatures; ++f)
          x(r, f) = u(rng);
        y.push_back(std::clamp(0.5 * x(r, 3) + 0.3 * (x(r, 17) > 0.5 ? 1.0 : 0.0) + noise(rng), 0.0, 1.0));
        spk.push_back(s);
      }
    // hold out a quarter of the speakers
    std::vector<int> order(n_spk);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::set<int> held(order.begin(), order.begin() + n_spk / 4);
    std::vector<std::size_t> tr, te;
    for (std::size_t r = 0; r < y.size(); ++r)
      (held.count(spk[r]) ? te : tr).push_back(r);
    const auto take = [&](const std::vector<std::size_t> &rows, Matrix &mx, std::vector<double> &my,
                          std::vector<int> &ms) {
      mx = Matrix(rows.size(), kNumQeFeatures);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), mx.row(i).begin());
        my.push_back(y[rows[i]]);
        ms.push_back(spk[rows[i]]);
      }
    };
    Matrix xtr, xte;
    std::vector<double> ytr, yte;
    std::vector<int> str, ste;
    take(tr, xtr, ytr, str);
    take(te, xte, yte, ste);

    const auto folds = speaker_folds(str, 4, seed);
    std::map<int, int> fold_of;
    for (std::size_t i = 0; i < str.size(); ++i) {
      auto [it, inserted] = fold_of.try_emplace(str[i], folds[i]);
      disjoint = disjoint && it->second == folds[i];
    }
    for (int s : ste)
      disjoint = disjoint && !fold_of.count(s);

    const CvOutcome cv = tune_cv(xtr, ytr, str, default_xrt_grid(seed), 4, seed);
    const XrtModel m = xrt_fit(xtr, ytr, cv.best);
    const double mean = std::accumulate(ytr.begin(), ytr.end(), 0.0) / static_cast<double>(ytr.size());
    const double model_mae = mae(xrt_predict(m, xte), yte);
    const double const_mae = mae(std::vector<double>(yte.size(), mean), yte);
    passed += model_mae <= 0.9 * const_mae;
    ratios += (ratios.empty() ? "" : " ") + fmt("%.2f", model_mae / const_mae);
  }
  report(7, "qe-learns-signal", passed >= 8 && disjoint,
         std::to_string(passed) + "/10 seeds at <= 0.9x constant MAE (ratios " + ratios + "), folds " +
             (disjoint ? "speaker-disjoint" : "OVERLAP"),
         seconds_since(t0), 120);
}

// ---- 8 and 10 ----
void ordering_and_odlr() {
  struct Row {
    double base, full, oracle, pwer, odlr, theta;
  };
  std::vector<Row> rows;
  double t_main = 0, t_odlr = 0;
  bool frozen = true, zero_identity = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto t0 = Clock::now();
    Config c;
    c.set("seed", std::to_string(seed));
    const ExperimentConfig cfg = experiment_from(c);
    const Scenario sc = build_scenario(cfg);
    Experiment exp(sc);
    Row r{};
    const auto &a = cfg.adaptation;
    r.base = exp.baseline_report("test").corpus_wer();
    r.full = exp.adapt_and_eval("test", "test", a, std::nullopt, false).report.corpus_wer();
    SelectionSpec o;
    o.basis = SelectionSpec::Basis::Oracle;
    o.threshold = 0.10;
    r.oracle = exp.adapt_and_eval("test", "test", a, o, false).report.corpus_wer();
    r.theta = exp.tune_threshold(a, SelectionSpec::Basis::Predicted, cfg.theta_grid);
    SelectionSpec p;
    p.basis = SelectionSpec::Basis::Predicted;
    p.threshold = r.theta;
    r.pwer = exp.adapt_and_eval("test", "test", a, p, false).report.corpus_wer();
    t_main += seconds_since(t0);

    t0 = Clock::now();
    AdaptationConfig od = a;
    od.mode = AdaptMode::Odlr;
    const auto out = exp.adapt_and_eval("test", "test", od, std::nullopt, false);
    r.odlr = out.report.corpus_wer();
    frozen = frozen && out.result.model.layers == sc.baseline.layers && out.result.model.odlr.has_value();
    if (seed == 1) {
      od.schedule.max_epochs = 0;
      const auto z = exp.adapt_and_eval("test", "test", od, std::nullopt, false);
      zero_identity = z.result.model == with_identity_transform(sc.baseline) &&
                      z.report.corpus_wer() == r.base &&
                      forward(z.result.model, sc.data.test.utterances[0].frames).data ==
                          forward(sc.baseline, sc.data.test.utterances[0].frames).data;
    }
    t_odlr += seconds_since(t0);
    rows.push_back(r);
    std::printf("  seed %2llu  baseline %6s  full %6s  oracle %6s  pWER %6s (theta %.2f)  oDLR %6s\n",
                static_cast<unsigned long long>(seed), format_percent(r.base).c_str(), format_percent(r.full).c_str(),
                format_percent(r.oracle).c_str(), format_percent(r.pwer).c_str(), r.theta,
                format_percent(r.odlr).c_str());
    std::fflush(stdout);
  }
  Row mean{};
  int inversions = 0, odlr_wins = 0;
  for (const auto &r : rows) {
    mean.base += r.base / 10, mean.full += r.full / 10, mean.oracle += r.oracle / 10, mean.pwer += r.pwer / 10;
    inversions += !(r.oracle <= r.pwer && r.pwer <= r.full && r.full <= r.base);
    odlr_wins += r.odlr < r.base;
  }
  const bool ordered = mean.oracle <= mean.pwer && mean.pwer <= mean.full && mean.full <= mean.base;
  const double gain = 100.0 * (mean.base - mean.oracle);
  report(8, "selection-ordering", ordered && gain >= 1.0 && inversions <= 3,
         "mean WER oracle " + format_percent(mean.oracle) + " <= pWER " + format_percent(mean.pwer) + " <= full " +
             format_percent(mean.full) + " <= baseline " + format_percent(mean.base) + ", gain " +
             fmt("%.2f", gain) + " pts, " + std::to_string(inversions) + "/10 seeds inverted",
         t_main, 600);
  report(10, "odlr", frozen && zero_identity && odlr_wins >= 7,
         std::string("hidden layers ") + (frozen ? "frozen" : "CHANGED") + ", zero-epoch " +
             (zero_identity ? "identity" : "NOT identity") + ", beats baseline on " + std::to_string(odlr_wins) +
             "/10 seeds",
         t_odlr, 0);
}

// ---- 9 ----
std::string run(const std::string &cmd, int &status) {
  std::string out;
  FILE *p = popen(cmd.c_str(), "r");
  if (!p) {
    status = -1;
    return out;
  }
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0)
    out.append(buf, n);
  status = pclose(p);
  return out;
}

void grid_fidelity(const std::string &cli) {
  const auto t0 = Clock::now();
  int status = 0;
  const std::string tsv = run("'" + cli + "' grid", status);
  std::istringstream in(tsv);
  std::string line;
  std::vector<std::string> header;
  std::vector<int> sizes;
  std::vector<std::vector<double>> cells;
  std::string argmin;
  bool complete = true;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, '\t');)
      f.push_back(x);
    if (line.rfind("# argmin", 0) == 0) {
      argmin = line;
    } else if (line.rfind('#', 0) == 0) {
      continue;
    } else if (header.empty()) {
      header.assign(f.begin() + 1, f.end());
    } else {
      sizes.push_back(std::stoi(f[0]));
      cells.emplace_back();
      for (std::size_t i = 1; i < f.size(); ++i) {
        if (f[i].empty())
          complete = false;
        cells.back().push_back(f[i].empty() ? 1e9 : std::stod(f[i]));
      }
    }
  }
  const bool shape = header == std::vector<std::string>{"0.0", "0.1", "0.3", "0.5", "0.7", "0.9"} &&
                     sizes == std::vector<int>{50, 100, 150, 300, 600, 1200} && cells.size() == 6 &&
                     std::all_of(cells.begin(), cells.end(), [](const auto &r) { return r.size() == 6; });
  double lowest = 1e9;
  for (const auto &r : cells)
    for (double v : r)
      lowest = std::min(lowest, v);
  bool argmin_ok = false;
  if (shape && !argmin.empty()) {
    std::vector<std::string> f;
    std::stringstream ls(argmin);
    for (std::string x; std::getline(ls, x, '\t');)
      f.push_back(x);
    if (f.size() == 4) {
      const auto r = std::find(sizes.begin(), sizes.end(), std::stoi(f[1])) - sizes.begin();
      const auto c = std::find(header.begin(), header.end(), f[2]) - header.begin();
      argmin_ok = r < 6 && c < 6 && std::stod(f[3]) == lowest && cells[r][c] == lowest;
    }
  }
  report(9, "grid-fidelity", status == 0 && shape && argmin_ok && complete,
         std::string("6x6 ") + (shape ? "ok" : "WRONG SHAPE") + ", argmin " +
             (argmin_ok ? "= matrix min " + fmt("%.2f", lowest) : "MISMATCH") + (complete ? "" : ", blank cells"),
         seconds_since(t0), 0);
}

// ---- 11 ----
std::map<std::string, std::string> tree_contents(const fs::path &dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir))
    return out;
  for (const auto &e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream f(e.path(), std::ios::binary);
      std::ostringstream ss;
      ss << f.rdbuf();
      out[fs::relative(e.path(), dir).string()] = ss.str();
    }
  return out;
}

void determinism(const std::string &cli, const fs::path &scratch) {
  const auto t0 = Clock::now();
  const fs::path a = scratch / "two_pass_a", b = scratch / "two_pass_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string args = " two-pass --seed 7 --selection threshold --out ";
  int sa = 0, sb = 0;
  run("'" + cli + "'" + args + "'" + a.string() + "' > /dev/null 2>&1", sa);
  run("'" + cli + "'" + args + "'" + b.string() + "' > /dev/null 2>&1", sb);
  const auto ca = tree_contents(a), cb = tree_contents(b);
  const bool ok = sa == 0 && sb == 0 && !ca.empty() && ca.count("report.tsv") && ca == cb;
  report(11, "determinism", ok,
         std::to_string(ca.size()) + " files, " + (ca == cb ? "byte-identical" : "DIFFER") +
             (sa == 0 && sb == 0 ? "" : ", run failed"),
         seconds_since(t0), 0);
}

} // namespace

int main(int argc, char **argv) {
  if (argc < 2) {
    std::cerr << "error\tusage\tacceptance <qeadapt CLI> [scratch dir]\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "qeadapt_acceptance";
  fs::create_directories(scratch);

  gradient_check();
  blend_equivalence();
  boundary_identities();
  edit_oracle();
  decoder_oracle();
  normalization_suite();
  qe_signal();
  ordering_and_odlr();
  grid_fidelity(cli);
  determinism(cli, scratch);
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
