#include "qeadapt/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace qea {

const char *to_string(AdaptMode m) {
  switch (m) {
  case AdaptMode::KldHard:
    return "kld-hard";
  case AdaptMode::KldSoft:
    return "kld-soft";
  case AdaptMode::Odlr:
    return "odlr";
  }
  return "?";
}

AdaptMode adapt_mode_from_string(const std::string &s) {
  if (s == "kld-hard")
    return AdaptMode::KldHard;
  if (s == "kld-soft")
    return AdaptMode::KldSoft;
  if (s == "odlr")
    return AdaptMode::Odlr;
  fail("invalid_argument", "unknown adaptation mode '" + s + "' (kld-hard, kld-soft, odlr)");
}

const char *to_string(Normalization n) { return n == Normalization::Raw ? "raw" : "cmvn"; }

Normalization normalization_from_string(const std::string &s) {
  if (s == "raw")
    return Normalization::Raw;
  if (s == "cmvn")
    return Normalization::Cmvn;
  fail("invalid_argument", "unknown normalization '" + s + "' (raw, cmvn)");
}

Matrix blend_targets(double alpha, const Matrix &one_hot, const Matrix &p_star) {
  require(alpha >= 0.0 && alpha <= 1.0, "invalid_argument", "alpha outside [0,1]");
  require(one_hot.rows == p_star.rows && one_hot.cols == p_star.cols, "dimension", "target shapes differ");
  Matrix out(one_hot.rows, one_hot.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (1.0 - alpha) * one_hot.data[i] + alpha * p_star.data[i];
  return out;
}

Matrix one_hot_targets(const std::vector<int> &states, int num_states) {
  Matrix out(states.size(), static_cast<std::size_t>(num_states));
  for (std::size_t t = 0; t < states.size(); ++t) {
    require(states[t] >= 0 && states[t] < num_states, "dimension", "state index out of range");
    out(t, static_cast<std::size_t>(states[t])) = 1.0;
  }
  return out;
}

double sentence_alpha(double beta, double wer) {
  require(beta >= 0.0 && beta <= 1.0, "invalid_argument", "beta outside [0,1]");
  return beta + (1.0 - beta) * std::clamp(wer, 0.0, 1.0);
}

std::vector<bool> cv_partition(std::size_t n, double fraction, std::uint64_t seed) {
  require(n >= 2, "invalid_argument", "need at least 2 utterances to hold out a cv set");
  require(fraction >= 0.0 && fraction <= 1.0, "invalid_argument", "cv fraction outside [0,1]");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i)
    keyed[i] = {derive_seed(seed, {i}), i};
  std::sort(keyed.begin(), keyed.end());
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const std::size_t count = std::clamp<std::size_t>(want, 1, n - 1);
  std::vector<bool> cv(n, false);
  for (std::size_t k = 0; k < count; ++k)
    cv[keyed[k].second] = true;
  return cv;
}

namespace {

struct Prepared {
  std::vector<TrainItem> train, cv;
  std::vector<std::string> dropped;
  std::size_t frames = 0;
};

template <class TargetFn>
Prepared prepare(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex, const AdaptationSet &set,
                 double cv_fraction, std::uint64_t seed, bool optional_silence, TargetFn targets_for) {
  require(set.supervision.size() == set.utterances.size(), "invalid_argument",
          "every adaptation utterance needs a supervision transcript");
  std::vector<TrainItem> items(set.utterances.size());
  std::vector<int> ok(set.utterances.size(), 0);
  std::vector<std::string> why(set.utterances.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < set.utterances.size(); ++i) {
    const auto &u = set.utterances[i];
    try {
      // p* from the frozen baseline, computed once
      const Matrix post = forward(baseline, u.frames);
      const Alignment al = forced_align_loglik(scaled_loglik(post, priors), lex, set.supervision[i], optional_silence);
      items[i].input = splice(u.frames, baseline.context);
      items[i].targets = targets_for(i, one_hot_targets(al.states, baseline.outputs()), post);
      ok[i] = 1;
    } catch (const Error &e) {
      why[i] = e.what();
    }
  }
  Prepared p;
  std::vector<TrainItem> kept;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (ok[i])
      kept.push_back(std::move(items[i]));
    else
      p.dropped.push_back(set.utterances[i].id);
  }
  require(kept.size() >= 2, "empty_adaptation",
          "fewer than 2 adaptation utterances survived forced alignment (" + std::to_string(kept.size()) + ")");
  const auto cv = cv_partition(kept.size(), cv_fraction, derive_seed(seed, {0xc5ULL}));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (cv[i]) {
      p.cv.push_back(std::move(kept[i]));
    } else {
      p.frames += kept[i].input.rows;
      p.train.push_back(std::move(kept[i]));
    }
  }
  return p;
}

} // namespace

AdaptResult adapt_kld(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex,
                      const AdaptationSet &set, const AdaptationConfig &config) {
  require(config.mode != AdaptMode::Odlr, "invalid_argument", "adapt_kld called with odlr mode");
  require(config.alpha >= 0.0 && config.alpha <= 1.0, "invalid_argument", "alpha outside [0,1]");
  const bool soft = config.mode == AdaptMode::KldSoft;
  require(!soft || set.wer.size() == set.utterances.size(), "invalid_argument",
          "soft adaptation needs a WER for every utterance");
  Prepared p = prepare(baseline, priors, lex, set, config.cv_fraction, config.schedule.seed, config.optional_silence,
                       [&](std::size_t i, const Matrix &one_hot, const Matrix &post) {
                         const double a = soft ? sentence_alpha(config.beta, set.wer[i]) : config.alpha;
                         return blend_targets(a, one_hot, post);
                       });
  TrainResult tr = train(baseline, p.train, config.schedule, p.cv);
  return {std::move(tr.model), std::move(tr.log), tr.initial_cv_accuracy, std::move(p.dropped), p.frames, 1.0};
}

AdaptResult adapt_odlr(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex,
                       const AdaptationSet &set, const TrainSchedule &schedule, double cv_fraction,
                       bool optional_silence) {
  Prepared p = prepare(baseline, priors, lex, set, cv_fraction, schedule.seed, optional_silence,
                       [](std::size_t, const Matrix &one_hot, const Matrix &) { return one_hot; });
  const AcousticModel init = with_identity_transform(baseline);
  TrainResult tr = train(init, p.train, schedule, p.cv, TrainScope::OutputTransformOnly);
  const double n_odlr = static_cast<double>(init.odlr->weights.data.size() + init.odlr->bias.size());
  const double fraction = n_odlr / static_cast<double>(init.num_parameters());
  return {std::move(tr.model), std::move(tr.log), tr.initial_cv_accuracy, std::move(p.dropped), p.frames, fraction};
}

AdaptResult adapt(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex, const AdaptationSet &set,
                  const AdaptationConfig &config) {
  if (config.mode == AdaptMode::Odlr) {
    TrainSchedule s = config.schedule;
    s.learning_rate = config.odlr_learning_rate;
    return adapt_odlr(baseline, priors, lex, set, s, config.cv_fraction, config.optional_silence);
  }
  return adapt_kld(baseline, priors, lex, set, config);
}

void write_adaptation_log(std::ostream &out, const std::vector<EpochLog> &log) {
  out << "epoch\tlr\tcv-frame-acc\ttrain-loss\n";
  char buf[128];
  for (const auto &e : log) {
    std::snprintf(buf, sizeof(buf), "%d\t%.6g\t%.6f\t%.6f\n", e.epoch, e.learning_rate, e.cv_frame_accuracy,
                  e.train_loss);
    out << buf;
  }
}

} // namespace qea
