#pragma once

#include "qeadapt/acoustic_model.hpp"
#include "qeadapt/corpus.hpp"
#include "qeadapt/decoder.hpp"
#include "qeadapt/scoring.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qea {

enum class AdaptMode { KldHard, KldSoft, Odlr };
enum class Normalization { Raw, Cmvn };

const char *to_string(AdaptMode m);
AdaptMode adapt_mode_from_string(const std::string &s);
const char *to_string(Normalization n);
Normalization normalization_from_string(const std::string &s);

inline TrainSchedule default_adaptation_schedule() {
  TrainSchedule s;
  s.max_epochs = 10;
  return s;
}

struct AdaptationConfig {
  AdaptMode mode = AdaptMode::KldHard;
  double alpha = 0.3;
  double beta = 0.5;
  SelectionSpec::Basis wer_source = SelectionSpec::Basis::Predicted;
  std::optional<SelectionSpec> selection;
  TrainSchedule schedule = default_adaptation_schedule();
  double odlr_learning_rate = 0.0005; // replaces schedule.learning_rate in odlr mode
  Normalization normalization = Normalization::Raw;
  double cv_fraction = 0.1; // share of adaptation utterances held out for the newbob schedule
  bool optional_silence = true;
};

/// Utterances plus their (manual or first-pass) transcripts; `wer` is the
/// per-sentence WER feeding the soft alpha, and may stay empty otherwise.
struct AdaptationSet {
  std::vector<Utterance> utterances;
  std::vector<TokenSeq> supervision;
  std::vector<double> wer;
};

/// P = (1 - alpha) * one_hot + alpha * p_star.
Matrix blend_targets(double alpha, const Matrix &one_hot, const Matrix &p_star);
/// T x I rows, one-hot on the given per-frame states.
Matrix one_hot_targets(const std::vector<int> &states, int num_states);

/// alpha_k = beta + (1 - beta) * wer_k, with wer_k clamped to [0, 1].
double sentence_alpha(double beta, double wer);

/// Which utterances go to the cv set: the round(fraction * n) with the smallest
/// seeded hashes, keeping at least one utterance on each side.
std::vector<bool> cv_partition(std::size_t n, double fraction, std::uint64_t seed);

struct AdaptResult {
  AcousticModel model;
  std::vector<EpochLog> log;
  double initial_cv_accuracy = 0.0;
  std::vector<std::string> dropped; // utterances whose forced alignment failed
  std::size_t frames = 0;           // N, adaptation frames used for training
  double updated_fraction = 1.0;    // trainable share of the adapted model's parameters
};

AdaptResult adapt_kld(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex,
                      const AdaptationSet &set, const AdaptationConfig &config);

AdaptResult adapt_odlr(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex,
                       const AdaptationSet &set, const TrainSchedule &schedule, double cv_fraction = 0.1,
                       bool optional_silence = true);

/// Dispatches on config.mode.
AdaptResult adapt(const AcousticModel &baseline, const Priors &priors, const Lexicon &lex, const AdaptationSet &set,
                  const AdaptationConfig &config);

/// TSV `epoch lr cv-frame-acc train-loss`.
void write_adaptation_log(std::ostream &out, const std::vector<EpochLog> &log);

} // namespace qea
