#pragma once

#include "qeadapt/adaptation.hpp"
#include "qeadapt/config.hpp"
#include "qeadapt/corpus.hpp"
#include "qeadapt/decoder.hpp"
#include "qeadapt/ngram_lm.hpp"
#include "qeadapt/qe.hpp"
#include "qeadapt/scoring.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qea {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  CorpusSpec corpus;
  std::vector<int> hidden = {64};
  int context = 2;
  TrainSchedule train_schedule;
  double prior_floor = 1e-4;
  int lm_order = 2;
  int rescore_order = 3;
  double discount = 0.75;
  int lm_sentences = 3000;
  DecoderConfig decoder;
  int nbest = 10;
  Normalization normalization = Normalization::Raw;

  std::string adapt_set = "test"; // dev | test
  std::string eval_set = "test";
  bool manual_supervision = false;
  AdaptationConfig adaptation;
  std::string selection = "none"; // none | threshold | topk
  SelectionSpec::Basis basis = SelectionSpec::Basis::Predicted;
  double theta = 0.10;
  int top_k = 100;
  bool tune_theta = false; // pick theta (and keep alpha) on dev before adapting
  std::vector<double> theta_grid = {0.0, 0.1, 0.2, 0.3, 0.5};

  std::vector<double> grid_alpha = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<int> grid_sizes = {50, 100, 150, 300, 600, 1200};
  std::string grid_order = "predicted"; // corpus | oracle | predicted

  int qe_folds = 4;
  double rescore_weight = 1.0;
  std::string out_dir;
};

/// Named experiment presets (adaptation set + supervision + features + evaluation set).
std::vector<std::string> preset_names();
Config preset(const std::string &name);

/// Reads every known key; a `preset` key is expanded first and then overridden
/// by the explicit keys.
ExperimentConfig experiment_from(const Config &config);

/// Synthetic world for one seed: corpora, language models and the baseline model.
struct Scenario {
  ExperimentConfig cfg;
  CorpusSet data;
  NgramLm lm;         // decoding LM (lm_order)
  NgramLm lm_rescore; // higher-order in-domain LM
  NgramLm lm_out;     // out-of-domain LM
  NgramLm class_lm;   // lexical-class sequence LM
  AcousticModel baseline;
  Priors priors;
  std::vector<EpochLog> baseline_log;

  const Corpus &corpus(const std::string &name) const;
};

Scenario build_scenario(const ExperimentConfig &cfg);

/// Baseline training material from the synthesizer's own state paths.
std::vector<TrainItem> generator_items(const Corpus &corpus, const Lexicon &lex, int frames_per_state, int context);

struct FirstPass {
  std::vector<std::string> ids; // decoded utterances, corpus order
  std::vector<NBestList> nbest;
  std::vector<ConfusionNetwork> cn;
  std::vector<QeFeatureVector> features;
  std::vector<std::string> failed;
  std::map<std::string, TokenSeq> best() const;
};

FirstPass first_pass(const Corpus &corpus, const AcousticModel &model, const Priors &priors,
                     const DecodingGraph &graph, const QeExtractor &qe, int n);
void write_first_pass(const std::filesystem::path &dir, const FirstPass &fp, const Lexicon &lex);

/// 1-best word sequences; utterances that cannot be decoded get an empty hypothesis.
std::map<std::string, TokenSeq> decode_corpus(const Corpus &corpus, const AcousticModel &model, const Priors &priors,
                                              const DecodingGraph &graph);
WerReport score_corpus(const Corpus &corpus, const std::map<std::string, TokenSeq> &hyps, const Lexicon &lex);
/// Clamped sentence WER per utterance.
std::map<std::string, double> sentence_wers(const WerReport &report);

struct QeOutcome {
  XrtModel model;
  CvOutcome cv;
  double constant_mae = 0.0; // constant-mean predictor, out of fold
};

/// Everything the experiments share for one scenario: first passes of dev and
/// test, oracle and predicted WERs, and the QE model trained on dev.
class Experiment {
public:
  explicit Experiment(const Scenario &scenario);

  const Scenario &scenario() const { return *sc_; }
  const DecodingGraph &graph() const { return graph_; }
  const FirstPass &first(const std::string &set);
  const WerReport &baseline_report(const std::string &set);
  const std::map<std::string, double> &oracle(const std::string &set);
  /// dev: out-of-fold predictions; test: predictions of the dev-trained model.
  const std::map<std::string, double> &predicted(const std::string &set);
  const QeOutcome &qe();

  struct Outcome {
    AdaptResult result;
    Selection selection;
    std::size_t candidates = 0;
    WerReport report;
    std::map<std::string, TokenSeq> hyps;
    bool adapted = false;
    std::vector<std::string> warnings;
  };

  /// Selection on `adapt_set` (none when `selection` is empty), adaptation with
  /// first-pass (or manual) supervision, and a second decode of `eval_set`.
  Outcome adapt_and_eval(const std::string &adapt_set, const std::string &eval_set, const AdaptationConfig &config,
                         const std::optional<SelectionSpec> &selection, bool manual_supervision);

  /// Adaptation on exactly `ids` of `adapt_set`, then a second decode of `eval_set`.
  Outcome adapt_on(const std::string &adapt_set, const std::string &eval_set, const AdaptationConfig &config,
                   const std::vector<std::string> &ids, bool manual_supervision);

  /// Threshold with the lowest dev WER (homogeneous on dev); ties keep the smaller threshold.
  double tune_threshold(const AdaptationConfig &config, SelectionSpec::Basis basis, const std::vector<double> &grid);

private:
  const Scenario *sc_;
  DecodingGraph graph_;
  QeExtractor extractor_;
  std::map<std::string, FirstPass> first_;
  std::map<std::string, WerReport> baseline_;
  std::map<std::string, std::map<std::string, double>> oracle_, predicted_;
  std::unique_ptr<QeOutcome> qe_;
};

struct TwoPassReport {
  double baseline_wer = 0.0;
  double adapted_wer = 0.0;
  std::size_t candidates = 0;
  std::size_t selected = 0;
  double theta = 0.0;
  bool adapted = false;
  std::vector<std::string> warnings;
};

TwoPassReport run_two_pass(const ExperimentConfig &cfg);
TwoPassReport run_two_pass(Experiment &exp, const ExperimentConfig &cfg, const std::filesystem::path &out_dir);

struct GridReport {
  std::vector<int> sizes;
  std::vector<double> alphas;
  std::vector<std::vector<std::optional<double>>> wer; // [size][alpha], fraction; empty = failed cell
  std::vector<std::string> failures;
  std::vector<std::size_t> used; // utterances adapted on per row (< size when the pool is smaller)
  std::size_t argmin_row = 0, argmin_col = 0;
  double min_wer() const { return *wer[argmin_row][argmin_col]; }
};

GridReport run_grid(Experiment &exp, const ExperimentConfig &cfg);
GridReport run_grid(const ExperimentConfig &cfg);
/// Appendix layout: header row of alphas, one row per size, percents with 2 decimals.
void write_grid(std::ostream &out, const GridReport &grid);

struct RescoreResult {
  std::map<std::string, TokenSeq> before, after;
  WerReport before_report, after_report;
};

/// New score = acoustic + lm_weight * ((1 - weight) * first-pass LM + weight * higher-order LM).
std::size_t rescore_best(const NBestList &list, const NgramLm &higher, double weight, double lm_weight);
RescoreResult rescore_nbest(const Corpus &corpus, const FirstPass &fp, const NgramLm &higher, double weight,
                            double lm_weight, const Lexicon &lex);

} // namespace qea
