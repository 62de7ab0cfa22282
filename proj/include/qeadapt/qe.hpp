#pragma once

#include "qeadapt/corpus.hpp"
#include "qeadapt/decoder.hpp"
#include "qeadapt/ngram_lm.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace qea {

inline constexpr std::size_t kNumQeFeatures = 41;

/// Feature order: 9 confusion-network features, 10 sentence features, 22
/// word-level features (per-bin and per-word values are averaged).
const std::array<const char *, kNumQeFeatures> &qe_feature_names();

using QeFeatureVector = std::array<double, kNumQeFeatures>;

/// Lexicon-derived tables and the language models the features read from.
class QeExtractor {
public:
  QeExtractor(const Lexicon &lex, const NgramLm &lm_in, const NgramLm &lm_out, const NgramLm &class_lm);

  QeFeatureVector extract(const Hypothesis &hyp, const ConfusionNetwork &cn) const;

  int homophones(TokenId w) const { return homophones_[static_cast<std::size_t>(w)]; }
  int neighbours(TokenId w) const { return neighbours_[static_cast<std::size_t>(w)]; }

private:
  const Lexicon *lex_;
  const NgramLm *lm_in_, *lm_out_, *class_lm_;
  std::vector<int> homophones_;
  std::vector<int> neighbours_;
};

QeFeatureVector extract_features(const Hypothesis &hyp, const ConfusionNetwork &cn, const NgramLm &lm_in,
                                 const NgramLm &lm_out, const NgramLm &class_lm, const Lexicon &lex);

/// Lexical-class sequence of a word sequence (ids 0..4), as fed to the class LM.
TokenSeq class_sequence(const Lexicon &lex, const TokenSeq &words);

void write_features(std::ostream &out, const std::vector<std::string> &ids, const std::vector<QeFeatureVector> &rows);
/// Reads a feature TSV; returns ids and rows in file order.
std::pair<std::vector<std::string>, std::vector<QeFeatureVector>> read_features(std::istream &in);

struct XrtParams {
  int n_bags = 1;
  int trees_per_bag = 16;
  int k_features = 6;
  int n_min = 5; // nodes with at most n_min samples become leaves
  bool bootstrap = true;
  std::uint64_t seed = 1;
  int total_trees() const { return n_bags * trees_per_bag; }
  bool operator==(const XrtParams &) const = default;
};

struct XrtNode {
  int feature = -1; // -1: leaf
  double value = 0; // cut-point, or leaf mean
  int left = -1;    // x < cut
  int right = -1;
};

struct XrtTree {
  std::vector<XrtNode> nodes; // pre-order; root at 0
  double predict(std::span<const double> x) const;
};

struct XrtModel {
  int n_features = 0;
  XrtParams params;
  std::vector<std::vector<XrtTree>> bags;
};

XrtModel xrt_fit(const Matrix &features, const std::vector<double> &targets, const XrtParams &params);
/// Unclamped per-tree outputs, bag by bag.
std::vector<double> xrt_tree_outputs(const XrtModel &model, std::span<const double> x);
/// Mean over all trees, clamped to [0, 1].
double xrt_predict(const XrtModel &model, std::span<const double> x);
std::vector<double> xrt_predict(const XrtModel &model, const Matrix &features);

double mae(const std::vector<double> &predictions, const std::vector<double> &oracle);

/// Speaker-disjoint folds: speakers shuffled with `seed`, dealt round-robin.
std::vector<int> speaker_folds(const std::vector<int> &speakers, int k, std::uint64_t seed);

struct CvOutcome {
  XrtParams best;
  std::vector<std::pair<XrtParams, double>> scores; // grid order, pooled out-of-fold MAE
  std::vector<double> oof_predictions;              // for the best grid point
};

/// k-fold grid search on pooled out-of-fold MAE. Ties prefer fewer trees, then larger n_min.
CvOutcome tune_cv(const Matrix &features, const std::vector<double> &targets, const std::vector<int> &speakers,
                  const std::vector<XrtParams> &grid, int k, std::uint64_t seed);

std::vector<XrtParams> default_xrt_grid(std::uint64_t seed);

void save_xrt(std::ostream &out, const XrtModel &model);
XrtModel load_xrt(std::istream &in);

void write_predictions(std::ostream &out, const std::vector<std::string> &ids, const std::vector<double> &pwer);
std::map<std::string, double> read_predictions(std::istream &in);

} // namespace qea
