#pragma once

#include "qeadapt/acoustic_model.hpp"
#include "qeadapt/corpus.hpp"
#include "qeadapt/ngram_lm.hpp"

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace qea {

struct DecoderConfig {
  double lm_weight = 1.0;
  bool optional_silence = true;
  double silence_penalty = 0.0; // log-score added per inserted silence
  int nbest = 1;
  double beam = std::numeric_limits<double>::infinity();
  double cn_temperature = 1.0;
};

/// Token-level HMM: a left-to-right chain with self-loops per word, LM-weighted
/// word-to-word arcs, and an optional silence between words. Silence does not
/// advance the LM history, so one silence chain exists per left context
/// (sentence start or word); all copies share the silence acoustic states.
class DecodingGraph {
public:
  DecodingGraph(const Lexicon &lex, const NgramLm &lm, const DecoderConfig &config);

  struct State {
    TokenId token = 0;   // owning token (silence for silence copies)
    int position = 0;    // index inside the token's chain
    int pdf = 0;         // acoustic model output
    int context = -1;    // silence copies: left word context (-1 = sentence start)
    bool first = false;  // entry state of its chain
    bool last = false;   // exit state of its chain
  };

  const std::vector<State> &states() const { return states_; }
  const Lexicon &lexicon() const { return *lex_; }
  const DecoderConfig &config() const { return config_; }
  std::size_t num_words() const { return lex_->vocab_size(); }
  int num_pdfs() const { return lex_->total_states(); }
  /// Scaled LM arc score: lm_weight * ln P(w | context); context -1 is sentence start, w -1 the end marker.
  double lm_arc(int context, int w) const;
  /// Unscaled ln P(w | context).
  double lm_logprob(int context, int w) const;
  int word_first_state(TokenId w) const { return word_first_[static_cast<std::size_t>(w)]; }
  int silence_first_state(int context) const { return sil_first_[static_cast<std::size_t>(context + 1)]; }
  /// Minimum number of frames of any complete path.
  int min_frames() const;

private:
  const Lexicon *lex_;
  DecoderConfig config_;
  std::vector<State> states_;
  std::vector<int> word_first_;
  std::vector<int> sil_first_;
  std::vector<double> lm_; // (V+1) x (V+1): row = context+1, col = word (V = end marker)
};

struct TokenSpan {
  TokenId token = 0;
  int begin = 0; // first frame
  int end = 0;   // one past the last frame
  bool operator==(const TokenSpan &) const = default;
};

struct Alignment {
  std::vector<int> states; // per-frame acoustic output index
  std::vector<TokenSpan> spans;
  TokenSeq tokens() const; // including silences
};

struct Hypothesis {
  TokenSeq words;       // silence removed
  double score = 0.0;   // acoustic + lm_weight * lm (+ silence penalties)
  double acoustic = 0.0;
  double lm = 0.0;      // unscaled LM log-probability incl. end marker
  std::vector<bool> pause_before; // size words+1; last entry = trailing pause
};

struct NBestList {
  std::vector<Hypothesis> hyps; // strictly ordered, distinct word sequences
  std::vector<Alignment> alignments;
  bool truncated = false;       // fewer than the requested n survived the search
};

struct DecodeResult {
  Hypothesis best;
  Alignment alignment;
};

/// Exact n-best over word sequences (token passing with per-state lists of
/// distinct histories). Order: score, then fewer words, then lexicographically
/// smaller id sequence.
NBestList nbest_loglik(const Matrix &loglik, const DecodingGraph &graph, int n);
DecodeResult viterbi_loglik(const Matrix &loglik, const DecodingGraph &graph);

NBestList nbest(const AcousticModel &model, const Priors &priors, const Utterance &utt, const DecodingGraph &graph,
                int n);
DecodeResult viterbi(const AcousticModel &model, const Priors &priors, const Utterance &utt,
                     const DecodingGraph &graph);

/// Best state path constrained to `reference` (silences in it are mandatory);
/// with optional_silence, a silence may also appear between and around words.
Alignment forced_align_loglik(const Matrix &loglik, const Lexicon &lex, const TokenSeq &reference,
                              bool optional_silence);
Alignment forced_align(const AcousticModel &model, const Priors &priors, const Utterance &utt,
                       const TokenSeq &reference, const Lexicon &lex, bool optional_silence = true);

struct CnEntry {
  TokenId token = -1; // -1 = epsilon
  double posterior = 0.0;
};

struct ConfusionNetwork {
  std::vector<std::vector<CnEntry>> bins;
  TokenSeq consensus() const; // argmax per bin, epsilon skipped
};

/// Pivot alignment of every hypothesis against the 1-best; per-hypothesis
/// weights are softmax(score / temperature).
ConfusionNetwork build_cn(const NBestList &nbest, double temperature = 1.0);

void write_nbest(std::ostream &out, const std::string &utt_id, const NBestList &list, const Lexicon &lex);
void write_cn(std::ostream &out, const std::string &utt_id, const ConfusionNetwork &cn, const Lexicon &lex);

} // namespace qea
