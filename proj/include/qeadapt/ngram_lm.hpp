#pragma once

#include "qeadapt/common.hpp"

#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

namespace qea {

/// Interpolated Kneser-Ney n-gram model (orders 1..3, fixed discount), held in
/// its exact back-off form: one probability per observed n-gram plus one
/// interpolation weight per observed history. Words are ids 0..V-1; the model
/// adds begin/end markers and an unknown token after them.
class NgramLm {
public:
  NgramLm() = default;

  int order() const { return order_; }
  double discount() const { return discount_; }
  std::size_t vocab_size() const { return vocab_; }
  TokenId bos() const { return static_cast<TokenId>(vocab_); }
  TokenId eos() const { return static_cast<TokenId>(vocab_ + 1); }
  TokenId unk() const { return static_cast<TokenId>(vocab_ + 2); }

  /// Natural-log probability of `w` after `history` (oldest first; may start
  /// with bos()). At most `max_order` (0 = model order) tokens of context are used.
  double logprob_word(TokenId w, std::span<const TokenId> history, int max_order = 0) const;

  /// Symbols the model assigns probability to: words, end marker, unknown.
  std::vector<TokenId> outcomes() const;

  /// Observed continuations of the longest matching history (used for sampling).
  std::vector<TokenId> continuations(std::span<const TokenId> history) const;

  /// Untrained prior: every symbol gets probability 1/n_outcomes, the end
  /// marker counting as one of the outcomes.
  static NgramLm uniform(std::size_t n_outcomes);

  void save(std::ostream &out) const;
  static NgramLm load(std::istream &in);

  friend NgramLm train_lm(const std::vector<TokenSeq> &, int, double, std::size_t);

private:
  using Table = std::unordered_map<std::uint64_t, double>;

  TokenId map_token(TokenId t) const;
  static std::uint64_t key(std::span<const TokenId> gram);
  double logprob_rec(TokenId w, std::span<const TokenId> hist) const;
  void index_successors();

  int order_ = 1;
  double discount_ = 0.75;
  std::size_t vocab_ = 0;
  std::size_t uniform_outcomes_ = 0; // non-zero in prior mode
  std::vector<Table> logp_;          // [k-1]: n-gram of order k -> ln P(w | h)
  std::vector<Table> backoff_;       // [k-1]: gram of order k, as a history -> ln gamma
  std::vector<std::unordered_map<std::uint64_t, std::vector<TokenId>>> successors_;
};

NgramLm train_lm(const std::vector<TokenSeq> &transcripts, int order, double discount, std::size_t vocab_size);

/// Sentence log-probability (natural log) including the end marker.
double logprob(const NgramLm &lm, const TokenSeq &tokens);
/// exp(-logprob / (len + 1)).
double perplexity(const NgramLm &lm, const TokenSeq &tokens);
/// Per-token ln P(w_i | h_i) for each token of the sentence (end marker excluded).
std::vector<double> token_logprobs(const NgramLm &lm, const TokenSeq &tokens, int max_order = 0);

TokenSeq sample_sentence(const NgramLm &lm, std::uint64_t seed, int max_len);

} // namespace qea
