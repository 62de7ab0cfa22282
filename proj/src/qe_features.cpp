#include "qeadapt/qe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace qea {

namespace {

enum Feature : std::size_t {
  kLogTop,
  kLogTopPrev,
  kLogTopNext,
  kBinMean,
  kBinStd,
  kBinMin,
  kBinMax,
  kPrevSilence,
  kNextSilence,
  kWordCount,
  kLmLogprob,
  kClassLogprob,
  kLogPpl,
  kClassLogPpl,
  kPctNumber,
  kPctNonAlpha,
  kPctContent,
  kPctNoun,
  kPctVerb,
  kClassPrev,
  kClassCur,
  kClassNext,
  kClassScorePrev,
  kClassScoreCur,
  kClassScoreNext,
  kBigramIn,
  kBigramOut,
  kNgramIn,
  kNgramOut,
  kFricatives,
  kLiquids,
  kNasals,
  kStops,
  kVowels,
  kHomophones,
  kNeighbours,
  kIsStop,
  kBeforeRepetition,
  kAfterRepetition,
  kBeforeSilence,
  kAfterSilence,
  kCount
};
static_assert(kCount == kNumQeFeatures);

int phone_distance(const std::vector<int> &a, const std::vector<int> &b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j)
    prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double safe_log(double p) { return std::log(std::max(p, kPosteriorFloor)); }

} // namespace

const std::array<const char *, kNumQeFeatures> &qe_feature_names() {
  static const std::array<const char *, kNumQeFeatures> names = {
      "cn_log_top",        "cn_log_top_prev",   "cn_log_top_next",  "cn_bin_mean",       "cn_bin_std",
      "cn_bin_min",        "cn_bin_max",        "cn_prev_silence",  "cn_next_silence",   "word_count",
      "lm_logprob",        "class_logprob",     "log_ppl",          "class_log_ppl",     "pct_number",
      "pct_non_alpha",     "pct_content",       "pct_noun",         "pct_verb",          "class_prev",
      "class_cur",         "class_next",        "class_score_prev", "class_score_cur",   "class_score_next",
      "bigram_in",         "bigram_out",        "ngram_in",         "ngram_out",         "fricatives",
      "liquids",           "nasals",            "stops",            "vowels",            "homophones",
      "neighbours",        "is_stop",           "before_repetition", "after_repetition", "before_silence",
      "after_silence"};
  return names;
}

TokenSeq class_sequence(const Lexicon &lex, const TokenSeq &words) {
  TokenSeq out;
  out.reserve(words.size());
  for (TokenId w : words)
    out.push_back(static_cast<TokenId>(lex.at(w).cls));
  return out;
}

QeExtractor::QeExtractor(const Lexicon &lex, const NgramLm &lm_in, const NgramLm &lm_out, const NgramLm &class_lm)
    : lex_(&lex), lm_in_(&lm_in), lm_out_(&lm_out), class_lm_(&class_lm) {
  const std::size_t V = lex.vocab_size();
  homophones_.assign(V, 0);
  neighbours_.assign(V, 0);
  for (std::size_t a = 0; a < V; ++a)
    for (std::size_t b = 0; b < V; ++b) {
      if (a == b)
        continue;
      const int d = phone_distance(lex.entries[a].phones, lex.entries[b].phones);
      homophones_[a] += d == 0;
      neighbours_[a] += d == 1;
    }
}

QeFeatureVector QeExtractor::extract(const Hypothesis &hyp, const ConfusionNetwork &cn) const {
  QeFeatureVector f{};

  const std::size_t B = cn.bins.size();
  if (B > 0) {
    const auto top = [&](std::size_t b) { return cn.bins[b].front(); };
    for (std::size_t b = 0; b < B; ++b) {
      const auto &bin = cn.bins[b];
      f[kLogTop] += safe_log(top(b).posterior);
      if (b > 0) {
        f[kLogTopPrev] += safe_log(top(b - 1).posterior);
        f[kPrevSilence] += top(b - 1).token < 0 ? 1.0 : 0.0;
      }
      if (b + 1 < B) {
        f[kLogTopNext] += safe_log(top(b + 1).posterior);
        f[kNextSilence] += top(b + 1).token < 0 ? 1.0 : 0.0;
      }
      double sum = 0, sq = 0, lo = 0, hi = 0;
      for (std::size_t i = 0; i < bin.size(); ++i) {
        const double l = safe_log(bin[i].posterior);
        sum += l;
        sq += l * l;
        lo = i == 0 ? l : std::min(lo, l);
        hi = i == 0 ? l : std::max(hi, l);
      }
      const double n = static_cast<double>(bin.size());
      const double mean = sum / n;
      f[kBinMean] += mean;
      f[kBinStd] += std::sqrt(std::max(0.0, sq / n - mean * mean));
      f[kBinMin] += lo;
      f[kBinMax] += hi;
    }
    for (std::size_t i = kLogTop; i <= kNextSilence; ++i)
      f[i] /= static_cast<double>(B);
  }

  const auto &w = hyp.words;
  const std::size_t N = w.size();
  if (N == 0)
    return f;
  const double n = static_cast<double>(N);
  const auto &lex = *lex_;
  const TokenSeq cls = class_sequence(lex, w);

  f[kWordCount] = n;
  f[kLmLogprob] = logprob(*lm_in_, w);
  f[kClassLogprob] = logprob(*class_lm_, cls);
  f[kLogPpl] = -f[kLmLogprob] / (n + 1.0);
  f[kClassLogPpl] = -f[kClassLogprob] / (n + 1.0);

  const auto bigram_in = token_logprobs(*lm_in_, w, 2);
  const auto bigram_out = token_logprobs(*lm_out_, w, 2);
  const auto full_in = token_logprobs(*lm_in_, w);
  const auto full_out = token_logprobs(*lm_out_, w);
  const auto cls_lp = token_logprobs(*class_lm_, cls, 2);

  for (std::size_t i = 0; i < N; ++i) {
    const auto &e = lex.at(w[i]);
    f[kPctNumber] += e.cls == LexClass::Number;
    f[kPctNonAlpha] += std::any_of(e.surface.begin(), e.surface.end(), [](char c) { return c < 'a' || c > 'z'; });
    f[kPctContent] += e.cls != LexClass::Function;
    f[kPctNoun] += e.cls == LexClass::Noun;
    f[kPctVerb] += e.cls == LexClass::Verb;

    // class ids are shifted by one so that 0 marks a missing neighbour
    f[kClassCur] += cls[i] + 1;
    f[kClassScoreCur] += std::exp(cls_lp[i]);
    if (i > 0) {
      f[kClassPrev] += cls[i - 1] + 1;
      f[kClassScorePrev] += std::exp(cls_lp[i - 1]);
    }
    if (i + 1 < N) {
      f[kClassNext] += cls[i + 1] + 1;
      f[kClassScoreNext] += std::exp(cls_lp[i + 1]);
    }
    f[kBigramIn] += std::exp(bigram_in[i]);
    f[kBigramOut] += std::exp(bigram_out[i]);
    f[kNgramIn] += std::exp(full_in[i]);
    f[kNgramOut] += std::exp(full_out[i]);

    for (int p : e.phones)
      f[kFricatives + static_cast<std::size_t>(lex.phones[static_cast<std::size_t>(p)].cls)] += 1.0;
    f[kHomophones] += homophones(w[i]);
    f[kNeighbours] += neighbours(w[i]);
    f[kIsStop] += e.cls == LexClass::Function;
    f[kBeforeRepetition] += i + 1 < N && w[i + 1] == w[i];
    f[kAfterRepetition] += i > 0 && w[i - 1] == w[i];
    if (hyp.pause_before.size() == N + 1) {
      f[kBeforeSilence] += hyp.pause_before[i + 1];
      f[kAfterSilence] += hyp.pause_before[i];
    }
  }
  for (std::size_t i = kPctNumber; i <= kPctVerb; ++i)
    f[i] /= n;
  for (std::size_t i = kClassPrev; i < kCount; ++i)
    f[i] /= n;
  return f;
}

QeFeatureVector extract_features(const Hypothesis &hyp, const ConfusionNetwork &cn, const NgramLm &lm_in,
                                 const NgramLm &lm_out, const NgramLm &class_lm, const Lexicon &lex) {
  return QeExtractor(lex, lm_in, lm_out, class_lm).extract(hyp, cn);
}

void write_features(std::ostream &out, const std::vector<std::string> &ids, const std::vector<QeFeatureVector> &rows) {
  require(ids.size() == rows.size(), "dimension", "feature ids and rows differ in length");
  out << "utt-id";
  for (const char *name : qe_feature_names())
    out << '\t' << name;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << ids[r];
    for (double v : rows[r]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

std::pair<std::vector<std::string>, std::vector<QeFeatureVector>> read_features(std::istream &in) {
  std::pair<std::vector<std::string>, std::vector<QeFeatureVector>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("utt-id", 0) == 0)
      continue;
    std::istringstream ss(line);
    std::string id;
    ss >> id;
    QeFeatureVector row{};
    for (auto &v : row)
      require(static_cast<bool>(ss >> v), "parse", "feature line " + std::to_string(lineno) + " has fewer than 41 values");
    out.first.push_back(id);
    out.second.push_back(row);
  }
  return out;
}

} // namespace qea
