#pragma once

// Slow reference computations the tests compare the library against.

#include "qeadapt/acoustic_model.hpp"
#include "qeadapt/corpus.hpp"
#include "qeadapt/decoder.hpp"
#include "qeadapt/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using qea::Matrix;
using qea::TokenId;
using qea::TokenSeq;

inline std::string str(const TokenSeq &s) {
  std::string out;
  for (TokenId t : s)
    out += (out.empty() ? "" : " ") + std::to_string(t);
  return "[" + out + "]";
}

// ---- edit distance ----

// S/D/I along the backtrace that prefers match, substitution, deletion,
// insertion; costs come from a memoised top-down recursion on prefixes.
inline qea::EditCounts edit_counts(const TokenSeq &r, const TokenSeq &h) {
  std::vector<int> memo((r.size() + 1) * (h.size() + 1), -1);
  std::function<int(std::size_t, std::size_t)> cost = [&](std::size_t i, std::size_t j) -> int {
    int &m = memo[i * (h.size() + 1) + j];
    if (m >= 0)
      return m;
    if (i == 0 || j == 0)
      return m = static_cast<int>(i + j);
    return m = std::min({cost(i - 1, j - 1) + (r[i - 1] == h[j - 1] ? 0 : 1), cost(i - 1, j) + 1, cost(i, j - 1) + 1});
  };
  qea::EditCounts out;
  std::size_t i = r.size(), j = h.size();
  while (i > 0 || j > 0) {
    const int here = cost(i, j);
    if (i > 0 && j > 0 && r[i - 1] == h[j - 1] && cost(i - 1, j - 1) == here) {
      --i, --j;
    } else if (i > 0 && j > 0 && cost(i - 1, j - 1) + 1 == here) {
      ++out.substitutions;
      --i, --j;
    } else if (i > 0 && cost(i - 1, j) + 1 == here) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

// ---- decoder ----

// Single-state words 0..V-1 and a single-state silence with id V.
inline qea::Lexicon tiny_lexicon(int V) {
  qea::Lexicon lex;
  lex.phones = {{"p", qea::PhoneClass::Vowel}};
  for (int w = 0; w <= V; ++w) {
    qea::LexEntry e;
    e.id = w;
    e.surface = w == V ? "<sil>" : std::string(1, static_cast<char>('a' + w));
    e.phones = {w == V ? qea::Lexicon::kSilencePhone : 0};
    e.n_states = 1;
    e.first_state = w;
    lex.entries.push_back(e);
  }
  lex.silence = V;
  lex.state_means = Matrix(static_cast<std::size_t>(V + 1), 1);
  return lex;
}

struct Path {
  TokenSeq words;
  double score = -std::numeric_limits<double>::infinity();
};

// Every segmentation of T frames into tokens (words may repeat, silences
// never touch each other), scored from scratch. Returns the best score per
// distinct word sequence, ranked like the decoder ranks its n-best.
inline std::vector<Path> enumerate(const Matrix &loglik, const qea::DecodingGraph &g) {
  const int V = static_cast<int>(g.num_words());
  const int sil = V;
  const bool opt_sil = g.config().optional_silence;
  const int T = static_cast<int>(loglik.rows);
  std::map<TokenSeq, double> best;
  std::vector<int> labels; // token per segment
  std::vector<int> lens;

  const auto score_of = [&]() {
    double s = 0.0;
    int t = 0;
    int ctx = -1;
    TokenSeq words;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      for (int f = 0; f < lens[k]; ++f, ++t)
        s += loglik(static_cast<std::size_t>(t), static_cast<std::size_t>(labels[k]));
      if (labels[k] == sil) {
        s += g.config().silence_penalty;
      } else {
        s += g.config().lm_weight * g.lm_logprob(ctx, labels[k]);
        ctx = labels[k];
        words.push_back(labels[k]);
      }
    }
    s += g.config().lm_weight * g.lm_logprob(ctx, -1);
    auto [it, inserted] = best.try_emplace(words, s);
    if (!inserted)
      it->second = std::max(it->second, s);
  };

  std::function<void(int)> rec = [&](int used) {
    if (used == T) {
      score_of();
      return;
    }
    for (int tok = 0; tok <= (opt_sil ? sil : V - 1); ++tok) {
      if (tok == sil && !labels.empty() && labels.back() == sil)
        continue;
      for (int len = 1; used + len <= T; ++len) {
        labels.push_back(tok);
        lens.push_back(len);
        rec(used + len);
        labels.pop_back();
        lens.pop_back();
      }
    }
  };
  rec(0);

  std::vector<Path> out;
  for (const auto &[w, s] : best)
    out.push_back({w, s});
  std::sort(out.begin(), out.end(), [](const Path &a, const Path &b) {
    if (a.score != b.score)
      return a.score > b.score;
    if (a.words.size() != b.words.size())
      return a.words.size() < b.words.size();
    return a.words < b.words;
  });
  return out;
}

// ---- gradients ----

// Central differences of the mean cross-entropy with respect to every flat parameter.
inline std::vector<double> fd_gradient(const qea::AcousticModel &model, const Matrix &frames, const Matrix &targets,
                                       double step) {
  const auto loss = [&](const qea::AcousticModel &m) {
    const Matrix post = qea::forward(m, frames);
    double l = 0.0;
    for (std::size_t t = 0; t < post.rows; ++t)
      for (std::size_t i = 0; i < post.cols; ++i)
        if (targets(t, i) != 0.0)
          l -= targets(t, i) * std::log(post(t, i));
    return l / static_cast<double>(post.rows);
  };
  std::vector<double> flat = qea::flatten(model);
  std::vector<double> out(flat.size());
  qea::AcousticModel m = model;
  for (std::size_t p = 0; p < flat.size(); ++p) {
    const double keep = flat[p];
    flat[p] = keep + step;
    qea::unflatten(m, flat);
    const double up = loss(m);
    flat[p] = keep - step;
    qea::unflatten(m, flat);
    const double down = loss(m);
    flat[p] = keep;
    out[p] = (up - down) / (2.0 * step);
  }
  return out;
}

inline Matrix random_stochastic(std::mt19937_64 &rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      s += (m(r, c) = u(rng));
    for (std::size_t c = 0; c < cols; ++c)
      m(r, c) /= s;
  }
  return m;
}

inline Matrix random_matrix(std::mt19937_64 &rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (auto &v : m.data)
    v = n(rng);
  return m;
}

} // namespace oracle
