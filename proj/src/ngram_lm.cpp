#include "qeadapt/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace qea {

namespace {

constexpr double kLn10 = 2.302585092994045684;
constexpr double kHistoryOnly = -99.0; // log10 placeholder for grams that only act as histories

std::vector<TokenId> unpack(std::uint64_t key, int k) {
  std::vector<TokenId> out(static_cast<std::size_t>(k));
  for (int i = k - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<TokenId>((key & 0x1fffff) - 1);
    key >>= 21;
  }
  return out;
}

} // namespace

std::uint64_t NgramLm::key(std::span<const TokenId> gram) {
  std::uint64_t k = 0;
  for (TokenId t : gram)
    k = (k << 21) | static_cast<std::uint64_t>(t + 1);
  return k;
}

TokenId NgramLm::map_token(TokenId t) const {
  if (t == bos() || t == eos())
    return t;
  if (t < 0 || static_cast<std::size_t>(t) >= vocab_)
    return unk();
  return t;
}

std::vector<TokenId> NgramLm::outcomes() const {
  std::vector<TokenId> out;
  for (std::size_t w = 0; w < vocab_; ++w)
    out.push_back(static_cast<TokenId>(w));
  out.push_back(eos());
  if (uniform_outcomes_ == 0)
    out.push_back(unk());
  return out;
}

double NgramLm::logprob_rec(TokenId w, std::span<const TokenId> hist) const {
  const int k = static_cast<int>(hist.size()) + 1;
  std::vector<TokenId> gram(hist.begin(), hist.end());
  gram.push_back(w);
  const auto &tab = logp_[static_cast<std::size_t>(k - 1)];
  if (auto it = tab.find(key(gram)); it != tab.end())
    return it->second;
  if (k == 1)
    return -std::numeric_limits<double>::infinity();
  double g = 0.0;
  const auto &bo = backoff_[static_cast<std::size_t>(k - 2)];
  if (auto it = bo.find(key(hist)); it != bo.end())
    g = it->second;
  return g + logprob_rec(w, hist.subspan(1));
}

double NgramLm::logprob_word(TokenId w, std::span<const TokenId> history, int max_order) const {
  if (uniform_outcomes_ > 0)
    return -std::log(static_cast<double>(uniform_outcomes_));
  int n = max_order > 0 ? std::min(max_order, order_) : order_;
  std::vector<TokenId> h;
  const std::size_t take = std::min(history.size(), static_cast<std::size_t>(n - 1));
  for (std::size_t i = history.size() - take; i < history.size(); ++i)
    h.push_back(map_token(history[i]));
  // Shorter-than-order histories are left-padded with the begin marker.
  while (h.size() < static_cast<std::size_t>(n - 1))
    h.insert(h.begin(), bos());
  return logprob_rec(map_token(w), h);
}

std::vector<TokenId> NgramLm::continuations(std::span<const TokenId> history) const {
  if (uniform_outcomes_ > 0) {
    std::vector<TokenId> out;
    for (std::size_t w = 0; w < vocab_; ++w)
      out.push_back(static_cast<TokenId>(w));
    out.push_back(eos());
    return out;
  }
  std::vector<TokenId> h;
  const std::size_t take = std::min(history.size(), static_cast<std::size_t>(order_ - 1));
  for (std::size_t i = history.size() - take; i < history.size(); ++i)
    h.push_back(map_token(history[i]));
  while (h.size() < static_cast<std::size_t>(order_ - 1))
    h.insert(h.begin(), bos());
  for (std::size_t drop = 0; drop <= h.size(); ++drop) {
    std::span<const TokenId> hs(h.data() + drop, h.size() - drop);
    const auto &succ = successors_[hs.size()];
    if (auto it = succ.find(key(hs)); it != succ.end() && !it->second.empty())
      return it->second;
  }
  return {};
}

void NgramLm::index_successors() {
  successors_.assign(static_cast<std::size_t>(order_), {});
  for (int k = 1; k <= order_; ++k) {
    for (const auto &[kk, lp] : logp_[static_cast<std::size_t>(k - 1)]) {
      const auto g = unpack(kk, k);
      const TokenId w = g.back();
      if (w == unk() || w == bos())
        continue;
      std::span<const TokenId> h(g.data(), g.size() - 1);
      successors_[static_cast<std::size_t>(k - 1)][key(h)].push_back(w);
    }
  }
  for (auto &m : successors_)
    for (auto &[kk, v] : m)
      std::sort(v.begin(), v.end());
}

NgramLm NgramLm::uniform(std::size_t n_outcomes) {
  require(n_outcomes >= 2, "invalid_argument", "uniform LM needs at least 2 outcomes");
  NgramLm lm;
  lm.order_ = 1;
  lm.vocab_ = n_outcomes - 1;
  lm.uniform_outcomes_ = n_outcomes;
  return lm;
}

NgramLm train_lm(const std::vector<TokenSeq> &transcripts, int order, double discount, std::size_t vocab_size) {
  require(!transcripts.empty(), "invalid_argument", "empty transcript list");
  require(order >= 1 && order <= 3, "invalid_argument", "order must be 1, 2 or 3");
  require(discount > 0.0 && discount < 1.0, "invalid_argument", "discount must lie in (0,1)");
  require(vocab_size >= 1, "invalid_argument", "vocab_size must be >= 1");

  NgramLm lm;
  lm.order_ = order;
  lm.discount_ = discount;
  lm.vocab_ = vocab_size;
  const double d = discount;
  const auto n = static_cast<std::size_t>(order);

  // counts[k-1]: order-k gram -> count (raw at top order, continuation below)
  std::vector<std::map<std::vector<TokenId>, double>> counts(n);
  for (const auto &sent : transcripts) {
    std::vector<TokenId> s(n - 1, lm.bos());
    for (TokenId t : sent)
      s.push_back(lm.map_token(t));
    s.push_back(lm.eos());
    for (std::size_t i = n - 1; i < s.size(); ++i)
      counts[n - 1][std::vector<TokenId>(s.begin() + static_cast<std::ptrdiff_t>(i + 1 - n),
                                         s.begin() + static_cast<std::ptrdiff_t>(i + 1))] += 1.0;
  }
  for (std::size_t k = n - 1; k >= 1; --k) {
    // continuation count of g = number of distinct left extensions u with c(u g) > 0
    for (const auto &[g, c] : counts[k])
      counts[k - 1][std::vector<TokenId>(g.begin() + 1, g.end())] += 1.0;
  }

  const std::vector<TokenId> outcomes = lm.outcomes();
  const double n_out = static_cast<double>(outcomes.size());

  // Per-history totals and type counts for each order.
  std::vector<std::map<std::vector<TokenId>, std::pair<double, double>>> hist(n);
  for (std::size_t k = 0; k < n; ++k)
    for (const auto &[g, c] : counts[k]) {
      auto &hs = hist[k][std::vector<TokenId>(g.begin(), g.end() - 1)];
      hs.first += c;
      hs.second += 1.0;
    }

  // Interpolated probability, evaluated straight from counts.
  std::function<double(TokenId, const std::vector<TokenId> &)> prob = [&](TokenId w,
                                                                           const std::vector<TokenId> &h) -> double {
    const std::size_t k = h.size();
    double lower;
    if (k == 0) {
      lower = 1.0 / n_out;
    } else {
      lower = prob(w, std::vector<TokenId>(h.begin() + 1, h.end()));
    }
    auto hit = hist[k].find(h);
    if (hit == hist[k].end())
      return lower;
    const auto [total, types] = hit->second;
    std::vector<TokenId> g = h;
    g.push_back(w);
    double c = 0.0;
    if (auto it = counts[k].find(g); it != counts[k].end())
      c = it->second;
    return std::max(c - d, 0.0) / total + d * types / total * lower;
  };

  lm.logp_.assign(n, {});
  lm.backoff_.assign(n, {});
  for (TokenId w : outcomes)
    lm.logp_[0][NgramLm::key(std::span<const TokenId>(&w, 1))] = std::log(prob(w, {}));
  for (std::size_t k = 1; k < n; ++k)
    for (const auto &[g, c] : counts[k]) {
      std::vector<TokenId> h(g.begin(), g.end() - 1);
      lm.logp_[k][NgramLm::key(g)] = std::log(prob(g.back(), h));
    }
  for (std::size_t k = 1; k < n; ++k)
    for (const auto &[h, st] : hist[k]) {
      // weight of the lower order for history h at order k+1 is d * types / total
      lm.backoff_[k - 1][NgramLm::key(h)] = std::log(d * st.second / st.first);
    }
  lm.index_successors();
  return lm;
}

void NgramLm::save(std::ostream &out) const {
  require(uniform_outcomes_ == 0, "invalid_argument", "the uniform prior has no table to dump");
  const auto name = [&](TokenId t) -> std::string {
    if (t == bos())
      return "<s>";
    if (t == eos())
      return "</s>";
    if (t == unk())
      return "<unk>";
    return std::to_string(t);
  };
  out << "NGRAM " << order_ << ' ' << std::setprecision(12) << discount_ << '\n';
  for (int k = 1; k <= order_; ++k) {
    const auto &lp = logp_[static_cast<std::size_t>(k - 1)];
    const Table empty;
    const auto &bo = k < order_ ? backoff_[static_cast<std::size_t>(k - 1)] : empty;
    std::map<std::vector<TokenId>, std::pair<double, double>> rows;
    for (const auto &[kk, v] : lp)
      rows[unpack(kk, k)] = {v / kLn10, 0.0};
    for (const auto &[kk, v] : bo) {
      auto [it, inserted] = rows.try_emplace(unpack(kk, k), kHistoryOnly, 0.0);
      it->second.second = v / kLn10;
    }
    for (const auto &[g, v] : rows) {
      out << k;
      for (TokenId t : g)
        out << ' ' << name(t);
      out << ' ' << std::setprecision(12) << v.first << ' ' << std::setprecision(12) << v.second << '\n';
    }
  }
}

NgramLm NgramLm::load(std::istream &in) {
  std::string tag;
  NgramLm lm;
  in >> tag >> lm.order_ >> lm.discount_;
  require(in.good() && tag == "NGRAM", "format", "missing NGRAM header");
  require(lm.order_ >= 1 && lm.order_ <= 3, "format", "unsupported LM order");
  struct Row {
    int k;
    std::vector<std::string> toks;
    double lp, bo;
  };
  std::vector<Row> rows;
  std::string line;
  std::getline(in, line);
  TokenId max_word = -1;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::istringstream ls(line);
    Row r;
    ls >> r.k;
    require(r.k >= 1 && r.k <= lm.order_, "format", "bad n-gram order in line: " + line);
    r.toks.resize(static_cast<std::size_t>(r.k));
    for (auto &t : r.toks) {
      ls >> t;
      if (t != "<s>" && t != "</s>" && t != "<unk>")
        max_word = std::max(max_word, static_cast<TokenId>(std::stoi(t)));
    }
    ls >> r.lp >> r.bo;
    require(!ls.fail(), "format", "malformed n-gram line: " + line);
    rows.push_back(std::move(r));
  }
  lm.vocab_ = static_cast<std::size_t>(max_word + 1);
  lm.logp_.assign(static_cast<std::size_t>(lm.order_), {});
  lm.backoff_.assign(static_cast<std::size_t>(lm.order_), {});
  for (const auto &r : rows) {
    std::vector<TokenId> g;
    for (const auto &t : r.toks)
      g.push_back(t == "<s>" ? lm.bos() : t == "</s>" ? lm.eos() : t == "<unk>" ? lm.unk() : std::stoi(t));
    const auto kk = key(g);
    if (r.lp != kHistoryOnly)
      lm.logp_[static_cast<std::size_t>(r.k - 1)][kk] = r.lp * kLn10;
    if (r.k < lm.order_ && r.bo != 0.0)
      lm.backoff_[static_cast<std::size_t>(r.k - 1)][kk] = r.bo * kLn10;
  }
  lm.index_successors();
  return lm;
}

std::vector<double> token_logprobs(const NgramLm &lm, const TokenSeq &tokens, int max_order) {
  std::vector<double> out;
  out.reserve(tokens.size());
  TokenSeq hist;
  for (TokenId t : tokens) {
    out.push_back(lm.logprob_word(t, hist, max_order));
    hist.push_back(t);
  }
  return out;
}

double logprob(const NgramLm &lm, const TokenSeq &tokens) {
  double lp = 0.0;
  for (double v : token_logprobs(lm, tokens))
    lp += v;
  return lp + lm.logprob_word(lm.eos(), tokens);
}

double perplexity(const NgramLm &lm, const TokenSeq &tokens) {
  return std::exp(-logprob(lm, tokens) / static_cast<double>(tokens.size() + 1));
}

TokenSeq sample_sentence(const NgramLm &lm, std::uint64_t seed, int max_len) {
  std::mt19937_64 rng(seed);
  TokenSeq out;
  while (static_cast<int>(out.size()) < max_len) {
    const auto cands = lm.continuations(out);
    if (cands.empty())
      break;
    std::vector<double> w;
    double total = 0.0;
    for (TokenId c : cands) {
      w.push_back(std::exp(lm.logprob_word(c, out)));
      total += w.back();
    }
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
    double acc = 0.0;
    TokenId pick = cands.back();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      acc += w[i];
      if (u < acc) {
        pick = cands[i];
        break;
      }
    }
    if (pick == lm.eos())
      break;
    out.push_back(pick);
  }
  return out;
}

} // namespace qea
