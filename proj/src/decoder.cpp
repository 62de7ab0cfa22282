#include "qeadapt/decoder.hpp"
#include "qeadapt/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <unordered_map>

namespace qea {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

DecodingGraph::DecodingGraph(const Lexicon &lex, const NgramLm &lm, const DecoderConfig &config)
    : lex_(&lex), config_(config) {
  const std::size_t V = lex.vocab_size();
  require(lm.vocab_size() == V || lm.vocab_size() == 0, "invalid_argument",
          "LM vocabulary (" + std::to_string(lm.vocab_size()) + ") does not match lexicon (" + std::to_string(V) +
              ")");
  for (std::size_t w = 0; w < V; ++w) {
    const auto &e = lex.at(static_cast<TokenId>(w));
    word_first_.push_back(static_cast<int>(states_.size()));
    for (int k = 0; k < e.n_states; ++k)
      states_.push_back({e.id, k, e.first_state + k, -1, k == 0, k == e.n_states - 1});
  }
  if (config.optional_silence) {
    const auto &sil = lex.at(lex.silence);
    for (int c = -1; c < static_cast<int>(V); ++c) {
      sil_first_.push_back(static_cast<int>(states_.size()));
      for (int k = 0; k < sil.n_states; ++k)
        states_.push_back({sil.id, k, sil.first_state + k, c, k == 0, k == sil.n_states - 1});
    }
  }
  lm_.assign((V + 1) * (V + 1), 0.0);
  for (int c = -1; c < static_cast<int>(V); ++c) {
    TokenSeq hist;
    if (c >= 0)
      hist.push_back(c);
    for (std::size_t w = 0; w <= V; ++w) {
      const TokenId tok = w == V ? lm.eos() : static_cast<TokenId>(w);
      lm_[static_cast<std::size_t>(c + 1) * (V + 1) + w] = lm.logprob_word(tok, hist, 2);
    }
  }
}

double DecodingGraph::lm_logprob(int context, int w) const {
  const std::size_t V = lex_->vocab_size();
  const std::size_t col = w < 0 ? V : static_cast<std::size_t>(w);
  return lm_[static_cast<std::size_t>(context + 1) * (V + 1) + col];
}

double DecodingGraph::lm_arc(int context, int w) const { return config_.lm_weight * lm_logprob(context, w); }

int DecodingGraph::min_frames() const {
  int m = std::numeric_limits<int>::max();
  for (std::size_t w = 0; w < lex_->vocab_size(); ++w)
    m = std::min(m, lex_->at(static_cast<TokenId>(w)).n_states);
  if (config_.optional_silence)
    m = std::min(m, lex_->at(lex_->silence).n_states);
  return m;
}

TokenSeq Alignment::tokens() const {
  TokenSeq out;
  for (const auto &s : spans)
    out.push_back(s.token);
  return out;
}

namespace {

// Word histories as an interned trie: equal sequences share one node id.
class HistoryPool {
public:
  HistoryPool() { nodes_.push_back({-1, -1, 0}); }

  int extend(int parent, TokenId w) {
    const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(parent)) << 32) |
                              static_cast<std::uint32_t>(w);
    auto [it, inserted] = index_.try_emplace(key, static_cast<int>(nodes_.size()));
    if (inserted)
      nodes_.push_back({parent, w, nodes_[static_cast<std::size_t>(parent)].length + 1});
    return it->second;
  }
  int length(int id) const { return nodes_[static_cast<std::size_t>(id)].length; }
  TokenSeq sequence(int id) const {
    TokenSeq out;
    for (int n = id; n > 0; n = nodes_[static_cast<std::size_t>(n)].parent)
      out.push_back(nodes_[static_cast<std::size_t>(n)].token);
    std::reverse(out.begin(), out.end());
    return out;
  }

private:
  struct Node {
    int parent;
    TokenId token;
    int length;
  };
  std::vector<Node> nodes_;
  std::unordered_map<std::uint64_t, int> index_;
};

struct Entry {
  double score;
  double lm;
  int hist;
  int prev_state; // -1 = start
  int prev_rank;
  bool entered; // a new token starts at this frame
};

class Search {
public:
  Search(const Matrix &loglik, const DecodingGraph &g, int n) : ll_(loglik), g_(g), n_(static_cast<std::size_t>(n)) {}

  // true when a is ranked ahead of b
  bool better(const Entry &a, const Entry &b) const {
    if (a.score != b.score)
      return a.score > b.score;
    if (a.hist == b.hist)
      return false;
    const int la = pool_.length(a.hist), lb = pool_.length(b.hist);
    if (la != lb)
      return la < lb;
    return pool_.sequence(a.hist) < pool_.sequence(b.hist);
  }

  // Keep the best entry per history (first one wins on equal score), then the top n.
  std::vector<Entry> reduce(std::vector<Entry> &cands) const {
    std::vector<Entry> uniq;
    std::unordered_map<int, std::size_t> where;
    for (const auto &c : cands) {
      auto [it, inserted] = where.try_emplace(c.hist, uniq.size());
      if (inserted)
        uniq.push_back(c);
      else if (c.score > uniq[it->second].score)
        uniq[it->second] = c;
    }
    const std::size_t keep = std::min(n_, uniq.size());
    std::partial_sort(uniq.begin(), uniq.begin() + static_cast<std::ptrdiff_t>(keep), uniq.end(),
                      [&](const Entry &a, const Entry &b) { return better(a, b); });
    uniq.resize(keep);
    return uniq;
  }

  NBestList run();

private:
  Alignment backtrace(int t, int s, int r, const Entry &e) const;

  const Matrix &ll_;
  const DecodingGraph &g_;
  std::size_t n_;
  HistoryPool pool_;
  std::vector<std::vector<std::vector<Entry>>> lattice_; // [t][state] -> ranked entries
};

NBestList Search::run() {
  const auto &states = g_.states();
  const std::size_t S = states.size();
  const std::size_t T = ll_.rows;
  const auto V = static_cast<int>(g_.num_words());
  const double sil_pen = g_.config().silence_penalty;
  const double beam = g_.config().beam;
  require(static_cast<int>(ll_.cols) == g_.num_pdfs(), "dimension", "log-likelihood columns do not match graph");
  require(static_cast<int>(T) >= g_.min_frames(), "too_short",
          "utterance has " + std::to_string(T) + " frames, shorter than the minimum path");

  lattice_.assign(T, std::vector<std::vector<Entry>>(S));
  std::vector<Entry> cands;
  for (std::size_t t = 0; t < T; ++t) {
    auto &cur = lattice_[t];
    const auto ll = ll_.row(t);

    // Exit lists per LM context at t-1: word-final of c merged with silence-final of c.
    std::vector<std::vector<Entry>> exits;
    std::vector<std::vector<int>> exit_state;
    if (t > 0) {
      const auto &prev = lattice_[t - 1];
      exits.resize(static_cast<std::size_t>(V + 1));
      for (int c = -1; c < V; ++c) {
        cands.clear();
        if (c >= 0) {
          const int wf = g_.word_first_state(c) + g_.lexicon().at(c).n_states - 1;
          for (std::size_t r = 0; r < prev[static_cast<std::size_t>(wf)].size(); ++r) {
            Entry e = prev[static_cast<std::size_t>(wf)][r];
            e.prev_state = wf;
            e.prev_rank = static_cast<int>(r);
            cands.push_back(e);
          }
        }
        if (g_.config().optional_silence) {
          const int sf = g_.silence_first_state(c) + g_.lexicon().at(g_.lexicon().silence).n_states - 1;
          for (std::size_t r = 0; r < prev[static_cast<std::size_t>(sf)].size(); ++r) {
            Entry e = prev[static_cast<std::size_t>(sf)][r];
            e.prev_state = sf;
            e.prev_rank = static_cast<int>(r);
            cands.push_back(e);
          }
        }
        exits[static_cast<std::size_t>(c + 1)] = reduce(cands);
      }
    }

    for (std::size_t s = 0; s < S; ++s) {
      const auto &st = states[s];
      cands.clear();
      const double em = ll[static_cast<std::size_t>(st.pdf)];
      if (t == 0) {
        if (st.first && st.token != g_.lexicon().silence) {
          const double lp = g_.lm_logprob(-1, st.token);
          cands.push_back({g_.lm_arc(-1, st.token) + em, lp, pool_.extend(0, st.token), -1, 0, true});
        } else if (st.first && st.context == -1) {
          cands.push_back({sil_pen + em, 0.0, 0, -1, 0, true});
        }
      } else {
        const auto &prev = lattice_[t - 1];
        if (!st.first) {
          // advance from the previous chain state (lower index) before the self-loop
          const auto &pv = prev[s - 1];
          for (std::size_t r = 0; r < pv.size(); ++r)
            cands.push_back({pv[r].score + em, pv[r].lm, pv[r].hist, static_cast<int>(s - 1), static_cast<int>(r),
                             false});
        }
        const auto &self = prev[s];
        const std::size_t self_begin = cands.size();
        for (std::size_t r = 0; r < self.size(); ++r)
          cands.push_back({self[r].score + em, self[r].lm, self[r].hist, static_cast<int>(s), static_cast<int>(r),
                           false});
        if (st.first && st.token != g_.lexicon().silence) {
          // word entry: top-n over all contexts of exit score + LM arc (k-way merge of sorted lists)
          const TokenId w = st.token;
          using Item = std::pair<std::size_t, std::size_t>; // (context slot, rank)
          auto key_of = [&](const Item &it) {
            const Entry &e = exits[it.first][it.second];
            Entry x = e;
            x.score = e.score + g_.lm_arc(static_cast<int>(it.first) - 1, w);
            return x;
          };
          auto worse = [&](const Item &a, const Item &b) {
            const Entry ea = key_of(a), eb = key_of(b);
            return better(eb, ea);
          };
          std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
          for (std::size_t c = 0; c < exits.size(); ++c)
            if (!exits[c].empty())
              heap.push({c, 0});
          std::vector<Entry> entered;
          while (!heap.empty() && entered.size() < n_) {
            const Item it = heap.top();
            heap.pop();
            const Entry &e = exits[it.first][it.second];
            const int ctx = static_cast<int>(it.first) - 1;
            entered.push_back({e.score + g_.lm_arc(ctx, w) + em, e.lm + g_.lm_logprob(ctx, w),
                               pool_.extend(e.hist, w), e.prev_state, e.prev_rank, true});
            if (it.second + 1 < exits[it.first].size())
              heap.push({it.first, it.second + 1});
          }
          // Candidates are consumed in predecessor-state order for tie-breaking.
          std::vector<Entry> merged;
          merged.reserve(cands.size() + entered.size());
          merged.insert(merged.end(), cands.begin(), cands.end());
          merged.insert(merged.end(), entered.begin(), entered.end());
          std::stable_sort(merged.begin(), merged.end(),
                           [](const Entry &a, const Entry &b) { return a.prev_state < b.prev_state; });
          cands.swap(merged);
        } else if (st.first && st.context >= 0) {
          const int wf = g_.word_first_state(st.context) + g_.lexicon().at(st.context).n_states - 1;
          const auto &pv = prev[static_cast<std::size_t>(wf)];
          std::vector<Entry> extra;
          for (std::size_t r = 0; r < pv.size(); ++r)
            extra.push_back({pv[r].score + sil_pen + em, pv[r].lm, pv[r].hist, wf, static_cast<int>(r), true});
          if (wf < static_cast<int>(s))
            cands.insert(cands.begin() + static_cast<std::ptrdiff_t>(self_begin), extra.begin(), extra.end());
          else
            cands.insert(cands.end(), extra.begin(), extra.end());
        }
      }
      cur[s] = reduce(cands);
    }

    if (std::isfinite(beam)) {
      double best = kNegInf;
      for (const auto &lst : cur)
        for (const auto &e : lst)
          best = std::max(best, e.score);
      for (auto &lst : cur)
        std::erase_if(lst, [&](const Entry &e) { return e.score < best - beam; });
    }
  }

  // Sentence end.
  std::vector<Entry> finals;
  const auto &last = lattice_[T - 1];
  for (std::size_t s = 0; s < S; ++s) {
    const auto &st = states[s];
    if (!st.last)
      continue;
    int ctx;
    if (st.token == g_.lexicon().silence)
      ctx = st.context;
    else
      ctx = st.token;
    for (std::size_t r = 0; r < last[s].size(); ++r) {
      const Entry &e = last[s][r];
      finals.push_back({e.score + g_.lm_arc(ctx, -1), e.lm + g_.lm_logprob(ctx, -1), e.hist, static_cast<int>(s),
                        static_cast<int>(r), false});
    }
  }
  require(!finals.empty(), "too_short", "no complete path through the decoding graph");
  const auto ranked = reduce(finals);

  NBestList out;
  out.truncated = ranked.size() < n_;
  for (const auto &e : ranked) {
    Alignment al = backtrace(static_cast<int>(T) - 1, e.prev_state, e.prev_rank, e);
    Hypothesis h;
    h.words = pool_.sequence(e.hist);
    h.score = e.score;
    h.lm = e.lm;
    h.acoustic = e.score - g_.config().lm_weight * e.lm;
    h.pause_before.assign(h.words.size() + 1, false);
    std::size_t nw = 0;
    for (const auto &sp : al.spans) {
      if (sp.token == g_.lexicon().silence)
        h.pause_before[nw] = true;
      else
        ++nw;
    }
    out.hyps.push_back(std::move(h));
    out.alignments.push_back(std::move(al));
  }
  return out;
}

Alignment Search::backtrace(int t, int s, int r, const Entry &) const {
  const auto &states = g_.states();
  Alignment al;
  al.states.assign(static_cast<std::size_t>(t + 1), 0);
  std::vector<std::pair<int, TokenId>> starts; // (frame, token), collected backwards
  while (t >= 0) {
    const Entry &e = lattice_[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)][static_cast<std::size_t>(r)];
    al.states[static_cast<std::size_t>(t)] = states[static_cast<std::size_t>(s)].pdf;
    if (e.entered)
      starts.emplace_back(t, states[static_cast<std::size_t>(s)].token);
    s = e.prev_state;
    r = e.prev_rank;
    --t;
  }
  std::reverse(starts.begin(), starts.end());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const int end = i + 1 < starts.size() ? starts[i + 1].first : static_cast<int>(al.states.size());
    al.spans.push_back({starts[i].second, starts[i].first, end});
  }
  return al;
}

} // namespace

NBestList nbest_loglik(const Matrix &loglik, const DecodingGraph &graph, int n) {
  require(n >= 1, "invalid_argument", "n-best size must be >= 1");
  Search search(loglik, graph, n);
  return search.run();
}

DecodeResult viterbi_loglik(const Matrix &loglik, const DecodingGraph &graph) {
  NBestList l = nbest_loglik(loglik, graph, 1);
  return {std::move(l.hyps.front()), std::move(l.alignments.front())};
}

NBestList nbest(const AcousticModel &model, const Priors &priors, const Utterance &utt, const DecodingGraph &graph,
                int n) {
  return nbest_loglik(scaled_loglik(forward(model, utt.frames), priors), graph, n);
}

DecodeResult viterbi(const AcousticModel &model, const Priors &priors, const Utterance &utt,
                     const DecodingGraph &graph) {
  return viterbi_loglik(scaled_loglik(forward(model, utt.frames), priors), graph);
}

Alignment forced_align_loglik(const Matrix &loglik, const Lexicon &lex, const TokenSeq &reference,
                              bool optional_silence) {
  require(!reference.empty(), "invalid_argument", "forced alignment needs a non-empty reference");
  struct Segment {
    TokenId token;
    bool optional;
  };
  std::vector<Segment> segs;
  const auto add_opt_sil = [&](bool ok) {
    if (optional_silence && ok)
      segs.push_back({lex.silence, true});
  };
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const TokenId tok = reference[i];
    lex.at(tok);
    const bool prev_is_sil = i > 0 && lex.is_silence(reference[i - 1]);
    if (!lex.is_silence(tok))
      add_opt_sil(!prev_is_sil);
    segs.push_back({tok, false});
  }
  if (!lex.is_silence(reference.back()))
    add_opt_sil(true);
  // Never two optional segments back to back; drop a leading optional before an explicit silence.
  struct ChainState {
    int seg, pos, pdf;
  };
  std::vector<ChainState> chain;
  std::vector<int> seg_first, seg_last;
  int mandatory = 0;
  for (std::size_t g = 0; g < segs.size(); ++g) {
    const auto &e = lex.at(segs[g].token);
    seg_first.push_back(static_cast<int>(chain.size()));
    for (int k = 0; k < e.n_states; ++k)
      chain.push_back({static_cast<int>(g), k, e.first_state + k});
    seg_last.push_back(static_cast<int>(chain.size()) - 1);
    if (!segs[g].optional)
      mandatory += e.n_states;
  }
  const std::size_t T = loglik.rows;
  require(static_cast<int>(T) >= mandatory, "too_short",
          "utterance has " + std::to_string(T) + " frames but the reference needs " + std::to_string(mandatory));
  require(static_cast<int>(loglik.cols) == lex.total_states(), "dimension",
          "log-likelihood columns do not match lexicon states");

  const std::size_t J = chain.size();
  std::vector<double> score(T * J, kNegInf);
  std::vector<int> back(T * J, -1);
  const auto sc = [&](std::size_t t, std::size_t j) -> double & { return score[t * J + j]; };
  // predecessors of chain state j (excluding the self-loop), ascending order
  std::vector<std::vector<int>> preds(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto &c = chain[j];
    if (c.pos > 0) {
      preds[j].push_back(static_cast<int>(j) - 1);
      continue;
    }
    const int g = c.seg;
    if (g >= 2 && segs[static_cast<std::size_t>(g - 1)].optional)
      preds[j].push_back(seg_last[static_cast<std::size_t>(g - 2)]);
    if (g >= 1)
      preds[j].push_back(seg_last[static_cast<std::size_t>(g - 1)]);
  }
  const auto can_start = [&](std::size_t j) {
    return chain[j].pos == 0 && (chain[j].seg == 0 || (chain[j].seg == 1 && segs[0].optional));
  };
  for (std::size_t j = 0; j < J; ++j)
    if (can_start(j))
      sc(0, j) = loglik(0, static_cast<std::size_t>(chain[j].pdf));
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t j = 0; j < J; ++j) {
      double best = kNegInf;
      int arg = -1;
      for (int p : preds[j]) {
        const double v = sc(t - 1, static_cast<std::size_t>(p));
        if (v > best) {
          best = v;
          arg = p;
        }
      }
      const double self = sc(t - 1, j);
      if (self > best) {
        best = self;
        arg = static_cast<int>(j);
      }
      if (arg >= 0 && best > kNegInf) {
        sc(t, j) = best + loglik(t, static_cast<std::size_t>(chain[j].pdf));
        back[t * J + j] = arg;
      }
    }
  int end = -1;
  double best = kNegInf;
  std::vector<int> enders;
  const auto G = static_cast<int>(segs.size());
  if (G >= 2 && segs.back().optional)
    enders.push_back(seg_last[static_cast<std::size_t>(G - 2)]);
  enders.push_back(seg_last.back());
  std::sort(enders.begin(), enders.end());
  for (int j : enders)
    if (sc(T - 1, static_cast<std::size_t>(j)) > best) {
      best = sc(T - 1, static_cast<std::size_t>(j));
      end = j;
    }
  require(end >= 0, "too_short", "no alignment path for the reference");

  std::vector<int> path(T);
  int j = end;
  for (std::size_t t = T; t-- > 0;) {
    path[t] = j;
    if (t > 0)
      j = back[t * J + static_cast<std::size_t>(j)];
  }
  Alignment al;
  for (std::size_t t = 0; t < T; ++t) {
    const auto &c = chain[static_cast<std::size_t>(path[t])];
    al.states.push_back(c.pdf);
    if (t == 0 || chain[static_cast<std::size_t>(path[t - 1])].seg != c.seg)
      al.spans.push_back({segs[static_cast<std::size_t>(c.seg)].token, static_cast<int>(t), static_cast<int>(t) + 1});
    else
      al.spans.back().end = static_cast<int>(t) + 1;
  }
  return al;
}

Alignment forced_align(const AcousticModel &model, const Priors &priors, const Utterance &utt,
                       const TokenSeq &reference, const Lexicon &lex, bool optional_silence) {
  return forced_align_loglik(scaled_loglik(forward(model, utt.frames), priors), lex, reference, optional_silence);
}

TokenSeq ConfusionNetwork::consensus() const {
  TokenSeq out;
  for (const auto &b : bins)
    if (!b.empty() && b.front().token >= 0)
      out.push_back(b.front().token);
  return out;
}

ConfusionNetwork build_cn(const NBestList &list, double temperature) {
  require(!list.hyps.empty(), "invalid_argument", "confusion network needs a non-empty n-best list");
  require(temperature > 0.0, "invalid_argument", "temperature must be positive");
  const auto &pivot = list.hyps.front().words;
  const std::size_t m = pivot.size();
  const std::size_t H = list.hyps.size();

  std::vector<double> w(H);
  const double top = list.hyps.front().score;
  double z = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    w[h] = std::exp((list.hyps[h].score - top) / temperature);
    z += w[h];
  }
  for (double &v : w)
    v /= z;

  // For each hypothesis: word per pivot position (or -1) and insertions per gap.
  std::vector<std::vector<TokenId>> at_pivot(H, std::vector<TokenId>(m, -1));
  std::vector<std::vector<std::vector<TokenId>>> gap_ins(H, std::vector<std::vector<TokenId>>(m + 1));
  std::vector<std::size_t> gap_slots(m + 1, 0);
  for (std::size_t h = 0; h < H; ++h) {
    const auto &hyp = list.hyps[h].words;
    std::size_t consumed = 0;
    for (const auto &op : edit_align(pivot, hyp).ops) {
      switch (op.type) {
      case EditType::Match:
      case EditType::Substitution:
        at_pivot[h][static_cast<std::size_t>(op.ref)] = hyp[static_cast<std::size_t>(op.hyp)];
        ++consumed;
        break;
      case EditType::Deletion:
        ++consumed;
        break;
      case EditType::Insertion:
        gap_ins[h][consumed].push_back(hyp[static_cast<std::size_t>(op.hyp)]);
        break;
      }
    }
    for (std::size_t g = 0; g <= m; ++g)
      gap_slots[g] = std::max(gap_slots[g], gap_ins[h][g].size());
  }

  ConfusionNetwork cn;
  const auto emit_bin = [&](auto token_of) {
    std::map<TokenId, double> mass;
    for (std::size_t h = 0; h < H; ++h)
      mass[token_of(h)] += w[h];
    std::vector<CnEntry> bin;
    for (const auto &[tok, p] : mass)
      bin.push_back({tok, p});
    std::stable_sort(bin.begin(), bin.end(), [](const CnEntry &a, const CnEntry &b) {
      if (a.posterior != b.posterior)
        return a.posterior > b.posterior;
      if ((a.token < 0) != (b.token < 0))
        return b.token < 0; // words before epsilon on ties
      return a.token < b.token;
    });
    cn.bins.push_back(std::move(bin));
  };
  for (std::size_t g = 0; g <= m; ++g) {
    for (std::size_t k = 0; k < gap_slots[g]; ++k)
      emit_bin([&](std::size_t h) { return k < gap_ins[h][g].size() ? gap_ins[h][g][k] : TokenId{-1}; });
    if (g < m)
      emit_bin([&](std::size_t h) { return at_pivot[h][g]; });
  }
  return cn;
}

void write_nbest(std::ostream &out, const std::string &utt_id, const NBestList &list, const Lexicon &lex) {
  for (std::size_t r = 0; r < list.hyps.size(); ++r) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", list.hyps[r].score);
    out << utt_id << ' ' << r + 1 << ' ' << buf;
    for (TokenId t : list.hyps[r].words)
      out << ' ' << lex.at(t).surface;
    out << '\n';
  }
}

void write_cn(std::ostream &out, const std::string &utt_id, const ConfusionNetwork &cn, const Lexicon &lex) {
  for (std::size_t b = 0; b < cn.bins.size(); ++b)
    for (const auto &e : cn.bins[b]) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.6f", e.posterior);
      out << utt_id << ' ' << b << ' ' << (e.token < 0 ? std::string("«eps»") : lex.at(e.token).surface) << ' '
          << buf << '\n';
    }
}

} // namespace qea
