#include "qeadapt/scoring.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>

namespace qea {

EditAlignment edit_align(const TokenSeq &reference, const TokenSeq &hypothesis) {
  const std::size_t n = reference.size(), m = hypothesis.size();
  std::vector<int> dp((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> int & { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i)
    at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j)
    at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }

  EditAlignment out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      out.ops.push_back({EditType::Match, static_cast<int>(i - 1), static_cast<int>(j - 1)});
      --i, --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      out.ops.push_back({EditType::Substitution, static_cast<int>(i - 1), static_cast<int>(j - 1)});
      ++out.counts.substitutions;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      out.ops.push_back({EditType::Deletion, static_cast<int>(i - 1), -1});
      ++out.counts.deletions;
      --i;
    } else {
      out.ops.push_back({EditType::Insertion, -1, static_cast<int>(j - 1)});
      ++out.counts.insertions;
      --j;
    }
  }
  std::reverse(out.ops.begin(), out.ops.end());
  return out;
}

double sentence_wer(const TokenSeq &reference, const TokenSeq &hypothesis, bool clamp) {
  require(!reference.empty(), "invalid_argument", "WER needs a non-empty reference");
  const double w = static_cast<double>(edit_align(reference, hypothesis).counts.errors()) /
                   static_cast<double>(reference.size());
  return clamp ? std::min(w, 1.0) : w;
}

double UtteranceScore::clamped_wer() const { return std::min(wer(), 1.0); }

UtteranceScore score_utterance(const std::string &id, const TokenSeq &reference, const TokenSeq &hypothesis) {
  require(!reference.empty(), "invalid_argument", "WER needs a non-empty reference (" + id + ")");
  return {id, edit_align(reference, hypothesis).counts, static_cast<int>(reference.size())};
}

double WerReport::corpus_wer() const {
  long errors = 0, words = 0;
  for (const auto &u : utterances) {
    errors += u.counts.errors();
    words += u.ref_len;
  }
  return words ? static_cast<double>(errors) / static_cast<double>(words) : 0.0;
}

double corpus_wer(const WerReport &report) { return report.corpus_wer(); }

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

void write_wer_report(std::ostream &out, const WerReport &report) {
  for (const auto &u : report.utterances) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", u.wer());
    out << u.id << '\t' << u.counts.substitutions << '\t' << u.counts.deletions << '\t' << u.counts.insertions
        << '\t' << u.ref_len << '\t' << buf << '\n';
  }
  out << "TOTAL " << format_percent(report.corpus_wer()) << '\n';
}

Selection select_utterances(const Corpus &corpus, const std::map<std::string, double> &wer_map,
                            const SelectionSpec &spec) {
  const auto wer_of = [&](const std::string &id) {
    auto it = wer_map.find(id);
    require(it != wer_map.end(), "invalid_argument", "no WER for utterance " + id);
    return it->second;
  };
  Selection sel;
  if (spec.mode == SelectionSpec::Mode::Threshold) {
    require(spec.threshold >= 0.0 && spec.threshold <= 1.0, "invalid_argument", "threshold outside [0,1]");
    for (const auto &u : corpus.utterances)
      if (wer_of(u.id) <= spec.threshold)
        sel.ids.push_back(u.id);
    return sel;
  }
  require(spec.top_k >= 1, "invalid_argument", "top-K needs K >= 1");
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto &u : corpus.utterances)
    ranked.emplace_back(wer_of(u.id), u.id);
  std::sort(ranked.begin(), ranked.end());
  const auto K = static_cast<std::size_t>(spec.top_k);
  sel.truncated = K > ranked.size();
  std::set<std::string> keep;
  for (std::size_t i = 0; i < std::min(K, ranked.size()); ++i)
    keep.insert(ranked[i].second);
  for (const auto &u : corpus.utterances)
    if (keep.count(u.id))
      sel.ids.push_back(u.id);
  return sel;
}

Corpus subset(const Corpus &corpus, const std::vector<std::string> &ids) {
  const std::set<std::string> keep(ids.begin(), ids.end());
  Corpus out;
  out.name = corpus.name;
  out.split = corpus.split;
  for (const auto &u : corpus.utterances)
    if (keep.count(u.id))
      out.utterances.push_back(u);
  return out;
}

} // namespace qea
