#pragma once

#include "qeadapt/common.hpp"
#include "qeadapt/corpus.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace qea {

enum class EditType { Match, Substitution, Deletion, Insertion };

struct EditOp {
  EditType type;
  int ref = -1; // index into reference, -1 for insertions
  int hyp = -1; // index into hypothesis, -1 for deletions
};

struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int errors() const { return substitutions + deletions + insertions; }
  bool operator==(const EditCounts &) const = default;
};

struct EditAlignment {
  std::vector<EditOp> ops;
  EditCounts counts;
};

/// Unit-cost Levenshtein alignment. Backtrace prefers match, then
/// substitution, then deletion, then insertion.
EditAlignment edit_align(const TokenSeq &reference, const TokenSeq &hypothesis);

/// (S + D + I) / |ref|. With clamp, the result is limited to [0, 1].
double sentence_wer(const TokenSeq &reference, const TokenSeq &hypothesis, bool clamp = false);

struct UtteranceScore {
  std::string id;
  EditCounts counts;
  int ref_len = 0;
  double wer() const { return static_cast<double>(counts.errors()) / ref_len; }
  double clamped_wer() const;
};

struct WerReport {
  std::vector<UtteranceScore> utterances;
  double corpus_wer() const; // sum of errors / sum of reference lengths
};

UtteranceScore score_utterance(const std::string &id, const TokenSeq &reference, const TokenSeq &hypothesis);
double corpus_wer(const WerReport &report);

/// TSV `utt-id S D I ref-len wer` plus a closing `TOTAL <percent>` line.
void write_wer_report(std::ostream &out, const WerReport &report);
std::string format_percent(double fraction);

struct SelectionSpec {
  enum class Basis { Oracle, Predicted };
  enum class Mode { Threshold, TopK };
  Basis basis = Basis::Oracle;
  Mode mode = Mode::Threshold;
  double threshold = 0.10;
  int top_k = 1;
};

struct Selection {
  std::vector<std::string> ids; // in corpus order
  bool truncated = false;       // top-K asked for more utterances than available
};

Selection select_utterances(const Corpus &corpus, const std::map<std::string, double> &wer_map,
                            const SelectionSpec &spec);
Corpus subset(const Corpus &corpus, const std::vector<std::string> &ids);

} // namespace qea
