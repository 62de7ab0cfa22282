#pragma once

#include "qeadapt/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qea {

enum class PhoneClass { Fricative = 0, Liquid, Nasal, Stop, Vowel };
enum class LexClass { Noun = 0, Verb, Function, Number, Other };

inline constexpr int kNumPhoneClasses = 5;
inline constexpr int kNumLexClasses = 5;

const char *to_string(PhoneClass c);
const char *to_string(LexClass c);
LexClass lex_class_from_string(const std::string &s);

struct Phone {
  std::string symbol;
  PhoneClass cls = PhoneClass::Vowel;
};

struct LexEntry {
  TokenId id = 0;
  std::string surface;
  std::vector<int> phones; // indices into Lexicon::phones; silence uses kSilencePhone
  LexClass cls = LexClass::Other;
  int n_states = 1;
  int first_state = 0; // offset of this token's states in the acoustic output layer
};

/// Word inventory plus the acoustic "world" the synthetic corpora live in:
/// every token state owns a mean vector in feature space.
struct Lexicon {
  static constexpr int kSilencePhone = -1;

  std::vector<Phone> phones;
  std::vector<LexEntry> entries; // word ids 0..V-1, silence at id V
  TokenId silence = 0;
  Matrix state_means; // total_states() x feature_dim

  std::size_t vocab_size() const { return entries.size() - 1; } // words only
  int total_states() const { return static_cast<int>(state_means.rows); }
  std::size_t feature_dim() const { return state_means.cols; }
  const LexEntry &at(TokenId id) const;
  bool is_silence(TokenId id) const { return id == silence; }
  std::optional<TokenId> find(const std::string &surface) const;
  /// State index -> owning token id.
  std::vector<TokenId> state_owner() const;
};

struct LexiconParams {
  std::uint64_t seed = 1;
  int vocab_size = 30;
  int phone_inventory = 12;
  int feature_dim = 8;
  double phone_spread = 1.6;  // stddev of phone mean vectors
  double state_jitter = 0.35; // per token-state perturbation of the phone-derived means
};

Lexicon build_lexicon(std::uint64_t seed, int vocab_size, int phone_inventory_size);
Lexicon build_lexicon(const LexiconParams &params);

struct SpeakerProfile {
  int id = 0;
  std::vector<double> offset;
  std::vector<double> scale;
};

struct NoiseCondition {
  int id = 0;
  std::vector<double> shift;
  double inflation = 1.0;
};

struct Utterance {
  std::string id;
  int speaker = 0;
  int condition = 0;
  Matrix frames;      // T x D
  TokenSeq reference; // may contain silence tokens where pauses were synthesized
  std::size_t num_frames() const { return frames.rows; }
};

enum class Split { Train, Dev, Test };
const char *to_string(Split s);

struct Corpus {
  std::string name;
  Split split = Split::Train;
  std::vector<Utterance> utterances;

  std::vector<int> speakers() const; // sorted, unique
  const Utterance *find(const std::string &id) const;
  std::size_t total_frames() const;
};

Utterance synthesize_utterance(const Lexicon &lex, const TokenSeq &reference, const SpeakerProfile &speaker,
                               const NoiseCondition &condition, int frames_per_state, double emission_stddev,
                               std::uint64_t seed, std::string id = "utt");

/// Second-order word process used to draw references and LM text. A bigram
/// backbone with sparse successor lists, mixed with a sparse trigram component.
class SentenceGenerator {
public:
  SentenceGenerator(const Lexicon &lex, std::uint64_t seed, double trigram_weight = 0.5, int fanout = 4);
  TokenSeq sample(std::uint64_t seed, int min_len, int max_len) const;
  std::vector<TokenSeq> sample_text(std::uint64_t seed, std::size_t n_sentences, int min_len, int max_len) const;

private:
  double prob(TokenId prev2, TokenId prev1, TokenId w) const;
  std::size_t vocab_;
  double trigram_weight_;
  std::vector<double> bigram_;  // (V+1) x V, row V = sentence start
  std::vector<double> trigram_; // (V+1)*(V+1) x V sparse-ish dense table
};

struct CorpusSpec {
  std::uint64_t seed = 1;
  LexiconParams lexicon;
  int speakers_train = 8, speakers_dev = 4, speakers_test = 4;
  int utts_train = 480, utts_dev = 160, utts_test = 160;
  int min_len = 3, max_len = 9;
  double mismatch = 0.7;
  int frames_per_state = 3;
  double emission_stddev = 0.5;
  double pause_prob = 0.15;
  int n_conditions = 4;
  double trigram_weight = 0.5;
  std::uint64_t generator_seed = 0; // 0: derive from seed. Out-of-domain text uses a different value.
};

struct CorpusSet {
  Lexicon lexicon;
  Corpus train, dev, test;
  std::vector<SpeakerProfile> speakers;
  std::vector<NoiseCondition> conditions;
};

CorpusSet gen_corpus(const CorpusSpec &spec);

/// Text-only sample from the corpus generator (for LM training). `domain`
/// 0 is in-domain; other values use a seed-shifted generator.
std::vector<TokenSeq> gen_text(const CorpusSpec &spec, const Lexicon &lex, std::size_t n_sentences, int domain);

struct CmvnWarning {
  int speaker = 0;
  std::size_t dim = 0;
};

/// Per-speaker mean/variance normalisation. Variance uses the population
/// estimator (divide by N) so the transformed data has variance exactly 1.
Corpus cmvn_per_speaker(const Corpus &corpus, std::vector<CmvnWarning> *warnings = nullptr);

/// Per-frame state path the synthesizer used for `reference` (every state
/// lasts frames_per_state frames).
std::vector<int> generator_states(const Lexicon &lex, const TokenSeq &reference, int frames_per_state);

TokenSeq strip_silence(const Lexicon &lex, const TokenSeq &tokens);
std::string join_surfaces(const Lexicon &lex, const TokenSeq &tokens);
TokenSeq parse_surfaces(const Lexicon &lex, const std::string &text);

// On-disk format: manifest.tsv + FRM1 frame files.
void write_frames(const std::filesystem::path &path, const Matrix &frames);
Matrix read_frames(const std::filesystem::path &path);
void write_corpus(const std::filesystem::path &dir, const Corpus &corpus, const Lexicon &lex);
Corpus read_corpus(const std::filesystem::path &dir, const Lexicon &lex);
void write_lexicon(const std::filesystem::path &dir, const Lexicon &lex);
Lexicon read_lexicon(const std::filesystem::path &dir);

} // namespace qea
