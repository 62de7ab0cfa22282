#include "qeadapt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace qea {

namespace {

using Rng = std::mt19937_64;

double gauss(Rng &rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
int uniform_int(Rng &rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

const std::vector<std::vector<std::string>> kPhoneSymbols = {
    {"f", "s", "v", "z", "h", "th", "sh"}, // fricative
    {"l", "r", "w", "y"},                  // liquid
    {"m", "n", "ng"},                      // nasal
    {"p", "t", "k", "b", "d", "g"},        // stop
    {"a", "e", "i", "o", "u", "ai", "ou"}, // vowel
};

std::size_t sample_index(const double *weights, std::size_t n, double u) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    total += weights[i];
  double acc = 0.0;
  const double target = u * total;
  for (std::size_t i = 0; i < n; ++i) {
    acc += weights[i];
    if (target < acc)
      return i;
  }
  return n - 1;
}

} // namespace

const char *to_string(PhoneClass c) {
  switch (c) {
  case PhoneClass::Fricative: return "fricative";
  case PhoneClass::Liquid: return "liquid";
  case PhoneClass::Nasal: return "nasal";
  case PhoneClass::Stop: return "stop";
  case PhoneClass::Vowel: return "vowel";
  }
  return "?";
}

const char *to_string(LexClass c) {
  switch (c) {
  case LexClass::Noun: return "noun";
  case LexClass::Verb: return "verb";
  case LexClass::Function: return "function";
  case LexClass::Number: return "number";
  case LexClass::Other: return "other";
  }
  return "?";
}

LexClass lex_class_from_string(const std::string &s) {
  for (int c = 0; c < kNumLexClasses; ++c)
    if (s == to_string(static_cast<LexClass>(c)))
      return static_cast<LexClass>(c);
  fail("parse", "unknown lexical class '" + s + "'");
}

const char *to_string(Split s) {
  switch (s) {
  case Split::Train: return "train";
  case Split::Dev: return "dev";
  case Split::Test: return "test";
  }
  return "?";
}

const LexEntry &Lexicon::at(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < entries.size(), "invalid_argument",
          "unknown token id " + std::to_string(id));
  return entries[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Lexicon::find(const std::string &surface) const {
  for (const auto &e : entries)
    if (e.surface == surface)
      return e.id;
  return std::nullopt;
}

std::vector<TokenId> Lexicon::state_owner() const {
  std::vector<TokenId> owner(static_cast<std::size_t>(total_states()));
  for (const auto &e : entries)
    for (int k = 0; k < e.n_states; ++k)
      owner[static_cast<std::size_t>(e.first_state + k)] = e.id;
  return owner;
}

Lexicon build_lexicon(std::uint64_t seed, int vocab_size, int phone_inventory_size) {
  LexiconParams p;
  p.seed = seed;
  p.vocab_size = vocab_size;
  p.phone_inventory = phone_inventory_size;
  return build_lexicon(p);
}

Lexicon build_lexicon(const LexiconParams &params) {
  require(params.vocab_size >= 5, "invalid_argument", "vocab_size must be >= 5");
  require(params.phone_inventory >= 5, "invalid_argument", "phone_inventory_size must be >= 5");
  require(params.feature_dim >= 1, "invalid_argument", "feature_dim must be >= 1");

  Rng rng(params.seed);
  Lexicon lex;
  const auto D = static_cast<std::size_t>(params.feature_dim);

  std::vector<int> per_class_count(kNumPhoneClasses, 0);
  for (int i = 0; i < params.phone_inventory; ++i) {
    const int c = i % kNumPhoneClasses;
    const auto &syms = kPhoneSymbols[static_cast<std::size_t>(c)];
    const int k = per_class_count[static_cast<std::size_t>(c)]++;
    std::string sym = syms[static_cast<std::size_t>(k) % syms.size()];
    for (std::size_t r = 0; r < static_cast<std::size_t>(k) / syms.size(); ++r)
      sym += sym.back();
    lex.phones.push_back({sym, static_cast<PhoneClass>(c)});
  }
  Matrix phone_means(lex.phones.size(), D);
  for (double &v : phone_means.data)
    v = params.phone_spread * gauss(rng);

  std::vector<int> vowels, consonants;
  for (int i = 0; i < static_cast<int>(lex.phones.size()); ++i)
    (lex.phones[static_cast<std::size_t>(i)].cls == PhoneClass::Vowel ? vowels : consonants).push_back(i);

  const int V = params.vocab_size;
  std::set<std::string> surfaces;
  for (int id = 0; id < V; ++id) {
    LexEntry e;
    e.id = id;
    e.cls = static_cast<LexClass>(id % kNumLexClasses);
    const int len = e.cls == LexClass::Function ? uniform_int(rng, 1, 2) : uniform_int(rng, 2, 4);
    for (int k = 0; k < len; ++k) {
      // alternate consonant / vowel, starting at random
      const bool vowel = ((k + id) % 2) == 1;
      const auto &pool = vowel ? vowels : consonants;
      e.phones.push_back(pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))]);
    }
    lex.entries.push_back(std::move(e));
  }
  // Guarantee a homophone pair on larger vocabularies; the copy keeps its own class.
  const bool forced_homophone = V >= 20;
  if (forced_homophone)
    lex.entries[static_cast<std::size_t>(V - 1)].phones = lex.entries[static_cast<std::size_t>(V - 6)].phones;

  for (auto &e : lex.entries) {
    std::string s;
    if (e.cls == LexClass::Number) {
      s = std::to_string(10 + 7 * e.id);
    } else {
      for (std::size_t k = 0; k < e.phones.size(); ++k) {
        if (e.cls == LexClass::Other && k == 1)
          s += '-';
        s += lex.phones[static_cast<std::size_t>(e.phones[k])].symbol;
      }
    }
    while (surfaces.count(s))
      s += 'q';
    surfaces.insert(s);
    e.surface = s;
    e.n_states = std::clamp(static_cast<int>(e.phones.size()), 1, 3);
  }

  LexEntry sil;
  sil.id = V;
  sil.surface = "<sil>";
  sil.phones = {Lexicon::kSilencePhone};
  sil.cls = LexClass::Other;
  sil.n_states = 1;
  lex.entries.push_back(sil);
  lex.silence = V;

  int offset = 0;
  for (auto &e : lex.entries) {
    e.first_state = offset;
    offset += e.n_states;
  }
  lex.state_means = Matrix(static_cast<std::size_t>(offset), D);
  for (const auto &e : lex.entries) {
    for (int s = 0; s < e.n_states; ++s) {
      auto row = lex.state_means.row(static_cast<std::size_t>(e.first_state + s));
      if (e.id == lex.silence) {
        for (double &v : row)
          v = 0.5 * params.phone_spread * gauss(rng);
        continue;
      }
      const std::size_t m = e.phones.size();
      const std::size_t lo = static_cast<std::size_t>(s) * m / static_cast<std::size_t>(e.n_states);
      const std::size_t hi = static_cast<std::size_t>(s + 1) * m / static_cast<std::size_t>(e.n_states);
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t k = lo; k < hi; ++k)
          acc += phone_means(static_cast<std::size_t>(e.phones[k]), d);
        row[d] = acc / static_cast<double>(hi - lo) + params.state_jitter * gauss(rng);
      }
    }
  }
  if (forced_homophone) {
    const auto &src = lex.entries[static_cast<std::size_t>(V - 6)];
    const auto &dst = lex.entries[static_cast<std::size_t>(V - 1)];
    for (int s = 0; s < dst.n_states; ++s)
      for (std::size_t d = 0; d < D; ++d)
        lex.state_means(static_cast<std::size_t>(dst.first_state + s), d) =
            lex.state_means(static_cast<std::size_t>(src.first_state + s), d);
  }
  for (double &v : lex.state_means.data)
    v = to_float(v);
  return lex;
}

Utterance synthesize_utterance(const Lexicon &lex, const TokenSeq &reference, const SpeakerProfile &speaker,
                               const NoiseCondition &condition, int frames_per_state, double emission_stddev,
                               std::uint64_t seed, std::string id) {
  require(!reference.empty(), "invalid_argument", "reference must be non-empty");
  require(frames_per_state >= 1, "invalid_argument", "frames_per_state must be >= 1");
  const std::size_t D = lex.feature_dim();
  require(speaker.offset.size() == D && speaker.scale.size() == D, "dimension", "speaker profile dimension");
  require(condition.shift.size() == D, "dimension", "noise condition dimension");

  std::size_t T = 0;
  for (TokenId t : reference)
    T += static_cast<std::size_t>(lex.at(t).n_states * frames_per_state);

  Rng rng(seed);
  Utterance u;
  u.id = std::move(id);
  u.speaker = speaker.id;
  u.condition = condition.id;
  u.reference = reference;
  u.frames = Matrix(T, D);
  const double sd = emission_stddev * condition.inflation;
  std::size_t t = 0;
  for (TokenId tok : reference) {
    const auto &e = lex.at(tok);
    for (int s = 0; s < e.n_states; ++s) {
      const auto mean = lex.state_means.row(static_cast<std::size_t>(e.first_state + s));
      for (int f = 0; f < frames_per_state; ++f, ++t) {
        auto out = u.frames.row(t);
        for (std::size_t d = 0; d < D; ++d) {
          double x = mean[d];
          if (sd > 0.0)
            x += sd * gauss(rng);
          out[d] = to_float(speaker.scale[d] * x + speaker.offset[d] + condition.shift[d]);
        }
      }
    }
  }
  return u;
}

SentenceGenerator::SentenceGenerator(const Lexicon &lex, std::uint64_t seed, double trigram_weight, int fanout)
    : vocab_(lex.vocab_size()), trigram_weight_(trigram_weight) {
  require(trigram_weight >= 0.0 && trigram_weight <= 1.0, "invalid_argument", "trigram_weight outside [0,1]");
  Rng rng(seed);
  const std::size_t V = vocab_;
  const auto fill_row = [&](double *row) {
    constexpr double kFloor = 0.01;
    for (std::size_t w = 0; w < V; ++w)
      row[w] = kFloor / static_cast<double>(V);
    for (int k = 0; k < fanout; ++k) {
      const auto w = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(V) - 1));
      row[w] += std::exponential_distribution<double>(1.0)(rng);
    }
    double total = 0.0;
    for (std::size_t w = 0; w < V; ++w)
      total += row[w];
    for (std::size_t w = 0; w < V; ++w)
      row[w] /= total;
  };
  bigram_.assign((V + 1) * V, 0.0);
  for (std::size_t c = 0; c <= V; ++c)
    fill_row(bigram_.data() + c * V);
  trigram_.assign((V + 1) * (V + 1) * V, 0.0);
  for (std::size_t c = 0; c < (V + 1) * (V + 1); ++c)
    fill_row(trigram_.data() + c * V);
}

double SentenceGenerator::prob(TokenId prev2, TokenId prev1, TokenId w) const {
  const std::size_t V = vocab_;
  const auto p2 = static_cast<std::size_t>(prev2), p1 = static_cast<std::size_t>(prev1);
  const auto ww = static_cast<std::size_t>(w);
  return (1.0 - trigram_weight_) * bigram_[p1 * V + ww] + trigram_weight_ * trigram_[(p2 * (V + 1) + p1) * V + ww];
}

TokenSeq SentenceGenerator::sample(std::uint64_t seed, int min_len, int max_len) const {
  require(min_len >= 1 && max_len >= min_len, "invalid_argument", "bad sentence length range");
  Rng rng(seed);
  const int len = uniform_int(rng, min_len, max_len);
  const auto start = static_cast<TokenId>(vocab_);
  TokenId p2 = start, p1 = start;
  TokenSeq out;
  std::vector<double> w(vocab_);
  for (int i = 0; i < len; ++i) {
    for (std::size_t k = 0; k < vocab_; ++k)
      w[k] = prob(p2, p1, static_cast<TokenId>(k));
    const auto next = static_cast<TokenId>(sample_index(w.data(), vocab_, uniform01(rng)));
    out.push_back(next);
    p2 = p1;
    p1 = next;
  }
  return out;
}

std::vector<TokenSeq> SentenceGenerator::sample_text(std::uint64_t seed, std::size_t n_sentences, int min_len,
                                                     int max_len) const {
  std::vector<TokenSeq> text;
  text.reserve(n_sentences);
  for (std::size_t i = 0; i < n_sentences; ++i)
    text.push_back(sample(derive_seed(seed, {i}), min_len, max_len));
  return text;
}

namespace {

std::vector<double> gauss_vec(Rng &rng, std::size_t D, double sd) {
  std::vector<double> v(D);
  for (double &x : v)
    x = sd * gauss(rng);
  return v;
}

Corpus make_split(const CorpusSpec &spec, const Lexicon &lex, const SentenceGenerator &gen, Split split,
                  const std::vector<SpeakerProfile> &speakers, const std::vector<NoiseCondition> &conditions,
                  int n_utts, std::uint64_t split_tag) {
  Corpus c;
  c.name = to_string(split);
  c.split = split;
  const auto n_spk = speakers.size();
  for (int i = 0; i < n_utts; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto &spk = speakers[idx % n_spk];
    const auto &cond = conditions[(idx / n_spk) % conditions.size()];
    Rng rng(derive_seed(spec.seed, {split_tag, idx, 11}));
    const TokenSeq words = gen.sample(derive_seed(spec.seed, {split_tag, idx, 12}), spec.min_len, spec.max_len);
    TokenSeq ref;
    if (uniform01(rng) < spec.pause_prob)
      ref.push_back(lex.silence);
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w > 0 && uniform01(rng) < spec.pause_prob)
        ref.push_back(lex.silence);
      ref.push_back(words[w]);
    }
    if (uniform01(rng) < spec.pause_prob)
      ref.push_back(lex.silence);
    char id[64];
    std::snprintf(id, sizeof(id), "%s_s%03d_%05d", to_string(split), spk.id, i);
    c.utterances.push_back(synthesize_utterance(lex, ref, spk, cond, spec.frames_per_state, spec.emission_stddev,
                                                derive_seed(spec.seed, {split_tag, idx, 13}), id));
  }
  return c;
}

} // namespace

CorpusSet gen_corpus(const CorpusSpec &spec) {
  require(spec.speakers_train >= 1 && spec.speakers_dev >= 1 && spec.speakers_test >= 1, "invalid_argument",
          "each split needs at least one speaker");
  require(spec.utts_train >= 0 && spec.utts_dev >= 0 && spec.utts_test >= 0, "invalid_argument",
          "utterance counts must be non-negative");
  require(spec.n_conditions >= 1, "invalid_argument", "n_conditions must be >= 1");
  require(spec.mismatch >= 0.0, "invalid_argument", "mismatch must be >= 0");

  CorpusSet set;
  LexiconParams lp = spec.lexicon;
  lp.seed = derive_seed(spec.seed, {1});
  set.lexicon = build_lexicon(lp);
  const Lexicon &lex = set.lexicon;
  const std::size_t D = lex.feature_dim();

  Rng rng(derive_seed(spec.seed, {4}));
  for (int c = 0; c < spec.n_conditions; ++c)
    set.conditions.push_back({c, gauss_vec(rng, D, 0.25), 1.0 + 0.15 * c});

  // Dev and test share a channel direction so that mismatch learnt on one
  // transfers to the other; train speakers only scatter mildly around zero.
  std::vector<double> channel = gauss_vec(rng, D, 1.0);
  // fixed length sqrt(D): only the direction is random
  const double len = std::sqrt(std::inner_product(channel.begin(), channel.end(), channel.begin(), 0.0));
  for (double &v : channel)
    v *= std::sqrt(static_cast<double>(D)) / len;
  int next_id = 0;
  const auto make_speakers = [&](int n, bool mismatched) {
    std::vector<SpeakerProfile> out;
    for (int i = 0; i < n; ++i) {
      SpeakerProfile s;
      s.id = next_id++;
      s.offset.resize(D);
      s.scale.resize(D);
      for (std::size_t d = 0; d < D; ++d) {
        const double g = gauss(rng);
        const double h = gauss(rng);
        if (mismatched) {
          s.offset[d] = spec.mismatch * (channel[d] + 0.5 * g);
          s.scale[d] = std::exp(0.1 * spec.mismatch * h);
        } else {
          s.offset[d] = 0.25 * spec.mismatch * g;
          s.scale[d] = std::exp(0.05 * h);
        }
      }
      out.push_back(std::move(s));
    }
    return out;
  };
  const auto spk_train = make_speakers(spec.speakers_train, false);
  const auto spk_dev = make_speakers(spec.speakers_dev, true);
  const auto spk_test = make_speakers(spec.speakers_test, true);
  set.speakers.insert(set.speakers.end(), spk_train.begin(), spk_train.end());
  set.speakers.insert(set.speakers.end(), spk_dev.begin(), spk_dev.end());
  set.speakers.insert(set.speakers.end(), spk_test.begin(), spk_test.end());

  const std::uint64_t gen_seed = spec.generator_seed != 0 ? spec.generator_seed : derive_seed(spec.seed, {2, 0});
  SentenceGenerator gen(lex, gen_seed, spec.trigram_weight);
  set.train = make_split(spec, lex, gen, Split::Train, spk_train, set.conditions, spec.utts_train, 100);
  set.dev = make_split(spec, lex, gen, Split::Dev, spk_dev, set.conditions, spec.utts_dev, 200);
  set.test = make_split(spec, lex, gen, Split::Test, spk_test, set.conditions, spec.utts_test, 300);
  return set;
}

std::vector<TokenSeq> gen_text(const CorpusSpec &spec, const Lexicon &lex, std::size_t n_sentences, int domain) {
  const std::uint64_t gen_seed = domain == 0 && spec.generator_seed != 0
                                     ? spec.generator_seed
                                     : derive_seed(spec.seed, {2, static_cast<std::uint64_t>(domain)});
  SentenceGenerator gen(lex, gen_seed, spec.trigram_weight);
  return gen.sample_text(derive_seed(spec.seed, {3, static_cast<std::uint64_t>(domain)}), n_sentences, spec.min_len,
                         spec.max_len);
}

std::vector<int> Corpus::speakers() const {
  std::set<int> s;
  for (const auto &u : utterances)
    s.insert(u.speaker);
  return {s.begin(), s.end()};
}

const Utterance *Corpus::find(const std::string &id) const {
  for (const auto &u : utterances)
    if (u.id == id)
      return &u;
  return nullptr;
}

std::size_t Corpus::total_frames() const {
  std::size_t n = 0;
  for (const auto &u : utterances)
    n += u.num_frames();
  return n;
}

Corpus cmvn_per_speaker(const Corpus &corpus, std::vector<CmvnWarning> *warnings) {
  Corpus out = corpus;
  if (corpus.utterances.empty())
    return out;
  const std::size_t D = corpus.utterances.front().frames.cols;
  std::map<int, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    require(corpus.utterances[i].frames.cols == D, "dimension", "inconsistent feature dimension in corpus");
    by_speaker[corpus.utterances[i].speaker].push_back(i);
  }
  for (const auto &[spk, idx] : by_speaker) {
    std::vector<double> mean(D, 0.0), var(D, 0.0);
    std::size_t n = 0;
    for (auto i : idx) {
      const auto &f = corpus.utterances[i].frames;
      for (std::size_t t = 0; t < f.rows; ++t)
        for (std::size_t d = 0; d < D; ++d)
          mean[d] += f(t, d);
      n += f.rows;
    }
    require(n > 0, "invalid_argument", "speaker without frames");
    for (double &m : mean)
      m /= static_cast<double>(n);
    for (auto i : idx) {
      const auto &f = corpus.utterances[i].frames;
      for (std::size_t t = 0; t < f.rows; ++t)
        for (std::size_t d = 0; d < D; ++d) {
          const double c = f(t, d) - mean[d];
          var[d] += c * c;
        }
    }
    std::vector<double> inv_sd(D, 1.0);
    for (std::size_t d = 0; d < D; ++d) {
      var[d] /= static_cast<double>(n);
      if (var[d] > 1e-12) {
        inv_sd[d] = 1.0 / std::sqrt(var[d]);
      } else if (warnings) {
        warnings->push_back({spk, d});
      }
    }
    for (auto i : idx) {
      auto &f = out.utterances[i].frames;
      for (std::size_t t = 0; t < f.rows; ++t)
        for (std::size_t d = 0; d < D; ++d)
          f(t, d) = (f(t, d) - mean[d]) * inv_sd[d];
    }
  }
  return out;
}

std::vector<int> generator_states(const Lexicon &lex, const TokenSeq &reference, int frames_per_state) {
  std::vector<int> out;
  for (TokenId tok : reference) {
    const auto &e = lex.at(tok);
    for (int s = 0; s < e.n_states; ++s)
      out.insert(out.end(), static_cast<std::size_t>(frames_per_state), e.first_state + s);
  }
  return out;
}

TokenSeq strip_silence(const Lexicon &lex, const TokenSeq &tokens) {
  TokenSeq out;
  out.reserve(tokens.size());
  for (TokenId t : tokens)
    if (!lex.is_silence(t))
      out.push_back(t);
  return out;
}

std::string join_surfaces(const Lexicon &lex, const TokenSeq &tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i)
      s += ' ';
    s += lex.at(tokens[i]).surface;
  }
  return s;
}

TokenSeq parse_surfaces(const Lexicon &lex, const std::string &text) {
  std::istringstream in(text);
  std::string w;
  TokenSeq out;
  while (in >> w) {
    auto id = lex.find(w);
    require(id.has_value(), "parse", "unknown token surface '" + w + "'");
    out.push_back(*id);
  }
  return out;
}

} // namespace qea
