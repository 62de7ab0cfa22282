#include "oracles.hpp"
#include "qeadapt/corpus.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace qea;
namespace fs = std::filesystem;

namespace {

SpeakerProfile identity_speaker(std::size_t D) { return {0, std::vector<double>(D, 0.0), std::vector<double>(D, 1.0)}; }
NoiseCondition clean_condition(std::size_t D) { return {0, std::vector<double>(D, 0.0), 1.0}; }

CorpusSpec small_spec() {
  CorpusSpec s;
  s.seed = 9;
  s.speakers_train = 4;
  s.speakers_dev = 4;
  s.speakers_test = 4;
  s.utts_train = 24;
  s.utts_dev = 12;
  s.utts_test = 12;
  return s;
}

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("qeadapt_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("lexicon construction") {
  const Lexicon lex = build_lexicon(1, 20, 10);
  CHECK(lex.vocab_size() == 20);
  CHECK(lex.entries.size() == 21);
  CHECK(lex.is_silence(lex.silence));
  int silences = 0;
  for (const auto &e : lex.entries) {
    silences += lex.is_silence(e.id);
    CHECK(!e.phones.empty());
    CHECK(e.n_states >= 1);
    CHECK(e.n_states <= 3);
  }
  CHECK(silences == 1);
  for (std::size_t i = 0; i < lex.vocab_size(); ++i)
    CHECK(lex.entries[i].id == static_cast<TokenId>(i));

  bool homophone = false;
  for (std::size_t a = 0; a < lex.vocab_size(); ++a)
    for (std::size_t b = a + 1; b < lex.vocab_size(); ++b)
      homophone |= lex.entries[a].phones == lex.entries[b].phones;
  CHECK(homophone);

  const Lexicon again = build_lexicon(1, 20, 10);
  CHECK(again.state_means == lex.state_means);
  for (std::size_t i = 0; i < lex.entries.size(); ++i) {
    CHECK(again.entries[i].surface == lex.entries[i].surface);
    CHECK(again.entries[i].phones == lex.entries[i].phones);
  }
}

TEST_CASE("five-word lexicon covers every class") {
  const Lexicon lex = build_lexicon(2, 5, 5);
  CHECK(lex.vocab_size() == 5);
  std::set<LexClass> classes;
  for (std::size_t i = 0; i < 5; ++i)
    classes.insert(lex.entries[i].cls);
  CHECK(classes.size() == 5);
  std::set<PhoneClass> phone_classes;
  for (const auto &p : lex.phones)
    phone_classes.insert(p.cls);
  CHECK(phone_classes.size() == 5);
}

TEST_CASE("lexicon rejects tiny vocabularies") {
  CHECK_THROWS_AS(build_lexicon(1, 4, 10), Error);
  CHECK_THROWS_AS(build_lexicon(1, 10, 4), Error);
}

TEST_CASE("utterance length follows states and frames per state") {
  Lexicon lex = build_lexicon(3, 10, 8);
  TokenSeq ref;
  for (std::size_t w = 0; w < lex.vocab_size() && ref.size() < 3; ++w)
    if (lex.entries[w].n_states == 2)
      ref.push_back(static_cast<TokenId>(w));
  REQUIRE(ref.size() == 3);
  const std::size_t D = lex.feature_dim();
  const Utterance u = synthesize_utterance(lex, ref, identity_speaker(D), clean_condition(D), 4, 0.7, 5);
  CHECK(u.num_frames() == 24);
  CHECK(generator_states(lex, ref, 4).size() == 24);
}

TEST_CASE("zero-noise frames equal the state means") {
  const Lexicon lex = build_lexicon(4, 12, 8);
  const std::size_t D = lex.feature_dim();
  const TokenSeq ref = {0, 3, 7, 3};
  const Utterance u = synthesize_utterance(lex, ref, identity_speaker(D), clean_condition(D), 2, 0.0, 1);
  const auto states = generator_states(lex, ref, 2);
  REQUIRE(states.size() == u.num_frames());
  for (std::size_t t = 0; t < states.size(); ++t)
    for (std::size_t d = 0; d < D; ++d)
      CHECK(u.frames(t, d) == static_cast<double>(static_cast<float>(lex.state_means(states[t], d))));
}

TEST_CASE("synthesis is deterministic and validates input") {
  const Lexicon lex = build_lexicon(4, 12, 8);
  const std::size_t D = lex.feature_dim();
  const TokenSeq ref = {1, 2, 3};
  const auto a = synthesize_utterance(lex, ref, identity_speaker(D), clean_condition(D), 3, 0.7, 77);
  const auto b = synthesize_utterance(lex, ref, identity_speaker(D), clean_condition(D), 3, 0.7, 77);
  CHECK(a.frames == b.frames);
  CHECK_THROWS_AS(synthesize_utterance(lex, {}, identity_speaker(D), clean_condition(D), 3, 0.7, 1), Error);
  CHECK_THROWS_AS(synthesize_utterance(lex, {99}, identity_speaker(D), clean_condition(D), 3, 0.7, 1), Error);
  CHECK_THROWS_AS(synthesize_utterance(lex, ref, identity_speaker(D), clean_condition(D), 0, 0.7, 1), Error);
}

TEST_CASE("corpus splits have disjoint speakers") {
  const CorpusSet set = gen_corpus(small_spec());
  std::set<int> tr, dv, ts;
  for (int s : set.train.speakers())
    tr.insert(s);
  for (int s : set.dev.speakers())
    dv.insert(s);
  for (int s : set.test.speakers())
    ts.insert(s);
  CHECK(tr.size() == 4);
  CHECK(dv.size() == 4);
  CHECK(ts.size() == 4);
  for (int s : dv) {
    CHECK(tr.count(s) == 0);
    CHECK(ts.count(s) == 0);
  }
  for (int s : ts)
    CHECK(tr.count(s) == 0);
  CHECK(set.conditions.size() == 4);
}

TEST_CASE("mismatch zero leaves dev and test speakers without offset") {
  CorpusSpec spec = small_spec();
  spec.mismatch = 0.0;
  const CorpusSet set = gen_corpus(spec);
  const auto is_eval = [&](int id) {
    for (const auto *c : {&set.dev, &set.test})
      for (int s : c->speakers())
        if (s == id)
          return true;
    return false;
  };
  int checked = 0;
  for (const auto &sp : set.speakers)
    if (is_eval(sp.id)) {
      ++checked;
      for (double o : sp.offset)
        CHECK(o == 0.0);
    }
  CHECK(checked == 8);
}

TEST_CASE("corpus generation is reproducible on disk") {
  const CorpusSet a = gen_corpus(small_spec());
  const CorpusSet b = gen_corpus(small_spec());
  const fs::path pa = scratch("corpus_a"), pb = scratch("corpus_b");
  write_corpus(pa, a.test, a.lexicon);
  write_corpus(pb, b.test, b.lexicon);
  CHECK(slurp(pa / "manifest.tsv") == slurp(pb / "manifest.tsv"));
  for (const auto &u : a.test.utterances) {
    const Utterance *v = b.test.find(u.id);
    REQUIRE(v != nullptr);
    CHECK(u.frames == v->frames);
  }
  for (const auto &e : fs::directory_iterator(pa / "frames"))
    CHECK(slurp(e.path()) == slurp(pb / "frames" / e.path().filename()));
  fs::remove_all(pa);
  fs::remove_all(pb);
}

TEST_CASE("corpus and lexicon round-trip through the on-disk format") {
  const CorpusSet a = gen_corpus(small_spec());
  const fs::path p = scratch("roundtrip");
  write_lexicon(p / "lexicon", a.lexicon);
  write_corpus(p / "dev", a.dev, a.lexicon);
  const Lexicon lex = read_lexicon(p / "lexicon");
  CHECK(lex.vocab_size() == a.lexicon.vocab_size());
  CHECK(lex.total_states() == a.lexicon.total_states());
  const Corpus dev = read_corpus(p / "dev", lex);
  REQUIRE(dev.utterances.size() == a.dev.utterances.size());
  for (std::size_t i = 0; i < dev.utterances.size(); ++i) {
    CHECK(dev.utterances[i].id == a.dev.utterances[i].id);
    CHECK(dev.utterances[i].speaker == a.dev.utterances[i].speaker);
    CHECK(dev.utterances[i].reference == a.dev.utterances[i].reference);
    CHECK(dev.utterances[i].frames == a.dev.utterances[i].frames);
  }
  // header: magic, rows, cols, reserved
  const std::string raw = slurp(p / "dev" / "frames" / (a.dev.utterances[0].id + ".frm"));
  REQUIRE(raw.size() >= 16);
  CHECK(raw.substr(0, 4) == "FRM1");
  CHECK(raw.size() == 16 + 4 * a.dev.utterances[0].frames.data.size());
  fs::remove_all(p);
}

TEST_CASE("per-speaker CMVN statistics") {
  CorpusSpec spec = small_spec();
  spec.mismatch = 1.5;
  const CorpusSet set = gen_corpus(spec);
  const Corpus norm = cmvn_per_speaker(set.dev);
  const std::size_t D = set.lexicon.feature_dim();
  for (int spk : norm.speakers()) {
    std::vector<double> mean(D, 0.0), var(D, 0.0);
    std::size_t n = 0;
    for (const auto &u : norm.utterances)
      if (u.speaker == spk) {
        for (std::size_t t = 0; t < u.num_frames(); ++t)
          for (std::size_t d = 0; d < D; ++d)
            mean[d] += u.frames(t, d);
        n += u.num_frames();
      }
    for (auto &m : mean)
      m /= static_cast<double>(n);
    for (const auto &u : norm.utterances)
      if (u.speaker == spk)
        for (std::size_t t = 0; t < u.num_frames(); ++t)
          for (std::size_t d = 0; d < D; ++d)
            var[d] += (u.frames(t, d) - mean[d]) * (u.frames(t, d) - mean[d]);
    for (std::size_t d = 0; d < D; ++d) {
      CHECK(std::abs(mean[d]) < 1e-9);
      CHECK(std::abs(var[d] / static_cast<double>(n) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("CMVN on standardized data and constant dimensions") {
  Corpus c;
  Utterance u;
  u.id = "u";
  u.speaker = 3;
  u.frames = Matrix(4, 2);
  // column 0 already has mean 0 and variance 1; column 1 is constant
  const double col0[] = {1.0, -1.0, 1.0, -1.0};
  for (std::size_t t = 0; t < 4; ++t) {
    u.frames(t, 0) = col0[t];
    u.frames(t, 1) = 2.5;
  }
  c.utterances.push_back(u);
  std::vector<CmvnWarning> warnings;
  const Corpus n = cmvn_per_speaker(c, &warnings);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(std::abs(n.utterances[0].frames(t, 0) - col0[t]) < 1e-12);
    CHECK(n.utterances[0].frames(t, 1) == 0.0);
  }
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].speaker == 3);
  CHECK(warnings[0].dim == 1);
}

TEST_CASE("surface strings round-trip") {
  const Lexicon lex = build_lexicon(1, 20, 10);
  const TokenSeq s = {0, lex.silence, 5, 19};
  CHECK(parse_surfaces(lex, join_surfaces(lex, s)) == s);
  CHECK(strip_silence(lex, s) == TokenSeq{0, 5, 19});
  CHECK_THROWS_AS(parse_surfaces(lex, "no-such-word"), Error);
}
