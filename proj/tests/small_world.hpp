#pragma once

// A reduced scenario shared by the slower tests.

#include "qeadapt/harness.hpp"

inline qea::ExperimentConfig small_config(std::uint64_t seed) {
  qea::ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.corpus.utts_train = 160;
  cfg.corpus.utts_dev = 60;
  cfg.corpus.utts_test = 60;
  cfg.corpus.lexicon.vocab_size = 20;
  cfg.hidden = {32};
  cfg.lm_sentences = 800;
  cfg.train_schedule.max_epochs = 8;
  cfg.adaptation.schedule.max_epochs = 4;
  return cfg;
}

inline const qea::Scenario &small_scenario() {
  static const qea::Scenario sc = qea::build_scenario(small_config(3));
  return sc;
}
