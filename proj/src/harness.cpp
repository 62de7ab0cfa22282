#include "qeadapt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

namespace qea {

namespace fs = std::filesystem;

std::vector<std::string> preset_names() {
  return {"dev+man+cmvn+test",  "dev+man+raw+test",  "dev+auto+cmvn+test",  "dev+auto+raw+test",
          "dev+auto+cmvn+dev",  "dev+auto+raw+dev",  "test+auto+cmvn+test", "test+auto+raw+test"};
}

Config preset(const std::string &name) {
  const auto names = preset_names();
  require(std::find(names.begin(), names.end(), name) != names.end(), "config", "unknown preset '" + name + "'");
  // <adaptation set>+<supervision>+<features>+<evaluation set>
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t p = name.find('+'); p != std::string::npos; p = name.find('+', start)) {
    parts.push_back(name.substr(start, p - start));
    start = p + 1;
  }
  parts.push_back(name.substr(start));
  Config c;
  c.set("adapt_set", parts[0]);
  c.set("supervision", parts[1] == "man" ? "manual" : "auto");
  c.set("normalization", parts[2]);
  c.set("eval_set", parts[3]);
  return c;
}

ExperimentConfig experiment_from(const Config &given) {
  Config c;
  if (given.has("preset"))
    c = preset(given.get("preset", ""));
  c.merge(given);

  ExperimentConfig e;
  e.seed = c.get_u64("seed", e.seed);
  auto &cs = e.corpus;
  cs.seed = derive_seed(e.seed, {1});
  cs.lexicon.seed = derive_seed(e.seed, {2});
  cs.lexicon.vocab_size = c.get_int("vocab", cs.lexicon.vocab_size);
  cs.lexicon.phone_inventory = c.get_int("phones", cs.lexicon.phone_inventory);
  cs.lexicon.feature_dim = c.get_int("dim", cs.lexicon.feature_dim);
  cs.lexicon.phone_spread = c.get_double("phone_spread", cs.lexicon.phone_spread);
  cs.lexicon.state_jitter = c.get_double("state_jitter", cs.lexicon.state_jitter);
  cs.speakers_train = c.get_int("speakers_train", cs.speakers_train);
  cs.speakers_dev = c.get_int("speakers_dev", cs.speakers_dev);
  cs.speakers_test = c.get_int("speakers_test", cs.speakers_test);
  cs.utts_train = c.get_int("utts_train", cs.utts_train);
  cs.utts_dev = c.get_int("utts_dev", cs.utts_dev);
  cs.utts_test = c.get_int("utts_test", cs.utts_test);
  cs.min_len = c.get_int("min_len", cs.min_len);
  cs.max_len = c.get_int("max_len", cs.max_len);
  cs.mismatch = c.get_double("mismatch", cs.mismatch);
  cs.emission_stddev = c.get_double("stddev", cs.emission_stddev);
  cs.frames_per_state = c.get_int("fps", cs.frames_per_state);
  cs.pause_prob = c.get_double("pause_prob", cs.pause_prob);
  cs.trigram_weight = c.get_double("trigram_weight", cs.trigram_weight);

  e.hidden = c.get_ints("hidden", e.hidden);
  e.context = c.get_int("context", e.context);
  e.train_schedule.learning_rate = c.get_double("lr", e.train_schedule.learning_rate);
  e.train_schedule.max_epochs = c.get_int("epochs", e.train_schedule.max_epochs);
  e.train_schedule.batch_size = c.get_int("batch", e.train_schedule.batch_size);
  e.train_schedule.halve_threshold = c.get_double("halve_threshold", e.train_schedule.halve_threshold);
  e.train_schedule.stop_threshold = c.get_double("stop_threshold", e.train_schedule.stop_threshold);
  e.train_schedule.seed = derive_seed(e.seed, {3});
  e.prior_floor = c.get_double("prior_floor", e.prior_floor);
  e.lm_order = c.get_int("lm_order", e.lm_order);
  e.rescore_order = c.get_int("rescore_order", e.rescore_order);
  e.discount = c.get_double("discount", e.discount);
  e.lm_sentences = c.get_int("lm_sentences", e.lm_sentences);

  e.decoder.lm_weight = c.get_double("lm_weight", e.decoder.lm_weight);
  e.decoder.silence_penalty = c.get_double("silence_penalty", e.decoder.silence_penalty);
  e.decoder.optional_silence = c.get_bool("optional_silence", e.decoder.optional_silence);
  e.decoder.beam = c.get_double("beam", e.decoder.beam);
  e.decoder.cn_temperature = c.get_double("cn_temperature", e.decoder.cn_temperature);
  e.nbest = c.get_int("nbest", e.nbest);
  e.normalization = normalization_from_string(c.get("normalization", to_string(e.normalization)));

  e.adapt_set = c.get("adapt_set", e.adapt_set);
  e.eval_set = c.get("eval_set", e.eval_set);
  for (const auto *s : {&e.adapt_set, &e.eval_set})
    require(*s == "dev" || *s == "test", "config", "adapt_set/eval_set must be dev or test, got '" + *s + "'");
  const std::string sup = c.get("supervision", "auto");
  require(sup == "auto" || sup == "manual", "config", "supervision must be auto or manual");
  e.manual_supervision = sup == "manual";

  auto &a = e.adaptation;
  a.mode = adapt_mode_from_string(c.get("mode", to_string(a.mode)));
  a.alpha = c.get_double("alpha", a.alpha);
  a.beta = c.get_double("beta", a.beta);
  require(a.alpha >= 0 && a.alpha <= 1 && a.beta >= 0 && a.beta <= 1, "config", "alpha and beta must lie in [0,1]");
  const auto basis_of = [](const std::string &s) {
    require(s == "oracle" || s == "predicted", "config", "WER basis must be oracle or predicted, got '" + s + "'");
    return s == "oracle" ? SelectionSpec::Basis::Oracle : SelectionSpec::Basis::Predicted;
  };
  a.wer_source = basis_of(c.get("wer_source", "predicted"));
  a.schedule.max_epochs = c.get_int("adapt_epochs", a.schedule.max_epochs);
  a.schedule.learning_rate = c.get_double("adapt_lr", a.schedule.learning_rate);
  a.odlr_learning_rate = c.get_double("odlr_lr", a.odlr_learning_rate);
  a.schedule.batch_size = e.train_schedule.batch_size;
  a.schedule.halve_threshold = e.train_schedule.halve_threshold;
  a.schedule.stop_threshold = e.train_schedule.stop_threshold;
  a.schedule.seed = derive_seed(e.seed, {4});
  a.cv_fraction = c.get_double("cv_fraction", a.cv_fraction);
  a.normalization = e.normalization;
  a.optional_silence = e.decoder.optional_silence;

  e.selection = c.get("selection", e.selection);
  require(e.selection == "none" || e.selection == "threshold" || e.selection == "topk", "config",
          "selection must be none, threshold or topk");
  e.basis = basis_of(c.get("basis", "predicted"));
  e.theta = c.get_double("theta", e.theta);
  e.top_k = c.get_int("top_k", e.top_k);
  e.tune_theta = c.get_bool("tune_theta", e.tune_theta);
  e.theta_grid = c.get_doubles("theta_grid", e.theta_grid);
  e.grid_alpha = c.get_doubles("grid_alpha", e.grid_alpha);
  e.grid_sizes = c.get_ints("grid_sizes", e.grid_sizes);
  e.grid_order = c.get("grid_order", e.grid_order);
  require(e.grid_order == "corpus" || e.grid_order == "oracle" || e.grid_order == "predicted", "config",
          "grid_order must be corpus, oracle or predicted");
  e.qe_folds = c.get_int("qe_folds", e.qe_folds);
  e.rescore_weight = c.get_double("rescore_weight", e.rescore_weight);
  e.out_dir = c.get("out", e.out_dir);
  return e;
}

const Corpus &Scenario::corpus(const std::string &name) const {
  if (name == "train")
    return data.train;
  if (name == "dev")
    return data.dev;
  if (name == "test")
    return data.test;
  fail("invalid_argument", "unknown corpus '" + name + "'");
}

std::vector<TrainItem> generator_items(const Corpus &corpus, const Lexicon &lex, int frames_per_state, int context) {
  std::vector<TrainItem> items(corpus.utterances.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto &u = corpus.utterances[i];
    const auto states = generator_states(lex, u.reference, frames_per_state);
    require(states.size() == u.num_frames(), "dimension", "generator path does not cover utterance " + u.id);
    items[i].input = splice(u.frames, context);
    items[i].targets = one_hot_targets(states, lex.total_states());
  }
  return items;
}

Scenario build_scenario(const ExperimentConfig &cfg) {
  Scenario sc;
  sc.cfg = cfg;
  sc.data = gen_corpus(cfg.corpus);
  if (cfg.normalization == Normalization::Cmvn) {
    sc.data.train = cmvn_per_speaker(sc.data.train);
    sc.data.dev = cmvn_per_speaker(sc.data.dev);
    sc.data.test = cmvn_per_speaker(sc.data.test);
  }
  const auto &lex = sc.data.lexicon;
  const std::size_t V = lex.vocab_size();
  const auto text_in = gen_text(cfg.corpus, lex, static_cast<std::size_t>(cfg.lm_sentences), 0);
  const auto text_out = gen_text(cfg.corpus, lex, static_cast<std::size_t>(cfg.lm_sentences), 1);
  sc.lm = train_lm(text_in, cfg.lm_order, cfg.discount, V);
  sc.lm_rescore = train_lm(text_in, cfg.rescore_order, cfg.discount, V);
  sc.lm_out = train_lm(text_out, cfg.rescore_order, cfg.discount, V);
  std::vector<TokenSeq> classes;
  for (const auto &s : text_in)
    classes.push_back(class_sequence(lex, s));
  sc.class_lm = train_lm(classes, 3, cfg.discount, kNumLexClasses);

  auto items = generator_items(sc.data.train, lex, cfg.corpus.frames_per_state, cfg.context);
  std::vector<std::vector<int>> paths;
  for (const auto &u : sc.data.train.utterances)
    paths.push_back(generator_states(lex, u.reference, cfg.corpus.frames_per_state));
  sc.priors = estimate_priors(paths, lex.total_states(), cfg.prior_floor);

  const auto cv = cv_partition(items.size(), 0.1, derive_seed(cfg.seed, {5}));
  std::vector<TrainItem> tr, cvi;
  for (std::size_t i = 0; i < items.size(); ++i)
    (cv[i] ? cvi : tr).push_back(std::move(items[i]));
  Layout layout;
  layout.feature_dim = static_cast<int>(lex.feature_dim());
  layout.context = cfg.context;
  layout.hidden = cfg.hidden;
  layout.outputs = lex.total_states();
  TrainResult res = train(init_model(derive_seed(cfg.seed, {6}), layout), tr, cfg.train_schedule, cvi);
  sc.baseline = std::move(res.model);
  sc.baseline_log = std::move(res.log);
  return sc;
}

std::map<std::string, TokenSeq> FirstPass::best() const {
  std::map<std::string, TokenSeq> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[ids[i]] = nbest[i].hyps.front().words;
  for (const auto &id : failed)
    out[id] = {};
  return out;
}

FirstPass first_pass(const Corpus &corpus, const AcousticModel &model, const Priors &priors,
                     const DecodingGraph &graph, const QeExtractor &qe, int n) {
  const std::size_t U = corpus.utterances.size();
  std::vector<NBestList> lists(U);
  std::vector<ConfusionNetwork> cns(U);
  std::vector<QeFeatureVector> feats(U);
  std::vector<int> ok(U, 0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < U; ++i) {
    try {
      lists[i] = nbest(model, priors, corpus.utterances[i], graph, n);
      cns[i] = build_cn(lists[i], graph.config().cn_temperature);
      feats[i] = qe.extract(lists[i].hyps.front(), cns[i]);
      ok[i] = 1;
    } catch (const Error &) {
    }
  }
  FirstPass fp;
  for (std::size_t i = 0; i < U; ++i) {
    if (!ok[i]) {
      fp.failed.push_back(corpus.utterances[i].id);
      continue;
    }
    fp.ids.push_back(corpus.utterances[i].id);
    fp.nbest.push_back(std::move(lists[i]));
    fp.cn.push_back(std::move(cns[i]));
    fp.features.push_back(feats[i]);
  }
  return fp;
}

void write_first_pass(const fs::path &dir, const FirstPass &fp, const Lexicon &lex) {
  fs::create_directories(dir);
  std::ofstream nb(dir / "nbest.txt"), cn(dir / "cn.txt"), ft(dir / "features.tsv"), fl(dir / "failed.txt");
  require(nb && cn && ft && fl, "io", "cannot write first-pass dumps under " + dir.string());
  for (std::size_t i = 0; i < fp.ids.size(); ++i) {
    write_nbest(nb, fp.ids[i], fp.nbest[i], lex);
    write_cn(cn, fp.ids[i], fp.cn[i], lex);
  }
  write_features(ft, fp.ids, fp.features);
  for (const auto &id : fp.failed)
    fl << id << '\n';
}

std::map<std::string, TokenSeq> decode_corpus(const Corpus &corpus, const AcousticModel &model, const Priors &priors,
                                              const DecodingGraph &graph) {
  const std::size_t U = corpus.utterances.size();
  std::vector<TokenSeq> hyps(U);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < U; ++i) {
    try {
      hyps[i] = viterbi(model, priors, corpus.utterances[i], graph).best.words;
    } catch (const Error &) {
    }
  }
  std::map<std::string, TokenSeq> out;
  for (std::size_t i = 0; i < U; ++i)
    out[corpus.utterances[i].id] = std::move(hyps[i]);
  return out;
}

WerReport score_corpus(const Corpus &corpus, const std::map<std::string, TokenSeq> &hyps, const Lexicon &lex) {
  WerReport r;
  for (const auto &u : corpus.utterances) {
    const auto it = hyps.find(u.id);
    require(it != hyps.end(), "invalid_argument", "no hypothesis for utterance " + u.id);
    r.utterances.push_back(score_utterance(u.id, strip_silence(lex, u.reference), it->second));
  }
  return r;
}

std::map<std::string, double> sentence_wers(const WerReport &report) {
  std::map<std::string, double> out;
  for (const auto &u : report.utterances)
    out[u.id] = u.clamped_wer();
  return out;
}

Experiment::Experiment(const Scenario &scenario)
    : sc_(&scenario), graph_(scenario.data.lexicon, scenario.lm, scenario.cfg.decoder),
      extractor_(scenario.data.lexicon, scenario.lm_rescore, scenario.lm_out, scenario.class_lm) {}

const FirstPass &Experiment::first(const std::string &set) {
  auto it = first_.find(set);
  if (it == first_.end())
    it = first_
             .emplace(set, first_pass(sc_->corpus(set), sc_->baseline, sc_->priors, graph_, extractor_,
                                      sc_->cfg.nbest))
             .first;
  return it->second;
}

const WerReport &Experiment::baseline_report(const std::string &set) {
  auto it = baseline_.find(set);
  if (it == baseline_.end())
    it = baseline_.emplace(set, score_corpus(sc_->corpus(set), first(set).best(), sc_->data.lexicon)).first;
  return it->second;
}

const std::map<std::string, double> &Experiment::oracle(const std::string &set) {
  auto it = oracle_.find(set);
  if (it == oracle_.end())
    it = oracle_.emplace(set, sentence_wers(baseline_report(set))).first;
  return it->second;
}

namespace {

Matrix to_matrix(const std::vector<QeFeatureVector> &rows) {
  Matrix m(rows.size(), kNumQeFeatures);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

} // namespace

const QeOutcome &Experiment::qe() {
  if (qe_)
    return *qe_;
  const auto &fp = first("dev");
  const auto &orc = oracle("dev");
  const Matrix x = to_matrix(fp.features);
  std::vector<double> y;
  std::vector<int> spk;
  for (const auto &id : fp.ids) {
    y.push_back(orc.at(id));
    spk.push_back(sc_->data.dev.find(id)->speaker);
  }
  const std::uint64_t seed = derive_seed(sc_->cfg.seed, {7});
  auto out = std::make_unique<QeOutcome>();
  out->cv = tune_cv(x, y, spk, default_xrt_grid(seed), sc_->cfg.qe_folds, seed);
  out->model = xrt_fit(x, y, out->cv.best);
  const auto fold = speaker_folds(spk, sc_->cfg.qe_folds, seed);
  std::vector<double> constant(y.size());
  for (int f = 0; f < sc_->cfg.qe_folds; ++f) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (fold[i] != f) {
        s += y[i];
        ++n;
      }
    for (std::size_t i = 0; i < y.size(); ++i)
      if (fold[i] == f)
        constant[i] = s / static_cast<double>(n);
  }
  out->constant_mae = mae(constant, y);
  qe_ = std::move(out);
  return *qe_;
}

const std::map<std::string, double> &Experiment::predicted(const std::string &set) {
  auto it = predicted_.find(set);
  if (it != predicted_.end())
    return it->second;
  const auto &q = qe();
  const auto &fp = first(set);
  std::map<std::string, double> out;
  if (set == "dev") {
    for (std::size_t i = 0; i < fp.ids.size(); ++i)
      out[fp.ids[i]] = q.cv.oof_predictions[i];
  } else {
    for (std::size_t i = 0; i < fp.ids.size(); ++i)
      out[fp.ids[i]] = xrt_predict(q.model, std::span<const double>(fp.features[i]));
  }
  for (const auto &id : fp.failed)
    out[id] = 1.0;
  return predicted_.emplace(set, std::move(out)).first->second;
}

Experiment::Outcome Experiment::adapt_and_eval(const std::string &adapt_set, const std::string &eval_set,
                                               const AdaptationConfig &config,
                                               const std::optional<SelectionSpec> &selection,
                                               bool manual_supervision) {
  const Corpus &pool = sc_->corpus(adapt_set);
  Outcome out;
  const auto hyps = first(adapt_set).best();

  Corpus candidates = pool;
  if (!manual_supervision) {
    // utterances without a first-pass transcript cannot supervise themselves
    std::vector<std::string> ids = first(adapt_set).ids;
    candidates = subset(pool, ids);
  }
  out.candidates = candidates.utterances.size();
  if (selection) {
    const auto &wmap = selection->basis == SelectionSpec::Basis::Oracle ? oracle(adapt_set) : predicted(adapt_set);
    out.selection = select_utterances(candidates, wmap, *selection);
    if (out.selection.truncated)
      out.warnings.push_back("top-K larger than the candidate set; using all " +
                             std::to_string(out.candidates) + " utterances");
  } else {
    for (const auto &u : candidates.utterances)
      out.selection.ids.push_back(u.id);
  }
  Outcome done = adapt_on(adapt_set, eval_set, config, out.selection.ids, manual_supervision);
  done.selection = std::move(out.selection);
  done.candidates = out.candidates;
  done.warnings.insert(done.warnings.begin(), out.warnings.begin(), out.warnings.end());
  return done;
}

Experiment::Outcome Experiment::adapt_on(const std::string &adapt_set, const std::string &eval_set,
                                         const AdaptationConfig &config, const std::vector<std::string> &ids,
                                         bool manual_supervision) {
  const auto &lex = sc_->data.lexicon;
  Outcome out;
  out.selection.ids = ids;
  out.candidates = ids.size();
  const auto hyps = first(adapt_set).best();
  const auto no_adaptation = [&](const std::string &why) {
    out.warnings.push_back(why);
    out.result.model = sc_->baseline;
    out.hyps = first(eval_set).best();
    out.report = baseline_report(eval_set);
  };
  if (out.selection.ids.empty()) {
    no_adaptation("empty selection; falling back to the baseline model");
    return out;
  }

  AdaptationSet set;
  const Corpus chosen = subset(sc_->corpus(adapt_set), out.selection.ids);
  const bool soft = config.mode == AdaptMode::KldSoft;
  const std::map<std::string, double> *wsrc = nullptr;
  if (soft)
    wsrc = config.wer_source == SelectionSpec::Basis::Oracle ? &oracle(adapt_set) : &predicted(adapt_set);
  for (const auto &u : chosen.utterances) {
    set.utterances.push_back(u);
    set.supervision.push_back(manual_supervision ? strip_silence(lex, u.reference) : hyps.at(u.id));
    if (soft)
      set.wer.push_back(wsrc->at(u.id));
  }
  try {
    out.result = adapt(sc_->baseline, sc_->priors, lex, set, config);
  } catch (const Error &e) {
    if (e.kind() != "empty_adaptation")
      throw;
    no_adaptation(std::string("adaptation skipped: ") + e.what());
    return out;
  }
  out.adapted = true;
  for (const auto &id : out.result.dropped)
    out.warnings.push_back("forced alignment failed for " + id + "; dropped");
  out.hyps = decode_corpus(sc_->corpus(eval_set), out.result.model, sc_->priors, graph_);
  out.report = score_corpus(sc_->corpus(eval_set), out.hyps, lex);
  return out;
}

double Experiment::tune_threshold(const AdaptationConfig &config, SelectionSpec::Basis basis,
                                  const std::vector<double> &grid) {
  require(!grid.empty(), "config", "empty threshold grid");
  double best_theta = grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double theta : grid) {
    SelectionSpec spec;
    spec.basis = basis;
    spec.mode = SelectionSpec::Mode::Threshold;
    spec.threshold = theta;
    const double w = adapt_and_eval("dev", "dev", config, spec, false).report.corpus_wer();
    if (w < best || (w == best && theta < best_theta)) {
      best = w;
      best_theta = theta;
    }
  }
  return best_theta;
}

namespace {

std::optional<SelectionSpec> selection_of(const ExperimentConfig &cfg, double theta) {
  if (cfg.selection == "none")
    return std::nullopt;
  SelectionSpec s;
  s.basis = cfg.basis;
  s.mode = cfg.selection == "topk" ? SelectionSpec::Mode::TopK : SelectionSpec::Mode::Threshold;
  s.threshold = theta;
  s.top_k = cfg.top_k;
  return s;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "io", "cannot write " + path.string());
  out << text;
}

template <class Fn> void write_with(const fs::path &path, Fn fn) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "io", "cannot write " + path.string());
  fn(out);
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

} // namespace

TwoPassReport run_two_pass(Experiment &exp, const ExperimentConfig &cfg, const fs::path &out_dir) {
  const auto &sc = exp.scenario();
  const auto &lex = sc.data.lexicon;
  TwoPassReport rep;
  rep.theta = cfg.theta;
  if (cfg.tune_theta && cfg.selection == "threshold")
    rep.theta = exp.tune_threshold(cfg.adaptation, cfg.basis, cfg.theta_grid);
  const auto spec = selection_of(cfg, rep.theta);
  auto out = exp.adapt_and_eval(cfg.adapt_set, cfg.eval_set, cfg.adaptation, spec, cfg.manual_supervision);
  rep.baseline_wer = exp.baseline_report(cfg.eval_set).corpus_wer();
  rep.adapted_wer = out.report.corpus_wer();
  rep.candidates = out.candidates;
  rep.selected = out.selection.ids.size();
  rep.adapted = out.adapted;
  rep.warnings = out.warnings;
  if (out_dir.empty())
    return rep;

  fs::create_directories(out_dir);
  write_first_pass(out_dir / ("first_pass_" + cfg.eval_set), exp.first(cfg.eval_set), lex);
  if (cfg.adapt_set != cfg.eval_set)
    write_first_pass(out_dir / ("first_pass_" + cfg.adapt_set), exp.first(cfg.adapt_set), lex);
  const bool uses_qe = (spec && spec->basis == SelectionSpec::Basis::Predicted) ||
                       (cfg.adaptation.mode == AdaptMode::KldSoft &&
                        cfg.adaptation.wer_source == SelectionSpec::Basis::Predicted);
  if (uses_qe) {
    const auto &pred = exp.predicted(cfg.adapt_set);
    std::vector<std::string> ids;
    std::vector<double> vals;
    for (const auto &[id, v] : pred) {
      ids.push_back(id);
      vals.push_back(v);
    }
    write_with(out_dir / "predictions.tsv", [&](std::ostream &o) { write_predictions(o, ids, vals); });
    write_with(out_dir / "qe_model.txt", [&](std::ostream &o) { save_xrt(o, exp.qe().model); });
  }
  write_with(out_dir / "selection.txt", [&](std::ostream &o) {
    for (const auto &id : out.selection.ids)
      o << id << '\n';
  });
  write_with(out_dir / "adapt_log.tsv", [&](std::ostream &o) { write_adaptation_log(o, out.result.log); });
  save_model((out_dir / "adapted.mlp").string(), out.result.model);
  write_with(out_dir / "wer_baseline.tsv",
             [&](std::ostream &o) { write_wer_report(o, exp.baseline_report(cfg.eval_set)); });
  write_with(out_dir / "wer_adapted.tsv", [&](std::ostream &o) { write_wer_report(o, out.report); });

  std::string r;
  r += "seed\t" + std::to_string(cfg.seed) + "\n";
  r += "adapt_set\t" + cfg.adapt_set + "\n";
  r += "eval_set\t" + cfg.eval_set + "\n";
  r += std::string("supervision\t") + (cfg.manual_supervision ? "manual" : "auto") + "\n";
  r += std::string("normalization\t") + to_string(cfg.normalization) + "\n";
  r += std::string("mode\t") + to_string(cfg.adaptation.mode) + "\n";
  r += "alpha\t" + fmt("%.2f", cfg.adaptation.alpha) + "\n";
  r += "beta\t" + fmt("%.2f", cfg.adaptation.beta) + "\n";
  r += "selection\t" + cfg.selection + "\n";
  r += "theta\t" + fmt("%.2f", rep.theta) + "\n";
  r += "candidates\t" + std::to_string(rep.candidates) + "\n";
  r += "selected\t" + std::to_string(rep.selected) + "\n";
  r += "adaptation_frames\t" + std::to_string(out.result.frames) + "\n";
  r += "updated_fraction\t" + fmt("%.4f", out.result.updated_fraction) + "\n";
  r += "baseline_wer\t" + format_percent(rep.baseline_wer) + "\n";
  r += "adapted_wer\t" + format_percent(rep.adapted_wer) + "\n";
  for (const auto &w : rep.warnings)
    r += "warning\t" + w + "\n";
  write_text(out_dir / "report.tsv", r);
  return rep;
}

TwoPassReport run_two_pass(const ExperimentConfig &cfg) {
  const Scenario sc = build_scenario(cfg);
  Experiment exp(sc);
  return run_two_pass(exp, cfg, cfg.out_dir);
}

GridReport run_grid(Experiment &exp, const ExperimentConfig &cfg) {
  require(!cfg.grid_sizes.empty() && !cfg.grid_alpha.empty(), "config", "grid axes must be non-empty");
  GridReport g;
  g.sizes = cfg.grid_sizes;
  g.alphas = cfg.grid_alpha;
  g.wer.assign(g.sizes.size(), std::vector<std::optional<double>>(g.alphas.size()));
  g.used.assign(g.sizes.size(), 0);
  const auto &decoded = exp.first(cfg.adapt_set).ids;
  const auto first_k = [&](int k) {
    return std::vector<std::string>(decoded.begin(),
                                    decoded.begin() + std::min<std::ptrdiff_t>(k, std::ssize(decoded)));
  };

  for (std::size_t r = 0; r < g.sizes.size(); ++r) {
    std::optional<SelectionSpec> spec;
    if (cfg.grid_order != "corpus") {
      SelectionSpec s;
      s.mode = SelectionSpec::Mode::TopK;
      s.top_k = g.sizes[r];
      s.basis = cfg.grid_order == "oracle" ? SelectionSpec::Basis::Oracle : SelectionSpec::Basis::Predicted;
      spec = s;
    }
    for (std::size_t c = 0; c < g.alphas.size(); ++c) {
      AdaptationConfig a = cfg.adaptation;
      a.mode = AdaptMode::KldHard;
      a.alpha = g.alphas[c];
      a.schedule.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(c)});
      try {
        const auto out = spec ? exp.adapt_and_eval(cfg.adapt_set, cfg.eval_set, a, spec, cfg.manual_supervision)
                              : exp.adapt_on(cfg.adapt_set, cfg.eval_set, a, first_k(g.sizes[r]), cfg.manual_supervision);
        g.wer[r][c] = out.report.corpus_wer();
        g.used[r] = out.selection.ids.size();
      } catch (const Error &e) {
        g.failures.push_back("size=" + std::to_string(g.sizes[r]) + " alpha=" + fmt("%.1f", g.alphas[c]) + ": " +
                             e.what());
      }
    }
  }
  bool found = false;
  for (std::size_t r = 0; r < g.sizes.size(); ++r)
    for (std::size_t c = 0; c < g.alphas.size(); ++c)
      if (g.wer[r][c] && (!found || *g.wer[r][c] < *g.wer[g.argmin_row][g.argmin_col])) {
        g.argmin_row = r;
        g.argmin_col = c;
        found = true;
      }
  require(found, "grid", "every grid cell failed");
  return g;
}

GridReport run_grid(const ExperimentConfig &cfg) {
  const Scenario sc = build_scenario(cfg);
  Experiment exp(sc);
  GridReport g = run_grid(exp, cfg);
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_with(fs::path(cfg.out_dir) / "grid.tsv", [&](std::ostream &o) { write_grid(o, g); });
  }
  return g;
}

void write_grid(std::ostream &out, const GridReport &g) {
  for (double a : g.alphas)
    out << '\t' << fmt("%.1f", a);
  out << '\n';
  for (std::size_t r = 0; r < g.sizes.size(); ++r) {
    out << g.sizes[r];
    for (std::size_t c = 0; c < g.alphas.size(); ++c)
      out << '\t' << (g.wer[r][c] ? format_percent(*g.wer[r][c]) : std::string());
    out << '\n';
  }
  out << "# argmin\t" << g.sizes[g.argmin_row] << '\t' << fmt("%.1f", g.alphas[g.argmin_col]) << '\t'
      << format_percent(g.min_wer()) << '\n';
  for (std::size_t r = 0; r < g.sizes.size(); ++r)
    if (r < g.used.size() && g.used[r] != 0 && g.used[r] < static_cast<std::size_t>(g.sizes[r]))
      out << "# truncated\t" << g.sizes[r] << '\t' << g.used[r] << '\n';
  for (const auto &f : g.failures)
    out << "# failed\t" << f << '\n';
}

std::size_t rescore_best(const NBestList &list, const NgramLm &higher, double weight, double lm_weight) {
  require(!list.hyps.empty(), "invalid_argument", "cannot rescore an empty n-best list");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < list.hyps.size(); ++i) {
    const auto &h = list.hyps[i];
    const double s = h.score + lm_weight * weight * (logprob(higher, h.words) - h.lm);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

RescoreResult rescore_nbest(const Corpus &corpus, const FirstPass &fp, const NgramLm &higher, double weight,
                            double lm_weight, const Lexicon &lex) {
  RescoreResult r;
  r.before = fp.best();
  r.after = r.before;
  for (std::size_t i = 0; i < fp.ids.size(); ++i)
    r.after[fp.ids[i]] = fp.nbest[i].hyps[rescore_best(fp.nbest[i], higher, weight, lm_weight)].words;
  r.before_report = score_corpus(corpus, r.before, lex);
  r.after_report = score_corpus(corpus, r.after, lex);
  return r;
}

} // namespace qea
