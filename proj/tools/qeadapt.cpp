#include "qeadapt/adaptation.hpp"
#include "qeadapt/config.hpp"
#include "qeadapt/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

using namespace qea;
namespace fs = std::filesystem;

namespace {

// Options shared by every subcommand: a config file, repeated key=value
// overrides, and one flag per config key (--adapt-set for adapt_set).
struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  Config resolve() const {
    Config c;
    if (!config_path.empty())
      c = Config::load(config_path);
    for (const auto &kv : sets) {
      const auto eq = kv.find('=');
      require(eq != std::string::npos, "usage", "--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto &[k, v] : flags)
      c.set(k, v);
    return c;
  }
};

std::string flag_name(std::string key) {
  for (char &ch : key)
    if (ch == '_')
      ch = '-';
  return "--" + key;
}

CLI::App *command(CLI::App &app, const std::string &name, const std::string &help, Options &opt,
                  const std::vector<std::string> &keys) {
  auto *sub = app.add_subcommand(name, help);
  sub->add_option("--config", opt.config_path, "key = value config file");
  sub->add_option("--set", opt.sets, "override a config key (key=value)");
  std::set<std::string> seen;
  for (const auto &k : keys) {
    if (!seen.insert(k).second)
      continue;
    sub->add_option_function<std::string>(
        flag_name(k), [&opt, k](const std::string &v) { opt.flags[k] = v; }, "config key " + k);
  }
  return sub;
}

const std::vector<std::string> kScenarioKeys = {
    "seed",      "vocab",        "phones",         "dim",          "speakers_train", "speakers_dev",
    "speakers_test", "utts_train", "utts_dev",     "utts_test",    "min_len",        "max_len",
    "mismatch",  "stddev",       "fps",            "pause_prob",   "trigram_weight", "hidden",
    "context",   "lr",           "epochs",         "batch",        "lm_order",       "rescore_order",
    "lm_sentences", "lm_weight", "silence_penalty", "nbest",       "beam",           "cn_temperature",
    "normalization", "preset",   "adapt_set",      "eval_set",     "supervision",    "mode",
    "alpha",     "beta",         "wer_source",     "adapt_epochs", "adapt_lr", "odlr_lr",       "cv_fraction",
    "selection", "basis",        "theta",          "top_k",        "tune_theta",     "theta_grid",
    "grid_alpha", "grid_sizes",  "grid_order",     "qe_folds",     "rescore_weight", "out",
    "phone_spread", "state_jitter", "halve_threshold", "stop_threshold", "prior_floor", "discount",
    "optional_silence"};

std::vector<std::string> with(std::vector<std::string> keys, const std::vector<std::string> &more) {
  keys.insert(keys.end(), more.begin(), more.end());
  return keys;
}

std::string need(const Config &c, const std::string &key) {
  require(c.has(key), "usage", "missing required option " + flag_name(key));
  return c.get(key, "");
}

Corpus load_corpus(const Config &c, const Lexicon &lex) { return read_corpus(need(c, "corpus"), lex); }

NgramLm load_lm(const std::string &path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open LM " + path);
  return NgramLm::load(in);
}

void save_lm(const std::string &path, const NgramLm &lm) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "io", "cannot write " + path);
  lm.save(out);
}

std::ofstream open_out(const fs::path &path) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "io", "cannot write " + path.string());
  return out;
}

// `id<TAB>surfaces` per line
std::map<std::string, TokenSeq> read_transcripts(const std::string &path, const Lexicon &lex) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open transcripts " + path);
  std::map<std::string, TokenSeq> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    const auto tab = line.find('\t');
    const std::string id = line.substr(0, tab);
    out[id] = tab == std::string::npos ? TokenSeq{} : parse_surfaces(lex, line.substr(tab + 1));
  }
  return out;
}

void write_transcripts(std::ostream &out, const std::map<std::string, TokenSeq> &hyps, const Corpus &order,
                       const Lexicon &lex) {
  for (const auto &u : order.utterances)
    if (auto it = hyps.find(u.id); it != hyps.end())
      out << u.id << '\t' << join_surfaces(lex, it->second) << '\n';
}

std::vector<TokenSeq> read_text(const std::string &path, const Lexicon &lex) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open text " + path);
  std::vector<TokenSeq> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty())
      out.push_back(strip_silence(lex, parse_surfaces(lex, line)));
  return out;
}

struct Loaded {
  Lexicon lex;
  AcousticModel model;
  Priors priors;
};

Loaded load_system(const Config &c) {
  Loaded s{read_lexicon(need(c, "lexicon")), load_model(need(c, "model")), {}};
  s.priors = c.has("priors") ? load_priors(c.get("priors", "")) : uniform_priors(s.model.outputs());
  require(s.model.outputs() == s.lex.total_states(), "dimension", "model outputs do not match lexicon states");
  return s;
}

DecoderConfig decoder_config(const Config &c) { return experiment_from(c).decoder; }

int cmd_gen(const Config &c) {
  const ExperimentConfig e = experiment_from(c);
  const fs::path out = need(c, "out");
  const CorpusSet data = gen_corpus(e.corpus);
  write_lexicon(out / "lexicon", data.lexicon);
  for (const Corpus *corp : {&data.train, &data.dev, &data.test}) {
    Corpus written = e.normalization == Normalization::Cmvn ? cmvn_per_speaker(*corp) : *corp;
    write_corpus(out / to_string(corp->split), written, data.lexicon);
  }
  for (int domain : {0, 1}) {
    auto f = open_out(out / (domain == 0 ? "text_in.txt" : "text_out.txt"));
    for (const auto &s : gen_text(e.corpus, data.lexicon, static_cast<std::size_t>(e.lm_sentences), domain))
      f << join_surfaces(data.lexicon, s) << '\n';
  }
  std::cout << "wrote corpora under " << out.string() << '\n';
  return 0;
}

int cmd_train_lm(const Config &c) {
  const Lexicon lex = read_lexicon(need(c, "lexicon"));
  auto text = read_text(need(c, "text"), lex);
  std::size_t vocab = lex.vocab_size();
  if (c.get_bool("classes", false)) {
    for (auto &s : text)
      s = class_sequence(lex, s);
    vocab = kNumLexClasses;
  }
  const NgramLm lm = train_lm(text, c.get_int("order", 2), c.get_double("discount", 0.75), vocab);
  save_lm(need(c, "out"), lm);
  double lp = 0;
  std::size_t n = 0;
  for (const auto &s : text) {
    lp += logprob(lm, s);
    n += s.size() + 1;
  }
  std::printf("sentences %zu train-perplexity %.4f\n", text.size(), std::exp(-lp / static_cast<double>(n)));
  return 0;
}

int cmd_train_am(const Config &c) {
  const ExperimentConfig e = experiment_from(c);
  const Lexicon lex = read_lexicon(need(c, "lexicon"));
  const Corpus corpus = load_corpus(c, lex);
  auto items = generator_items(corpus, lex, e.corpus.frames_per_state, e.context);
  std::vector<std::vector<int>> paths;
  for (const auto &u : corpus.utterances)
    paths.push_back(generator_states(lex, u.reference, e.corpus.frames_per_state));
  const auto cv = cv_partition(items.size(), 0.1, derive_seed(e.seed, {5}));
  std::vector<TrainItem> tr, cvi;
  for (std::size_t i = 0; i < items.size(); ++i)
    (cv[i] ? cvi : tr).push_back(std::move(items[i]));
  Layout layout;
  layout.feature_dim = static_cast<int>(lex.feature_dim());
  layout.context = e.context;
  layout.hidden = e.hidden;
  layout.outputs = lex.total_states();
  const TrainResult res = train(init_model(derive_seed(e.seed, {6}), layout), tr, e.train_schedule, cvi);
  save_model(need(c, "out"), res.model);
  save_priors(c.get("priors_out", need(c, "out") + ".priors"),
              estimate_priors(paths, lex.total_states(), e.prior_floor));
  std::ostringstream log;
  write_adaptation_log(log, res.log);
  std::cout << log.str();
  return 0;
}

int cmd_decode(const Config &c) {
  const Loaded s = load_system(c);
  const Corpus corpus = load_corpus(c, s.lex);
  const NgramLm lm = load_lm(need(c, "lm"));
  const DecoderConfig dc = decoder_config(c);
  const DecodingGraph graph(s.lex, lm, dc);
  const fs::path out = need(c, "out");
  auto nb = open_out(out / "nbest.txt");
  auto cn = open_out(out / "cn.txt");
  auto hyp = open_out(out / "hyp.txt");
  const int n = c.get_int("nbest", 1);
  for (const auto &u : corpus.utterances) {
    try {
      const NBestList list = nbest(s.model, s.priors, u, graph, n);
      write_nbest(nb, u.id, list, s.lex);
      write_cn(cn, u.id, build_cn(list, dc.cn_temperature), s.lex);
      hyp << u.id << '\t' << join_surfaces(s.lex, list.hyps.front().words) << '\n';
    } catch (const Error &err) {
      std::cerr << "warning\tdecode\t" << u.id << '\t' << err.what() << '\n';
    }
  }
  return 0;
}

int cmd_align(const Config &c) {
  const Loaded s = load_system(c);
  const Corpus corpus = load_corpus(c, s.lex);
  std::map<std::string, TokenSeq> tr;
  if (c.has("transcripts"))
    tr = read_transcripts(c.get("transcripts", ""), s.lex);
  auto out = open_out(need(c, "out"));
  for (const auto &u : corpus.utterances) {
    const TokenSeq ref = c.has("transcripts") ? tr.at(u.id) : u.reference;
    try {
      const Alignment al = forced_align(s.model, s.priors, u, ref, s.lex, c.get_bool("optional_silence", true));
      for (const auto &sp : al.spans)
        out << u.id << '\t' << s.lex.at(sp.token).surface << '\t' << sp.begin << '\t' << sp.end << '\n';
    } catch (const Error &err) {
      std::cerr << "warning\talign\t" << u.id << '\t' << err.what() << '\n';
    }
  }
  return 0;
}

int cmd_qe_extract(const Config &c) {
  const Loaded s = load_system(c);
  const Corpus corpus = load_corpus(c, s.lex);
  const NgramLm lm = load_lm(need(c, "lm"));
  const NgramLm lm_in = c.has("lm_in") ? load_lm(c.get("lm_in", "")) : lm;
  const NgramLm lm_out = load_lm(need(c, "lm_out"));
  const NgramLm class_lm = load_lm(need(c, "class_lm"));
  const DecodingGraph graph(s.lex, lm, decoder_config(c));
  const QeExtractor qe(s.lex, lm_in, lm_out, class_lm);
  const FirstPass fp = first_pass(corpus, s.model, s.priors, graph, qe, c.get_int("nbest", 10));
  auto out = open_out(need(c, "out"));
  write_features(out, fp.ids, fp.features);
  for (const auto &id : fp.failed)
    std::cerr << "warning\tdecode\t" << id << '\n';
  return 0;
}

int cmd_qe_train(const Config &c) {
  std::ifstream fin(need(c, "features"));
  require(static_cast<bool>(fin), "io", "cannot open features");
  const auto [ids, rows] = read_features(fin);
  // targets: WER report TSV (utt S D I len wer); speakers from the corpus manifest
  const Lexicon lex = read_lexicon(need(c, "lexicon"));
  const Corpus corpus = load_corpus(c, lex);
  std::ifstream win(need(c, "wer"));
  require(static_cast<bool>(win), "io", "cannot open WER report");
  std::map<std::string, double> wer;
  std::string line;
  while (std::getline(win, line)) {
    std::istringstream ss(line);
    std::string id;
    int sub, del, ins, len;
    if (ss >> id >> sub >> del >> ins >> len && len > 0)
      wer[id] = std::min(1.0, static_cast<double>(sub + del + ins) / len);
  }
  Matrix x(rows.size(), kNumQeFeatures);
  std::vector<double> y;
  std::vector<int> spk;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), x.row(i).begin());
    require(wer.count(ids[i]) && corpus.find(ids[i]), "invalid_argument", "no WER or speaker for " + ids[i]);
    y.push_back(wer[ids[i]]);
    spk.push_back(corpus.find(ids[i])->speaker);
  }
  const std::uint64_t seed = c.get_u64("seed", 1);
  const CvOutcome cv = tune_cv(x, y, spk, default_xrt_grid(seed), c.get_int("qe_folds", 4), seed);
  const XrtModel m = xrt_fit(x, y, cv.best);
  auto out = open_out(need(c, "out"));
  save_xrt(out, m);
  std::printf("bags %d trees %d k %d n_min %d cv-mae %.4f\n", cv.best.n_bags, cv.best.trees_per_bag,
              cv.best.k_features, cv.best.n_min, mae(cv.oof_predictions, y));
  return 0;
}

int cmd_qe_predict(const Config &c) {
  std::ifstream min(need(c, "model"));
  require(static_cast<bool>(min), "io", "cannot open QE model");
  const XrtModel m = load_xrt(min);
  std::ifstream fin(need(c, "features"));
  require(static_cast<bool>(fin), "io", "cannot open features");
  const auto [ids, rows] = read_features(fin);
  std::vector<double> pred;
  for (const auto &r : rows)
    pred.push_back(xrt_predict(m, std::span<const double>(r)));
  auto out = open_out(need(c, "out"));
  write_predictions(out, ids, pred);
  return 0;
}

int cmd_adapt(const Config &c) {
  const ExperimentConfig e = experiment_from(c);
  const Loaded s = load_system(c);
  const Corpus corpus = load_corpus(c, s.lex);
  const auto tr = read_transcripts(need(c, "transcripts"), s.lex);
  std::map<std::string, double> wer;
  if (c.has("wer")) {
    std::ifstream in(c.get("wer", ""));
    require(static_cast<bool>(in), "io", "cannot open WER predictions");
    wer = read_predictions(in);
  }
  AdaptationSet set;
  for (const auto &u : corpus.utterances) {
    auto it = tr.find(u.id);
    if (it == tr.end())
      continue;
    if (c.has("theta") && c.has("wer") && wer.at(u.id) > e.theta)
      continue;
    set.utterances.push_back(u);
    set.supervision.push_back(it->second);
    if (e.adaptation.mode == AdaptMode::KldSoft) {
      require(wer.count(u.id), "usage", "soft adaptation needs --wer with a value for " + u.id);
      set.wer.push_back(wer.at(u.id));
    }
  }
  const AdaptResult r = adapt(s.model, s.priors, s.lex, set, e.adaptation);
  save_model(need(c, "out"), r.model);
  auto log = open_out(c.get("log", need(c, "out") + ".log.tsv"));
  write_adaptation_log(log, r.log);
  for (const auto &id : r.dropped)
    std::cerr << "warning\talign\t" << id << '\n';
  std::printf("utterances %zu frames %zu updated-fraction %.4f\n", set.utterances.size(), r.frames,
              r.updated_fraction);
  return 0;
}

int cmd_eval(const Config &c) {
  const Lexicon lex = read_lexicon(need(c, "lexicon"));
  const Corpus corpus = load_corpus(c, lex);
  auto hyps = read_transcripts(need(c, "hyp"), lex);
  for (const auto &u : corpus.utterances)
    hyps.try_emplace(u.id);
  const WerReport r = score_corpus(corpus, hyps, lex);
  if (c.has("out")) {
    auto out = open_out(c.get("out", ""));
    write_wer_report(out, r);
  }
  std::cout << "TOTAL " << format_percent(r.corpus_wer()) << '\n';
  return 0;
}

int cmd_two_pass(const Config &c) {
  ExperimentConfig e = experiment_from(c);
  need(c, "out");
  const TwoPassReport r = run_two_pass(e);
  std::cout << "baseline " << format_percent(r.baseline_wer) << " adapted " << format_percent(r.adapted_wer)
            << " selected " << r.selected << "/" << r.candidates << '\n';
  for (const auto &w : r.warnings)
    std::cerr << "warning\ttwo-pass\t" << w << '\n';
  return 0;
}

int cmd_grid(const Config &c) {
  const ExperimentConfig e = experiment_from(c);
  const GridReport g = run_grid(e);
  write_grid(std::cout, g);
  return 0;
}

int cmd_rescore(const Config &c) {
  const ExperimentConfig e = experiment_from(c);
  const Scenario sc = build_scenario(e);
  Experiment exp(sc);
  const auto &corpus = sc.corpus(e.eval_set);
  const RescoreResult r = rescore_nbest(corpus, exp.first(e.eval_set), sc.lm_rescore, e.rescore_weight,
                                        e.decoder.lm_weight, sc.data.lexicon);
  if (!e.out_dir.empty()) {
    fs::create_directories(e.out_dir);
    auto before = open_out(fs::path(e.out_dir) / "wer_before.tsv");
    write_wer_report(before, r.before_report);
    auto after = open_out(fs::path(e.out_dir) / "wer_after.tsv");
    write_wer_report(after, r.after_report);
    auto hyp = open_out(fs::path(e.out_dir) / "hyp_rescored.txt");
    write_transcripts(hyp, r.after, corpus, sc.data.lexicon);
  }
  std::cout << "before " << format_percent(r.before_report.corpus_wer()) << " after "
            << format_percent(r.after_report.corpus_wer()) << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"QE-driven acoustic model adaptation toolkit"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::string> sys = {"lexicon", "model", "priors", "corpus", "out"};
  std::vector<std::pair<CLI::App *, int (*)(const Config &)>> cmds = {
      {command(app, "gen", "generate lexicon, corpora and LM text", opt, kScenarioKeys), cmd_gen},
      {command(app, "train-lm", "train a Kneser-Ney n-gram LM", opt,
               {"lexicon", "text", "order", "discount", "classes", "out"}),
       cmd_train_lm},
      {command(app, "train-am", "train the baseline acoustic model", opt,
               with(kScenarioKeys, {"lexicon", "corpus", "priors_out"})),
       cmd_train_am},
      {command(app, "decode", "first-pass decoding with n-best and CN dumps", opt,
               with(sys, {"lm", "nbest", "lm_weight", "silence_penalty", "beam", "cn_temperature",
                          "optional_silence"})),
       cmd_decode},
      {command(app, "align", "forced alignment", opt, with(sys, {"transcripts", "optional_silence"})), cmd_align},
      {command(app, "qe-extract", "decode and extract the 41 QE features", opt,
               with(sys, {"lm", "lm_in", "lm_out", "class_lm", "nbest", "lm_weight", "silence_penalty", "beam",
                          "cn_temperature"})),
       cmd_qe_extract},
      {command(app, "qe-train", "tune and fit the XRT WER regressor", opt,
               {"features", "wer", "lexicon", "corpus", "seed", "qe_folds", "out"}),
       cmd_qe_train},
      {command(app, "qe-predict", "predict sentence WERs", opt, {"model", "features", "out"}), cmd_qe_predict},
      {command(app, "adapt", "KLD or oDLR adaptation", opt,
               with(with(sys, {"transcripts", "wer", "log"}), kScenarioKeys)),
       cmd_adapt},
      {command(app, "eval", "score hypotheses against references", opt, {"lexicon", "corpus", "hyp", "out"}),
       cmd_eval},
      {command(app, "two-pass", "first pass, QE, selection, adaptation, second pass", opt, kScenarioKeys),
       cmd_two_pass},
      {command(app, "grid", "alpha x adaptation-size sweep", opt, kScenarioKeys), cmd_grid},
      {command(app, "rescore", "n-best rescoring with the higher-order LM", opt, kScenarioKeys), cmd_rescore},
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error\tusage\t" << e.what() << '\n';
    return 2;
  }
  try {
    for (auto &[sub, fn] : cmds)
      if (sub->parsed())
        return fn(opt.resolve());
  } catch (const Error &e) {
    std::cerr << "error\t" << e.kind() << '\t' << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error\tinternal\t" << e.what() << '\n';
    return 1;
  }
  return 1;
}
