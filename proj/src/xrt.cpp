#include "qeadapt/qe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace qea {

double XrtTree::predict(std::span<const double> x) const {
  int n = 0;
  while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
    const auto &nd = nodes[static_cast<std::size_t>(n)];
    n = x[static_cast<std::size_t>(nd.feature)] < nd.value ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(n)].value;
}

namespace {

using Rng = std::mt19937_64;

struct Builder {
  const Matrix &x;
  const std::vector<double> &y;
  const XrtParams &p;
  Rng rng;
  XrtTree tree;

  double mean_of(const std::vector<std::size_t> &idx) const {
    double s = 0;
    for (auto i : idx)
      s += y[i];
    return s / static_cast<double>(idx.size());
  }

  // sum of squared deviations
  double sse(const std::vector<std::size_t> &idx) const {
    const double m = mean_of(idx);
    double s = 0;
    for (auto i : idx)
      s += (y[i] - m) * (y[i] - m);
    return s;
  }

  int grow(const std::vector<std::size_t> &idx) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    const bool constant_y =
        std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return y[i] == y[idx.front()]; });
    std::vector<std::size_t> candidates;
    std::vector<std::pair<double, double>> range(x.cols);
    if (static_cast<int>(idx.size()) > p.n_min && !constant_y) {
      for (std::size_t f = 0; f < x.cols; ++f) {
        double lo = x(idx.front(), f), hi = lo;
        for (auto i : idx) {
          lo = std::min(lo, x(i, f));
          hi = std::max(hi, x(i, f));
        }
        range[f] = {lo, hi};
        // needs room for a cut strictly inside (lo, hi)
        if (std::nextafter(lo, hi) < hi)
          candidates.push_back(f);
      }
    }
    if (candidates.empty()) {
      tree.nodes[static_cast<std::size_t>(id)].value = mean_of(idx);
      return id;
    }
    // k distinct features among the non-constant ones (partial Fisher-Yates)
    const std::size_t k = std::min(candidates.size(), static_cast<std::size_t>(p.k_features));
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
    }
    const double total = sse(idx);
    double best_gain = -1;
    int best_f = -1;
    double best_cut = 0;
    std::vector<std::size_t> l, r;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t f = candidates[c];
      const auto [lo, hi] = range[f];
      double cut;
      do {
        cut = lo + std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (hi - lo);
      } while (!(cut > lo && cut < hi));
      l.clear();
      r.clear();
      for (auto i : idx)
        (x(i, f) < cut ? l : r).push_back(i);
      const double gain = total - sse(l) - sse(r);
      if (gain > best_gain) {
        best_gain = gain;
        best_f = static_cast<int>(f);
        best_cut = cut;
      }
    }
    l.clear();
    r.clear();
    for (auto i : idx)
      (x(i, static_cast<std::size_t>(best_f)) < best_cut ? l : r).push_back(i);
    const int left = grow(l);
    const int right = grow(r);
    auto &nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = best_f;
    nd.value = best_cut;
    nd.left = left;
    nd.right = right;
    return id;
  }
};

} // namespace

XrtModel xrt_fit(const Matrix &features, const std::vector<double> &targets, const XrtParams &params) {
  require(features.rows >= 2, "invalid_argument", "XRT needs at least 2 samples");
  require(features.rows == targets.size(), "dimension", "feature rows and targets differ in length");
  require(params.n_bags >= 1 && params.trees_per_bag >= 1 && params.k_features >= 1 && params.n_min >= 1,
          "invalid_argument", "XRT parameters must all be >= 1");
  require(params.k_features <= static_cast<int>(features.cols), "invalid_argument",
          "k_features exceeds the feature dimension");
  for (double t : targets)
    require(t >= 0.0 && t <= 1.0, "invalid_argument", "XRT targets must lie in [0,1]");

  XrtModel model;
  model.n_features = static_cast<int>(features.cols);
  model.params = params;
  model.bags.resize(static_cast<std::size_t>(params.n_bags));
  const std::size_t n = features.rows;
  for (int b = 0; b < params.n_bags; ++b) {
    std::vector<std::size_t> sample(n);
    if (params.bootstrap) {
      Rng rng(derive_seed(params.seed, {static_cast<std::uint64_t>(b), 0xba9ULL}));
      std::uniform_int_distribution<std::size_t> d(0, n - 1);
      for (auto &s : sample)
        s = d(rng);
      std::sort(sample.begin(), sample.end());
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    auto &bag = model.bags[static_cast<std::size_t>(b)];
    bag.resize(static_cast<std::size_t>(params.trees_per_bag));
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < params.trees_per_bag; ++t) {
      Builder builder{features, targets, params,
                      Rng(derive_seed(params.seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(t)})),
                      {}};
      builder.grow(sample);
      bag[static_cast<std::size_t>(t)] = std::move(builder.tree);
    }
  }
  return model;
}

std::vector<double> xrt_tree_outputs(const XrtModel &model, std::span<const double> x) {
  require(static_cast<int>(x.size()) == model.n_features, "dimension",
          "feature vector has " + std::to_string(x.size()) + " entries, model expects " +
              std::to_string(model.n_features));
  std::vector<double> out;
  for (const auto &bag : model.bags)
    for (const auto &tree : bag)
      out.push_back(tree.predict(x));
  return out;
}

double xrt_predict(const XrtModel &model, std::span<const double> x) {
  const auto outs = xrt_tree_outputs(model, x);
  const double m = std::accumulate(outs.begin(), outs.end(), 0.0) / static_cast<double>(outs.size());
  return std::clamp(m, 0.0, 1.0);
}

std::vector<double> xrt_predict(const XrtModel &model, const Matrix &features) {
  std::vector<double> out(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r)
    out[r] = xrt_predict(model, features.row(r));
  return out;
}

double mae(const std::vector<double> &predictions, const std::vector<double> &oracle) {
  require(predictions.size() == oracle.size(), "dimension", "MAE inputs differ in length");
  require(!predictions.empty(), "invalid_argument", "MAE of empty lists");
  double s = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    s += std::abs(predictions[i] - oracle[i]);
  return s / static_cast<double>(predictions.size());
}

std::vector<int> speaker_folds(const std::vector<int> &speakers, int k, std::uint64_t seed) {
  std::vector<int> uniq(speakers.begin(), speakers.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  require(k >= 2, "invalid_argument", "cross-validation needs k >= 2");
  require(static_cast<std::size_t>(k) <= uniq.size(), "invalid_argument",
          "k = " + std::to_string(k) + " exceeds the number of speakers (" + std::to_string(uniq.size()) + ")");
  Rng rng(seed);
  std::shuffle(uniq.begin(), uniq.end(), rng);
  std::vector<int> fold(speakers.size());
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    const auto pos = std::find(uniq.begin(), uniq.end(), speakers[i]) - uniq.begin();
    fold[i] = static_cast<int>(pos % k);
  }
  return fold;
}

CvOutcome tune_cv(const Matrix &features, const std::vector<double> &targets, const std::vector<int> &speakers,
                  const std::vector<XrtParams> &grid, int k, std::uint64_t seed) {
  require(!grid.empty(), "invalid_argument", "empty XRT parameter grid");
  require(speakers.size() == features.rows && targets.size() == features.rows, "dimension",
          "features, targets and speakers differ in length");
  const auto fold = speaker_folds(speakers, k, seed);
  CvOutcome out;
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> oof(features.rows);
    for (int f = 0; f < k; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < features.rows; ++i)
        (fold[i] == f ? te : tr).push_back(i);
      Matrix xtr(tr.size(), features.cols);
      std::vector<double> ytr;
      for (std::size_t i = 0; i < tr.size(); ++i) {
        std::copy(features.row(tr[i]).begin(), features.row(tr[i]).end(), xtr.row(i).begin());
        ytr.push_back(targets[tr[i]]);
      }
      XrtParams p = grid[g];
      p.seed = derive_seed(grid[g].seed, {static_cast<std::uint64_t>(f)});
      const XrtModel m = xrt_fit(xtr, ytr, p);
      for (auto i : te)
        oof[i] = xrt_predict(m, features.row(i));
    }
    const double score = mae(oof, targets);
    out.scores.emplace_back(grid[g], score);
    bool take = g == 0;
    if (!take) {
      const auto &cur = grid[best];
      const double bs = out.scores[best].second;
      if (score < bs)
        take = true;
      else if (score == bs) {
        if (grid[g].total_trees() != cur.total_trees())
          take = grid[g].total_trees() < cur.total_trees();
        else
          take = grid[g].n_min > cur.n_min;
      }
    }
    if (take) {
      best = g;
      out.oof_predictions = oof;
    }
  }
  out.best = grid[best];
  return out;
}

std::vector<XrtParams> default_xrt_grid(std::uint64_t seed) {
  std::vector<XrtParams> grid;
  for (int bags : {1, 4})
    for (int trees : {8, 16})
      for (int n_min : {2, 5, 10, 20})
        for (int k : {6, 20, 41})
          grid.push_back({bags, trees, k, n_min, true, seed});
  return grid;
}

void save_xrt(std::ostream &out, const XrtModel &model) {
  const auto &p = model.params;
  out << "XRT " << model.n_features << ' ' << p.n_bags << ' ' << p.trees_per_bag << ' ' << p.k_features << ' '
      << p.n_min << ' ' << (p.bootstrap ? 1 : 0) << ' ' << p.seed << '\n';
  char buf[40];
  for (std::size_t b = 0; b < model.bags.size(); ++b)
    for (std::size_t t = 0; t < model.bags[b].size(); ++t) {
      out << "TREE " << b << ' ' << t << '\n';
      for (const auto &nd : model.bags[b][t].nodes) {
        std::snprintf(buf, sizeof(buf), "%.17g", nd.value);
        if (nd.feature < 0)
          out << "LEAF " << buf << '\n';
        else
          out << nd.feature << ' ' << buf << '\n';
      }
    }
}

namespace {

int read_subtree(const std::vector<std::pair<int, double>> &lines, std::size_t &pos, XrtTree &tree) {
  require(pos < lines.size(), "parse", "truncated XRT tree");
  const auto [feature, value] = lines[pos++];
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({feature, value, -1, -1});
  if (feature >= 0) {
    const int l = read_subtree(lines, pos, tree);
    const int r = read_subtree(lines, pos, tree);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
  }
  return id;
}

} // namespace

XrtModel load_xrt(std::istream &in) {
  std::string tag;
  XrtModel m;
  int bootstrap = 0;
  in >> tag >> m.n_features >> m.params.n_bags >> m.params.trees_per_bag >> m.params.k_features >> m.params.n_min >>
      bootstrap >> m.params.seed;
  require(in && tag == "XRT", "parse", "not an XRT model file");
  m.params.bootstrap = bootstrap != 0;
  m.bags.assign(static_cast<std::size_t>(m.params.n_bags),
                std::vector<XrtTree>(static_cast<std::size_t>(m.params.trees_per_bag)));
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<int, double>> lines;
  std::size_t bag = 0, tree = 0;
  bool have = false;
  const auto flush = [&] {
    if (!have)
      return;
    require(bag < m.bags.size() && tree < m.bags[bag].size(), "parse", "XRT tree index out of range");
    std::size_t pos = 0;
    read_subtree(lines, pos, m.bags[bag][tree]);
    require(pos == lines.size(), "parse", "trailing nodes in XRT tree");
    lines.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::istringstream ss(line);
    std::string head;
    ss >> head;
    if (head == "TREE") {
      flush();
      ss >> bag >> tree;
      have = true;
    } else if (head == "LEAF") {
      double v;
      ss >> v;
      lines.emplace_back(-1, v);
    } else {
      double v;
      ss >> v;
      lines.emplace_back(std::stoi(head), v);
    }
    require(static_cast<bool>(ss), "parse", "bad XRT line: " + line);
  }
  flush();
  return m;
}

void write_predictions(std::ostream &out, const std::vector<std::string> &ids, const std::vector<double> &pwer) {
  require(ids.size() == pwer.size(), "dimension", "prediction ids and values differ in length");
  char buf[40];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", pwer[i]);
    out << ids[i] << '\t' << buf << '\n';
  }
}

std::map<std::string, double> read_predictions(std::istream &in) {
  std::map<std::string, double> out;
  std::string id;
  double v;
  while (in >> id >> v)
    out[id] = v;
  return out;
}

} // namespace qea
