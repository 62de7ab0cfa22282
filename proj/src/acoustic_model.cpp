#include "qeadapt/acoustic_model.hpp"
#include "qeadapt/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace qea {

namespace k = kernels;

std::size_t AcousticModel::num_parameters() const {
  std::size_t n = 0;
  for (const auto &l : layers)
    n += l.weights.data.size() + l.bias.size();
  if (odlr)
    n += odlr->weights.data.size() + odlr->bias.size();
  return n;
}

std::uint64_t AcousticModel::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto &l : layers) {
    h = fnv1a(l.weights.data.data(), l.weights.data.size() * sizeof(double), h);
    h = fnv1a(l.bias.data(), l.bias.size() * sizeof(double), h);
  }
  if (odlr) {
    h = fnv1a(odlr->weights.data.data(), odlr->weights.data.size() * sizeof(double), h);
    h = fnv1a(odlr->bias.data(), odlr->bias.size() * sizeof(double), h);
  }
  return h;
}

AcousticModel init_model(std::uint64_t seed, const Layout &layout) {
  require(!layout.hidden.empty(), "invalid_argument", "at least one hidden layer is required");
  require(layout.feature_dim > 0 && layout.context >= 0 && layout.outputs > 0, "invalid_argument",
          "feature_dim, outputs must be positive and context non-negative");
  for (int h : layout.hidden)
    require(h > 0, "invalid_argument", "zero-sized hidden layer");

  std::mt19937_64 rng(seed);
  AcousticModel m;
  m.feature_dim = layout.feature_dim;
  m.context = layout.context;
  std::vector<int> sizes = {layout.input_dim()};
  sizes.insert(sizes.end(), layout.hidden.begin(), layout.hidden.end());
  sizes.push_back(layout.outputs);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto in = static_cast<std::size_t>(sizes[i]);
    const auto out = static_cast<std::size_t>(sizes[i + 1]);
    const double r = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> U(-r, r);
    Layer l{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double &w : l.weights.data)
      w = U(rng);
    m.layers.push_back(std::move(l));
  }
  return m;
}

AcousticModel with_identity_transform(const AcousticModel &model) {
  AcousticModel m = model;
  const auto I = static_cast<std::size_t>(model.outputs());
  OutputTransform t{Matrix(I, I), std::vector<double>(I, 0.0)};
  for (std::size_t i = 0; i < I; ++i)
    t.weights(i, i) = 1.0;
  m.odlr = std::move(t);
  return m;
}

Matrix splice(const Matrix &frames, int context) {
  const std::size_t T = frames.rows, D = frames.cols;
  const auto W = static_cast<std::size_t>(2 * context + 1);
  Matrix out(T, D * W);
  const auto last = static_cast<std::ptrdiff_t>(T) - 1;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t w = 0; w < W; ++w) {
      const std::ptrdiff_t src =
          std::clamp(static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(w) - context, std::ptrdiff_t{0}, last);
      const auto r = frames.row(static_cast<std::size_t>(src));
      std::copy(r.begin(), r.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t * D * W + w * D));
    }
  }
  return out;
}

namespace {

// Activations kept for backprop: acts[0] = input, acts[l] = output of layer l;
// logits = final pre-transform activations, posteriors = softmax output.
struct ForwardPass {
  std::vector<Matrix> acts;
  Matrix logits;
  Matrix posteriors;
};

void affine(const Matrix &x, const Layer &l, Matrix &out) {
  out = Matrix(x.rows, l.weights.rows);
  k::gemm_abt(x.data, l.weights.data, out.data, x.rows, l.weights.rows, x.cols);
  k::add_row_bias(out.data, l.bias, out.rows, out.cols);
}

ForwardPass run_forward(const AcousticModel &model, const Matrix &input) {
  require(static_cast<int>(input.cols) == model.input_dim(), "dimension",
          "input has " + std::to_string(input.cols) + " columns, model expects " +
              std::to_string(model.input_dim()));
  ForwardPass fp;
  fp.acts.push_back(input);
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    Matrix z;
    affine(fp.acts.back(), model.layers[l], z);
    k::sigmoid(z.data);
    fp.acts.push_back(std::move(z));
  }
  affine(fp.acts.back(), model.layers.back(), fp.logits);
  if (model.odlr) {
    Layer t{model.odlr->weights, model.odlr->bias};
    affine(fp.logits, t, fp.posteriors);
  } else {
    fp.posteriors = fp.logits;
  }
  k::softmax_rows(fp.posteriors.data, fp.posteriors.rows, fp.posteriors.cols);
  return fp;
}

} // namespace

Matrix forward_spliced(const AcousticModel &model, const Matrix &input) {
  return run_forward(model, input).posteriors;
}

Matrix forward(const AcousticModel &model, const Matrix &frames) {
  require(static_cast<int>(frames.cols) == model.feature_dim, "dimension",
          "frames have dimension " + std::to_string(frames.cols) + ", model expects " +
              std::to_string(model.feature_dim));
  return forward_spliced(model, splice(frames, model.context));
}

LossAndGrad ce_loss_and_grad_spliced(const AcousticModel &model, const Matrix &input, const Matrix &targets,
                                     TrainScope scope) {
  require(targets.rows == input.rows && static_cast<int>(targets.cols) == model.outputs(), "dimension",
          "targets shape does not match input/model");
  require(scope == TrainScope::All || model.odlr.has_value(), "invalid_argument",
          "output-transform training needs a model with an output transform");
  const ForwardPass fp = run_forward(model, input);
  const std::size_t B = input.rows;
  const std::size_t I = targets.cols;
  const double invB = 1.0 / static_cast<double>(B);

  LossAndGrad r;
  Matrix delta(B, I);
  for (std::size_t i = 0; i < B * I; ++i) {
    const double p = fp.posteriors.data[i];
    const double t = targets.data[i];
    if (t != 0.0)
      r.loss -= t * std::log(std::max(p, kPosteriorFloor));
    delta.data[i] = (p - t) * invB;
  }
  r.loss *= invB;

  if (model.odlr) {
    OutputTransform g{Matrix(I, I), std::vector<double>(I)};
    k::gemm_atb(delta.data, fp.logits.data, g.weights.data, B, I, I);
    k::column_sums(delta.data, g.bias, B, I);
    r.grad.odlr = std::move(g);
    if (scope == TrainScope::OutputTransformOnly)
      return r;
    Matrix back(B, I);
    k::gemm_ab(delta.data, model.odlr->weights.data, back.data, B, I, I);
    delta = std::move(back);
  }

  r.grad.layers.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer &layer = model.layers[l];
    const Matrix &a_in = fp.acts[l];
    Layer &g = r.grad.layers[l];
    g.weights = Matrix(layer.weights.rows, layer.weights.cols);
    g.bias.assign(layer.bias.size(), 0.0);
    k::gemm_atb(delta.data, a_in.data, g.weights.data, B, layer.weights.rows, layer.weights.cols);
    k::column_sums(delta.data, g.bias, B, layer.weights.rows);
    if (l == 0)
      break;
    Matrix prev(B, layer.weights.cols);
    k::gemm_ab(delta.data, layer.weights.data, prev.data, B, layer.weights.rows, layer.weights.cols);
    for (std::size_t i = 0; i < prev.data.size(); ++i) {
      const double a = a_in.data[i];
      prev.data[i] *= a * (1.0 - a);
    }
    delta = std::move(prev);
  }
  return r;
}

LossAndGrad ce_loss_and_grad(const AcousticModel &model, const Matrix &frames, const Matrix &targets,
                             TrainScope scope) {
  return ce_loss_and_grad_spliced(model, splice(frames, model.context), targets, scope);
}

std::vector<double> flatten(const AcousticModel &model) {
  std::vector<double> out;
  out.reserve(model.num_parameters());
  for (const auto &l : model.layers) {
    out.insert(out.end(), l.weights.data.begin(), l.weights.data.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  if (model.odlr) {
    out.insert(out.end(), model.odlr->weights.data.begin(), model.odlr->weights.data.end());
    out.insert(out.end(), model.odlr->bias.begin(), model.odlr->bias.end());
  }
  return out;
}

void unflatten(AcousticModel &model, const std::vector<double> &flat) {
  require(flat.size() == model.num_parameters(), "dimension", "flat parameter vector has the wrong length");
  auto it = flat.begin();
  const auto take = [&](std::vector<double> &dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  for (auto &l : model.layers) {
    take(l.weights.data);
    take(l.bias);
  }
  if (model.odlr) {
    take(model.odlr->weights.data);
    take(model.odlr->bias);
  }
}

std::vector<double> flatten(const Gradient &grad) {
  std::vector<double> out;
  for (const auto &l : grad.layers) {
    out.insert(out.end(), l.weights.data.begin(), l.weights.data.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  if (grad.odlr) {
    out.insert(out.end(), grad.odlr->weights.data.begin(), grad.odlr->weights.data.end());
    out.insert(out.end(), grad.odlr->bias.begin(), grad.odlr->bias.end());
  }
  return out;
}

double l2_norm(const Gradient &grad) {
  double s = 0.0;
  for (double v : flatten(grad))
    s += v * v;
  return std::sqrt(s);
}

namespace {

std::size_t argmax(std::span<const double> r) {
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

void sgd_step(std::vector<double> &param, const std::vector<double> &grad, double step) {
  for (std::size_t i = 0; i < param.size(); ++i)
    param[i] -= step * grad[i];
}

} // namespace

double frame_accuracy(const AcousticModel &model, const std::vector<TrainItem> &items) {
  std::size_t correct = 0, total = 0;
  for (const auto &it : items) {
    const Matrix post = forward_spliced(model, it.input);
    for (std::size_t t = 0; t < post.rows; ++t)
      correct += argmax(post.row(t)) == argmax(it.targets.row(t)) ? 1 : 0;
    total += post.rows;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

TrainResult train(const AcousticModel &init, const std::vector<TrainItem> &data, const TrainSchedule &schedule,
                  const std::vector<TrainItem> &cv, TrainScope scope) {
  require(!data.empty() && !cv.empty(), "invalid_argument", "training needs non-empty data and cv sets");
  require(schedule.batch_size >= 1, "invalid_argument", "batch_size must be >= 1");
  require(schedule.stop_threshold > 0.0 && schedule.stop_threshold <= schedule.halve_threshold, "invalid_argument",
          "need 0 < stop_threshold <= halve_threshold");

  TrainResult res;
  res.model = scope == TrainScope::OutputTransformOnly && !init.odlr ? with_identity_transform(init) : init;
  double best_acc = frame_accuracy(res.model, cv);
  res.initial_cv_accuracy = best_acc;
  if (schedule.max_epochs <= 0)
    return res;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> index;
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(data[i].input.rows == data[i].targets.rows, "dimension", "input/target length mismatch");
    for (std::size_t t = 0; t < data[i].input.rows; ++t)
      index.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t));
  }
  const std::size_t in_dim = data.front().input.cols;
  const std::size_t out_dim = data.front().targets.cols;
  std::mt19937_64 rng(schedule.seed);
  double lr = schedule.learning_rate;
  bool halved = false;

  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    AcousticModel cand = res.model;
    std::shuffle(index.begin(), index.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < index.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t B = std::min(static_cast<std::size_t>(schedule.batch_size), index.size() - start);
      Matrix bx(B, in_dim), bt(B, out_dim);
      for (std::size_t b = 0; b < B; ++b) {
        const auto [ui, ti] = index[start + b];
        const auto xr = data[ui].input.row(ti);
        const auto tr = data[ui].targets.row(ti);
        std::copy(xr.begin(), xr.end(), bx.row(b).begin());
        std::copy(tr.begin(), tr.end(), bt.row(b).begin());
      }
      const LossAndGrad lg = ce_loss_and_grad_spliced(cand, bx, bt, scope);
      if (!std::isfinite(lg.loss))
        fail("divergence", "training loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += lg.loss * static_cast<double>(B);
      // per-frame learning rate: step on the summed (not averaged) gradient
      const double step = lr * static_cast<double>(B);
      if (scope == TrainScope::All) {
        for (std::size_t l = 0; l < cand.layers.size(); ++l) {
          sgd_step(cand.layers[l].weights.data, lg.grad.layers[l].weights.data, step);
          sgd_step(cand.layers[l].bias, lg.grad.layers[l].bias, step);
        }
      }
      if (cand.odlr && lg.grad.odlr) {
        sgd_step(cand.odlr->weights.data, lg.grad.odlr->weights.data, step);
        sgd_step(cand.odlr->bias, lg.grad.odlr->bias, step);
      }
    }
    const double acc = frame_accuracy(cand, cv);
    EpochLog log{epoch, lr, acc, loss_sum / static_cast<double>(index.size()), acc > best_acc};
    res.log.push_back(log);
    // a rejected epoch counts as zero improvement
    double rel = 0.0;
    if (log.accepted) {
      rel = (acc - best_acc) / std::max(best_acc, 1e-12);
      res.model = std::move(cand);
      best_acc = acc;
    }
    if (halved && rel < schedule.stop_threshold)
      break;
    if (rel < schedule.halve_threshold) {
      lr *= 0.5;
      halved = true;
    }
  }
  return res;
}

Priors estimate_priors(const std::vector<std::vector<int>> &alignments, int num_states, double floor) {
  require(num_states > 0, "invalid_argument", "num_states must be positive");
  require(floor > 0.0 && floor * num_states < 1.0, "invalid_argument", "floor must be in (0, 1/num_states)");
  std::vector<double> counts(static_cast<std::size_t>(num_states), 0.0);
  double total = 0.0;
  for (const auto &a : alignments)
    for (int s : a) {
      require(s >= 0 && s < num_states, "invalid_argument", "alignment state out of range");
      counts[static_cast<std::size_t>(s)] += 1.0;
      total += 1.0;
    }
  require(total > 0.0, "invalid_argument", "empty alignment set");

  Priors p;
  p.floor = floor;
  p.values.assign(counts.size(), 0.0);
  std::vector<bool> fixed(counts.size(), false);
  for (;;) {
    double free_mass = 0.0;
    std::size_t n_fixed = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (fixed[i])
        ++n_fixed;
      else
        free_mass += counts[i];
    }
    const double budget = 1.0 - static_cast<double>(n_fixed) * floor;
    bool changed = false;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (fixed[i]) {
        p.values[i] = floor;
        continue;
      }
      p.values[i] = free_mass > 0.0 ? counts[i] / free_mass * budget : 0.0;
      if (p.values[i] < floor) {
        fixed[i] = true;
        changed = true;
      }
    }
    if (!changed)
      break;
  }
  return p;
}

Priors uniform_priors(int num_states) {
  Priors p;
  p.values.assign(static_cast<std::size_t>(num_states), 1.0 / num_states);
  p.floor = 1.0 / num_states;
  return p;
}

Matrix scaled_loglik(const Matrix &posteriors, const Priors &priors) {
  require(posteriors.cols == priors.values.size(), "dimension", "priors size does not match posteriors");
  Matrix out(posteriors.rows, posteriors.cols);
  std::vector<double> lp(priors.values.size());
  for (std::size_t i = 0; i < lp.size(); ++i)
    lp[i] = std::log(priors.values[i]);
  for (std::size_t t = 0; t < posteriors.rows; ++t)
    for (std::size_t i = 0; i < posteriors.cols; ++i)
      out(t, i) = std::log(std::max(posteriors(t, i), kPosteriorFloor)) - lp[i];
  return out;
}

namespace {

void put_f64(std::ostream &out, const std::vector<double> &v) {
  for (double x : v) {
    const auto u = std::bit_cast<std::uint64_t>(x);
    char b[8];
    for (int i = 0; i < 8; ++i)
      b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    out.write(b, 8);
  }
}

void get_f64(std::istream &in, std::vector<double> &v) {
  for (double &x : v) {
    unsigned char b[8];
    in.read(reinterpret_cast<char *>(b), 8);
    require(in.gcount() == 8, "format", "truncated model parameters");
    std::uint64_t u = 0;
    for (int i = 7; i >= 0; --i)
      u = (u << 8) | b[i];
    x = std::bit_cast<double>(u);
  }
}

} // namespace

void save_model(std::ostream &out, const AcousticModel &model) {
  out << "MLP " << model.layers.size() << ' ' << model.layers.front().weights.cols;
  for (const auto &l : model.layers)
    out << ' ' << l.weights.rows;
  out << ' ' << model.context << '\n';
  for (const auto &l : model.layers) {
    put_f64(out, l.weights.data);
    put_f64(out, l.bias);
  }
  if (model.odlr) {
    out << "ODLR\n";
    put_f64(out, model.odlr->weights.data);
    put_f64(out, model.odlr->bias);
  }
}

AcousticModel load_model(std::istream &in) {
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string tag;
  std::size_t n_layers = 0;
  hs >> tag >> n_layers;
  require(tag == "MLP" && n_layers >= 1, "format", "bad model header: " + header);
  std::vector<std::size_t> sizes(n_layers + 1);
  for (auto &s : sizes)
    hs >> s;
  AcousticModel m;
  hs >> m.context;
  require(!hs.fail(), "format", "bad model header: " + header);
  const auto W = static_cast<std::size_t>(2 * m.context + 1);
  require(sizes[0] % W == 0, "format", "input size not divisible by splice width");
  m.feature_dim = static_cast<int>(sizes[0] / W);
  for (std::size_t i = 0; i < n_layers; ++i) {
    Layer l{Matrix(sizes[i + 1], sizes[i]), std::vector<double>(sizes[i + 1])};
    get_f64(in, l.weights.data);
    get_f64(in, l.bias);
    m.layers.push_back(std::move(l));
  }
  std::string tail;
  if (std::getline(in, tail) && tail == "ODLR") {
    const std::size_t I = sizes.back();
    OutputTransform t{Matrix(I, I), std::vector<double>(I)};
    get_f64(in, t.weights.data);
    get_f64(in, t.bias);
    m.odlr = std::move(t);
  }
  return m;
}

void save_model(const std::string &path, const AcousticModel &model) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io", "cannot write " + path);
  save_model(out, model);
}

AcousticModel load_model(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io", "cannot read " + path);
  return load_model(in);
}

void save_priors(const std::string &path, const Priors &priors) {
  std::ofstream out(path);
  require(out.good(), "io", "cannot write " + path);
  out << "PRIORS " << priors.values.size() << ' ' << std::setprecision(17) << priors.floor << '\n';
  for (double v : priors.values)
    out << std::setprecision(17) << v << '\n';
}

Priors load_priors(const std::string &path) {
  std::ifstream in(path);
  require(in.good(), "io", "cannot read " + path);
  std::string tag;
  std::size_t n = 0;
  Priors p;
  in >> tag >> n >> p.floor;
  require(tag == "PRIORS", "format", "bad priors header in " + path);
  p.values.resize(n);
  for (double &v : p.values)
    in >> v;
  require(!in.fail(), "format", "truncated priors in " + path);
  return p;
}

} // namespace qea
