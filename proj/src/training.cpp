#include "stochnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "stochnet/random.hpp"

namespace stochnet {

TrainingDiverged::TrainingDiverged(std::size_t step, double loss)
    : Error("diverged", [&] {
        std::ostringstream os;
        os << "non-finite loss " << loss << " at step " << step;
        return os.str();
      }()),
      step_(step),
      loss_(loss) {}

void SGDConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValueError("learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ValueError("batch size must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValueError("lr decay must lie in (0, 1]");
}

namespace {

void write_preamble(std::ostringstream& os, const std::string& preamble) {
  if (preamble.empty()) return;
  std::istringstream lines(preamble);
  for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string TrainingLog::to_csv(const std::string& preamble) const {
  std::ostringstream os;
  write_preamble(os, preamble);
  os << "epoch,train_error,test_error,mean_loss\n";
  for (const auto& r : epochs)
    os << r.epoch << ',' << fixed6(r.train_error) << ',' << fixed6(r.test_error) << ','
       << fixed6(r.mean_loss) << '\n';
  return os.str();
}

std::string TrainingLog::iterations_csv(const std::string& preamble) const {
  std::ostringstream os;
  write_preamble(os, preamble);
  os << "step,epoch,loss\n";
  for (const auto& r : iterations) os << r.step << ',' << r.epoch << ',' << fixed6(r.loss) << '\n';
  return os.str();
}

TrainingLog TrainingLog::from_csv(const std::string& text) {
  TrainingLog log;
  std::istringstream in(text);
  bool header_seen = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "epoch,train_error,test_error,mean_loss")
        throw ValueError("training log: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    EpochRecord r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream row(line);
    if (!(row >> r.epoch >> c1 >> r.train_error >> c2 >> r.test_error >> c3 >> r.mean_loss) ||
        c1 != ',' || c2 != ',' || c3 != ',')
      throw ValueError("training log: malformed row at line " + std::to_string(line_no));
    log.epochs.push_back(r);
  }
  if (!header_seen) throw ValueError("training log: missing header");
  return log;
}

SgdMomentum::SgdMomentum(const Network& net)
    : weight_velocity_(net.layers().size()), bias_velocity_(net.layers().size()) {
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    if (const MaskedParameters* p = parameters_of(net.layers()[i])) {
      weight_velocity_[i] = Tensor(p->weights().shape());
      bias_velocity_[i] = Tensor(p->bias().shape());
    }
  }
}

void SgdMomentum::step(Network& net, const Gradients& grads, double learning_rate,
                       double momentum) {
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    MaskedParameters* p = parameters_of(net.layers()[i]);
    if (!p || p->frozen() || !grads.layers[i]) continue;
    const ParamGrads& g = *grads.layers[i];
    auto vw = weight_velocity_[i].data();
    auto vb = bias_velocity_[i].data();
    const auto gw = g.weights.data();
    const auto gb = g.bias.data();
    const ConnectivityMask& mask = p->mask();
    for (std::size_t j = 0; j < vw.size(); ++j)
      vw[j] = mask[j] ? momentum * vw[j] - learning_rate * gw[j] : 0.0;
    for (std::size_t j = 0; j < vb.size(); ++j) vb[j] = momentum * vb[j] - learning_rate * gb[j];
    p->update(vw, vb);
  }
}

namespace {

// Samples as seen by layer `first`: raw images when first == 0, otherwise the
// cached output of the frozen layers below it. Every kernel treats images
// independently, so caching does not change any result.
struct SampleSource {
  Tensor features;
  const std::vector<int>* labels = nullptr;
  std::size_t first = 0;

  std::size_t size() const { return labels->size(); }
};

void copy_rows(const Tensor& src, std::span<const std::size_t> order, std::size_t begin,
               std::size_t end, Tensor& out) {
  const std::size_t per = src.numel() / src.dim(0);
  const std::size_t count = end - begin;
  if (out.shape().rank() != src.shape().rank() || out.dim(0) != count) {
    std::vector<std::size_t> dims(src.shape().dims().begin(), src.shape().dims().end());
    dims[0] = count;
    out = Tensor(Shape(std::move(dims)));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t row = order.empty() ? begin + i : order[begin + i];
    std::copy_n(src.data().begin() + row * per, per, out.data().begin() + i * per);
  }
}

constexpr std::size_t kEvalBatch = 64;

SampleSource make_source(const Network& net, const Dataset& d, std::size_t first) {
  SampleSource s{{}, &d.labels, first};
  if (first == 0) {
    s.features = d.images;
    return s;
  }
  Tensor batch;
  std::vector<int> unused;
  for (std::size_t begin = 0; begin < d.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(d.size(), begin + kEvalBatch);
    extract_batch(d, {}, begin, end, batch, unused);
    const Tensor out = net.forward_range(batch, 0, first);
    if (begin == 0) {
      std::vector<std::size_t> dims(out.shape().dims().begin(), out.shape().dims().end());
      dims[0] = d.size();
      s.features = Tensor(Shape(std::move(dims)));
    }
    std::copy(out.data().begin(), out.data().end(),
              s.features.data().begin() + begin * (out.numel() / out.dim(0)));
  }
  return s;
}

std::size_t count_errors(const Tensor& logits, std::span<const int> labels) {
  const std::size_t classes = logits.dim(1);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data().data() + i * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    if (static_cast<int>(best) != labels[i]) ++wrong;
  }
  return wrong;
}

double evaluate_source(const Network& net, const SampleSource& s) {
  std::size_t wrong = 0;
  Tensor batch;
  for (std::size_t begin = 0; begin < s.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(s.size(), begin + kEvalBatch);
    copy_rows(s.features, {}, begin, end, batch);
    const Tensor logits = net.forward_range(batch, s.first, net.layers().size());
    wrong += count_errors(logits, std::span<const int>(*s.labels).subspan(begin, end - begin));
  }
  return static_cast<double>(wrong) / static_cast<double>(s.size());
}

}  // namespace

double evaluate(const Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  if (batch_size == 0) batch_size = kEvalBatch;
  std::size_t wrong = 0;
  Tensor batch;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    extract_batch(data, {}, begin, end, batch, labels);
    wrong += count_errors(net.forward(batch), labels);
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

TrainingLog train(Network& net, const Dataset& train_set, const Dataset& test_set,
                  const SGDConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (test_set.size() == 0) throw DataError("test set is empty");
  TrainingLog log;
  if (cfg.epochs == 0) return log;

  // Nothing below the lowest trainable layer changes during training.
  const std::size_t first = std::min(net.trainable_begin(), net.layers().size() - 1);
  const SampleSource train_src = make_source(net, train_set, first);
  const SampleSource test_src = make_source(net, test_set, first);

  SgdMomentum optimizer(net);
  const CounterStream shuffle(cfg.shuffle_seed);
  const std::size_t n = train_set.size();
  std::size_t step = 0;
  Tensor batch;
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    const auto order = seeded_permutation(n, shuffle.bits(epoch));
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      copy_rows(train_src.features, order, begin, end, batch);
      labels.resize(end - begin);
      for (std::size_t i = begin; i < end; ++i) labels[i - begin] = train_set.labels[order[i]];
      const ForwardTrace trace = net.forward_trace(batch, first);
      const LossResult loss = softmax_cross_entropy(trace.logits, labels);
      ++step;
      if (!std::isfinite(loss.loss)) throw TrainingDiverged(step, loss.loss);
      const Gradients grads = net.backward(trace, loss.grad_logits);
      optimizer.step(net, grads, lr, cfg.momentum);
      loss_sum += loss.loss * static_cast<double>(end - begin);
      if (cfg.log_iterations) log.iterations.push_back({step, epoch + 1, loss.loss});
      if (hooks.after_step) hooks.after_step(step, net, optimizer);
    }
    log.epochs.push_back({epoch + 1, evaluate_source(net, train_src),
                          evaluate_source(net, test_src), loss_sum / static_cast<double>(n)});
  }
  return log;
}

std::vector<LayerFreezeInfo> freeze_report(const Network& net) {
  std::vector<LayerFreezeInfo> out;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& layer = net.layers()[i];
    if (const MaskedParameters* p = parameters_of(layer))
      out.push_back({i, kind_of(layer), p->frozen(), p->param_count(), p->surviving_count()});
  }
  return out;
}

}  // namespace stochnet
