#include "bpgrad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bpgrad/errors.hpp"
#include "bpgrad/format.hpp"

namespace bpgrad {

namespace {

void softmax_rows(Matrix& z) {
  for (std::size_t r = 0; r < z.rows; ++r) {
    double* row = z.data.data() + r * z.cols;
    const double m = *std::max_element(row, row + z.cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < z.cols; ++c) {
      row[c] = std::exp(row[c] - m);
      sum += row[c];
    }
    for (std::size_t c = 0; c < z.cols; ++c) row[c] /= sum;
  }
}

// Gradient w.r.t. the pre-activation given the gradient w.r.t. the output.
void back_through_activation(Activation act, const Matrix& out, Matrix& d) {
  switch (act) {
    case Activation::identity: return;
    case Activation::relu:
      for (std::size_t k = 0; k < d.data.size(); ++k) {
        if (!(out.data[k] > 0.0)) d.data[k] = 0.0;
      }
      return;
    case Activation::softmax_output:
      for (std::size_t r = 0; r < d.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d.cols; ++c) s += d(r, c) * out(r, c);
        for (std::size_t c = 0; c < d.cols; ++c) d(r, c) = out(r, c) * (d(r, c) - s);
      }
      return;
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax_output: return "softmax_output";
  }
  return "unknown";
}

std::string to_string(LossKind k) {
  return k == LossKind::softmax_cross_entropy ? "softmax_cross_entropy" : "mean_squared";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  if (s == "softmax_output") return Activation::softmax_output;
  throw InvalidInput("unknown activation '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "softmax_cross_entropy") return LossKind::softmax_cross_entropy;
  if (s == "mean_squared") return LossKind::mean_squared;
  throw InvalidInput("unknown loss '" + std::string(s) + "'");
}

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
    : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), biases(out_dim, 0.0),
      activation(act) {
  if (in == 0 || out == 0) throw ContractError("layer sizes must be positive");
}

Mlp::Mlp(std::vector<DenseLayer> layers, LossKind loss) : layers_(std::move(layers)), loss_(loss) {
  if (layers_.empty()) throw ContractError("an MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.weights.size() != layer.in * layer.out || layer.biases.size() != layer.out) {
      throw ContractError("layer " + std::to_string(l) + " storage does not match its shape");
    }
    if (l > 0 && layers_[l - 1].out != layer.in) {
      throw ContractError("layer " + std::to_string(l) + " input does not match previous output");
    }
    if (layer.activation == Activation::softmax_output && l + 1 != layers_.size()) {
      throw ContractError("softmax_output is only allowed on the last layer");
    }
    param_count_ += layer.param_count();
  }
  if (loss_ == LossKind::softmax_cross_entropy &&
      layers_.back().activation != Activation::softmax_output) {
    throw ContractError("cross-entropy loss needs a softmax_output last layer");
  }
}

std::size_t Mlp::input_dim() const { return layers_.at(0).in; }
std::size_t Mlp::output_dim() const { return layers_.at(layers_.size() - 1).out; }

std::vector<std::size_t> Mlp::sizes() const {
  std::vector<std::size_t> s;
  if (layers_.empty()) return s;
  s.push_back(layers_.front().in);
  for (const DenseLayer& l : layers_) s.push_back(l.out);
  return s;
}

ParamVector Mlp::flatten() const {
  std::vector<double> v;
  v.reserve(param_count_);
  for (const DenseLayer& l : layers_) {
    v.insert(v.end(), l.weights.begin(), l.weights.end());
    v.insert(v.end(), l.biases.begin(), l.biases.end());
  }
  return ParamVector(std::move(v));
}

void Mlp::unflatten(const ParamVector& params) {
  if (params.size() != param_count_) {
    throw ContractError("unflatten: expected " + std::to_string(param_count_) + " parameters, got " +
                        std::to_string(params.size()));
  }
  auto it = params.begin();
  for (DenseLayer& l : layers_) {
    std::copy_n(it, l.weights.size(), l.weights.begin());
    it += static_cast<std::ptrdiff_t>(l.weights.size());
    std::copy_n(it, l.biases.size(), l.biases.begin());
    it += static_cast<std::ptrdiff_t>(l.biases.size());
  }
}

Mlp make_mlp(const std::vector<std::size_t>& sizes, LossKind loss) {
  if (sizes.size() < 2) throw InvalidInput("an MLP needs at least input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const bool last = l + 2 == sizes.size();
    Activation act = Activation::relu;
    if (last) {
      act = loss == LossKind::softmax_cross_entropy ? Activation::softmax_output
                                                    : Activation::identity;
    }
    layers.emplace_back(sizes[l], sizes[l + 1], act);
  }
  return Mlp(std::move(layers), loss);
}

Mlp init_gaussian(const std::vector<std::size_t>& sizes, double sigma, std::uint64_t seed,
                  LossKind loss) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("init_gaussian: sigma must be > 0");
  Mlp m = make_mlp(sizes, loss);
  Rng rng(seed);
  for (DenseLayer& l : m.layers()) {
    for (double& w : l.weights) w = rng.normal(0.0, sigma);
  }
  return m;
}

ForwardPass forward(const Mlp& model, const Matrix& batch) {
  if (model.layers().empty()) throw ContractError("forward: empty model");
  if (batch.cols != model.input_dim()) {
    throw ContractError("forward: batch width " + std::to_string(batch.cols) +
                        " does not match input size " + std::to_string(model.input_dim()));
  }
  ForwardPass pass;
  pass.activations.reserve(model.layers().size() + 1);
  pass.activations.push_back(batch);
  for (const DenseLayer& layer : model.layers()) {
    const Matrix& a = pass.activations.back();
    Matrix z(a.rows, layer.out);
    for (std::size_t r = 0; r < a.rows; ++r) {
      const double* x = a.data.data() + r * a.cols;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* w = layer.weights.data() + o * layer.in;
        double s = layer.biases[o];
        for (std::size_t i = 0; i < layer.in; ++i) s += w[i] * x[i];
        z(r, o) = s;
      }
    }
    switch (layer.activation) {
      case Activation::identity: break;
      case Activation::relu:
        for (double& v : z.data) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::softmax_output: softmax_rows(z); break;
    }
    pass.activations.push_back(std::move(z));
  }
  pass.outputs = pass.activations.back();
  return pass;
}

LossAndGrad loss_and_grad(const Mlp& model, const Matrix& batch,
                          std::span<const std::size_t> labels, double decay) {
  if (batch.rows == 0) throw ContractError("loss_and_grad: empty batch");
  if (labels.size() != batch.rows) throw ContractError("loss_and_grad: label count mismatch");
  const std::size_t classes = model.output_dim();
  for (std::size_t y : labels) {
    if (y >= classes) throw ContractError("loss_and_grad: label out of range");
  }
  const ForwardPass pass = forward(model, batch);
  const auto& layers = model.layers();
  const std::size_t n = batch.rows;
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix& out = pass.outputs;

  double loss = 0.0;
  Matrix delta(n, classes);
  if (model.loss() == LossKind::softmax_cross_entropy) {
    // Recompute log-softmax from the last layer's logits for accuracy.
    const DenseLayer& last = layers.back();
    const Matrix& a = pass.activations[layers.size() - 1];
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> z(classes);
      for (std::size_t o = 0; o < classes; ++o) {
        double s = last.biases[o];
        for (std::size_t i = 0; i < last.in; ++i) s += last.weights[o * last.in + i] * a(r, i);
        z[o] = s;
      }
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - m);
      loss += (m + std::log(sum)) - z[labels[r]];
      for (std::size_t o = 0; o < classes; ++o) {
        delta(r, o) = (out(r, o) - (o == labels[r] ? 1.0 : 0.0)) * inv_n;
      }
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t o = 0; o < classes; ++o) {
        const double diff = out(r, o) - (o == labels[r] ? 1.0 : 0.0);
        loss += 0.5 * diff * diff;
        delta(r, o) = diff * inv_n;
      }
    }
    back_through_activation(layers.back().activation, out, delta);
  }
  loss *= inv_n;

  std::vector<std::size_t> offsets(layers.size());
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = off;
    off += layers[l].param_count();
  }
  std::vector<double> grad(model.param_count(), 0.0);

  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const Matrix& a_prev = pass.activations[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + layer.weights.size();
    for (std::size_t r = 0; r < n; ++r) {
      const double* x = a_prev.data.data() + r * a_prev.cols;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        gb[o] += d;
        double* gw_row = gw + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gw_row[i] += d * x[i];
      }
    }
    if (l == 0) break;
    Matrix prev(n, layer.in);
    for (std::size_t r = 0; r < n; ++r) {
      double* p = prev.data.data() + r * layer.in;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        const double* w = layer.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) p[i] += d * w[i];
      }
    }
    back_through_activation(layers[l - 1].activation, a_prev, prev);
    delta = std::move(prev);
  }

  if (decay != 0.0) {
    double sq = 0.0;
    std::size_t k = 0;
    for (const DenseLayer& layer : layers) {
      for (double w : layer.weights) {
        sq += w * w;
        grad[k++] += decay * w;
      }
      for (double b : layer.biases) {
        sq += b * b;
        grad[k++] += decay * b;
      }
    }
    loss += 0.5 * decay * sq;
  }
  LossAndGrad result;
  result.loss = loss;
  result.grad = ParamVector::zeros(grad.size());
  std::copy(grad.begin(), grad.end(), result.grad.span().begin());
  return result;
}

Matrix Dataset::gather(std::span<const std::size_t> indices) const {
  Matrix m(indices.size(), inputs.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw ContractError("gather: sample index out of range");
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(indices[r] * inputs.cols),
                inputs.cols, m.data.begin() + static_cast<std::ptrdiff_t>(r * inputs.cols));
  }
  return m;
}

std::vector<std::size_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset make_gaussian_classification(std::size_t n, std::size_t dim, std::size_t classes,
                                     std::uint64_t seed, double separation, double scale) {
  if (classes < 2) throw InvalidInput("make_gaussian_classification: classes must be >= 2");
  if (n == 0 || dim == 0) throw InvalidInput("make_gaussian_classification: n and dim must be > 0");
  if (!(scale > 0.0) || !(separation >= 0.0)) {
    throw InvalidInput("make_gaussian_classification: scale must be > 0, separation >= 0");
  }
  Rng rng(seed);
  std::vector<ParamVector> means;
  if (classes == 2) {
    const ParamVector u = random_unit_vector(dim, rng);
    means.push_back(u * (0.5 * separation * scale));
    means.push_back(u * (-0.5 * separation * scale));
  } else {
    for (std::size_t c = 0; c < classes; ++c) {
      means.push_back(random_unit_vector(dim, rng) * (separation * scale / std::sqrt(2.0)));
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  Dataset d;
  d.inputs = Matrix(n, dim);
  d.labels.resize(n);
  d.classes = classes;
  d.seed = seed;
  d.separation = separation;
  d.scale = scale;
  for (std::size_t k = 0; k < n; ++k) d.labels[order[k]] = k % classes;
  for (std::size_t r = 0; r < n; ++r) {
    const ParamVector& mu = means[d.labels[r]];
    for (std::size_t c = 0; c < dim; ++c) d.inputs(r, c) = mu[c] + rng.normal(0.0, scale);
  }
  return d;
}

std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix(&d.inputs.rows, sizeof d.inputs.rows);
  mix(&d.inputs.cols, sizeof d.inputs.cols);
  mix(d.inputs.data.data(), d.inputs.data.size() * sizeof(double));
  mix(d.labels.data(), d.labels.size() * sizeof(std::size_t));
  return h;
}

double accuracy(const Mlp& model, const Dataset& data) {
  if (data.size() == 0) throw InvalidInput("accuracy: empty dataset");
  const ForwardPass pass = forward(model, data.inputs);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = pass.outputs.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == data.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

MlpObjective::MlpObjective(Mlp architecture, const Dataset& data, double decay)
    : architecture_(std::move(architecture)), data_(&data), decay_(decay) {
  if (data.size() == 0) throw InvalidInput("MlpObjective: empty dataset");
  if (data.dimension() != architecture_.input_dim()) {
    throw ContractError("MlpObjective: dataset width does not match the network input");
  }
  if (data.classes > architecture_.output_dim()) {
    throw ContractError("MlpObjective: more classes than network outputs");
  }
  if (!(decay >= 0.0)) throw InvalidInput("MlpObjective: decay must be >= 0");
}

double MlpObjective::loss_and_grad(const ParamVector& x, std::span<const std::size_t> batch,
                                   ParamVector& grad) const {
  Mlp model = architecture_;
  model.unflatten(x);
  const Matrix inputs = data_->gather(batch);
  const std::vector<std::size_t> labels = data_->gather_labels(batch);
  LossAndGrad lg = bpgrad::loss_and_grad(model, inputs, labels, decay_);
  grad = std::move(lg.grad);
  return lg.loss;
}

void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << "bpgrad-mlp " << kCheckpointVersion << '\n';
  out << "loss " << to_string(model.loss()) << '\n';
  out << "layers " << model.layers().size() << '\n';
  for (const DenseLayer& l : model.layers()) {
    out << "layer " << l.in << ' ' << l.out << ' ' << to_string(l.activation) << '\n';
  }
  const ParamVector p = model.flatten();
  out << "params " << p.size() << '\n';
  for (double v : p) out << format_double(v) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  auto fail = [&](const std::string& why) -> InvalidInput {
    return InvalidInput("malformed checkpoint " + path.string() + ": " + why);
  };
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw fail("unexpected end of file");
    return std::istringstream(line);
  };

  std::string tag;
  long long version = 0;
  {
    auto s = next_line();
    std::string v;
    if (!(s >> tag >> v) || tag != "bpgrad-mlp") throw fail("missing header");
    version = parse_int(v, "checkpoint version");
    if (version != kCheckpointVersion) {
      throw fail("unsupported version " + std::to_string(version));
    }
  }
  std::string loss_name;
  {
    auto s = next_line();
    if (!(s >> tag >> loss_name) || tag != "loss") throw fail("missing loss line");
  }
  std::size_t count = 0;
  {
    auto s = next_line();
    if (!(s >> tag >> count) || tag != "layers" || count == 0) throw fail("missing layer count");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < count; ++l) {
    auto s = next_line();
    std::size_t lin = 0, lout = 0;
    std::string act;
    if (!(s >> tag >> lin >> lout >> act) || tag != "layer") throw fail("bad layer line");
    try {
      layers.emplace_back(lin, lout, parse_activation(act));
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
  }
  Mlp model;
  try {
    model = Mlp(std::move(layers), parse_loss_kind(loss_name));
  } catch (const std::exception& e) {
    throw fail(e.what());
  }
  std::size_t n_params = 0;
  {
    auto s = next_line();
    if (!(s >> tag >> n_params) || tag != "params") throw fail("missing params line");
    if (n_params != model.param_count()) throw fail("parameter count does not match the layers");
  }
  std::vector<double> values;
  values.reserve(n_params);
  for (std::size_t k = 0; k < n_params; ++k) {
    if (!std::getline(in, line)) throw fail("truncated parameter list");
    values.push_back(parse_double(line, "parameter"));
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) throw fail("trailing content");
  }
  try {
    model.unflatten(ParamVector(std::move(values)));
  } catch (const InvalidInput& e) {
    throw fail(e.what());
  }
  return model;
}

}  // namespace bpgrad
