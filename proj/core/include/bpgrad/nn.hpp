#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpgrad/objectives.hpp"
#include "bpgrad/types.hpp"

namespace bpgrad {

/// Row-major dense matrix; one row per sample in a batch.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class Activation { relu, identity, softmax_output };
enum class LossKind { softmax_cross_entropy, mean_squared };

std::string to_string(Activation a);
std::string to_string(LossKind k);
Activation parse_activation(std::string_view s);
LossKind parse_loss_kind(std::string_view s);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  ///< out x in, row-major
  std::vector<double> biases;   ///< out
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act);

  [[nodiscard]] std::size_t param_count() const noexcept { return out * in + out; }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Feed-forward network. softmax_output may only appear on the last layer.
class Mlp {
 public:
  Mlp() = default;
  /// Throws ContractError when adjacent shapes do not compose.
  Mlp(std::vector<DenseLayer> layers, LossKind loss);

  [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  [[nodiscard]] LossKind loss() const noexcept { return loss_; }
  [[nodiscard]] std::size_t param_count() const noexcept { return param_count_; }
  [[nodiscard]] std::size_t input_dim() const;
  [[nodiscard]] std::size_t output_dim() const;
  /// Layer sizes including the input, e.g. {100, 100, 2}.
  [[nodiscard]] std::vector<std::size_t> sizes() const;

  /// Layer-major; weights row-major then biases.
  [[nodiscard]] ParamVector flatten() const;
  /// Inverse of flatten. Throws ContractError on a size mismatch.
  void unflatten(const ParamVector& params);

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<DenseLayer> layers_;
  LossKind loss_ = LossKind::softmax_cross_entropy;
  std::size_t param_count_ = 0;
};

/// Architecture with ReLU hidden layers. The output layer is softmax for
/// cross-entropy and identity for mean squared error.
Mlp make_mlp(const std::vector<std::size_t>& sizes, LossKind loss = LossKind::softmax_cross_entropy);

/// Weights ~ N(0, sigma^2) from a generator seeded with `seed`; biases 0.
/// Throws InvalidInput when sigma <= 0.
Mlp init_gaussian(const std::vector<std::size_t>& sizes, double sigma, std::uint64_t seed,
                  LossKind loss = LossKind::softmax_cross_entropy);

struct ForwardPass {
  Matrix outputs;
  /// activations[0] is the input batch, activations[l + 1] the output of layer l.
  std::vector<Matrix> activations;
};

/// Throws ContractError when the batch width differs from the input size.
ForwardPass forward(const Mlp& model, const Matrix& batch);

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean loss over the batch plus (decay / 2) ||params||^2, with the gradient
/// in flatten() order. Mean squared error is (1/n) sum 0.5 ||o - onehot(y)||^2.
LossAndGrad loss_and_grad(const Mlp& model, const Matrix& batch,
                          std::span<const std::size_t> labels, double decay = 0.0);

struct Dataset {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  double separation = 0.0;
  double scale = 1.0;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::size_t dimension() const noexcept { return inputs.cols; }
  /// Rows and labels for the given sample indices.
  [[nodiscard]] Matrix gather(std::span<const std::size_t> indices) const;
  [[nodiscard]] std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const;
};

/// Class-conditional Gaussians with standard deviation `scale`. Two classes
/// sit at +-(separation * scale / 2) u for a random unit u, so the means are
/// exactly separation * scale apart; more classes use random unit directions
/// scaled by separation * scale / sqrt(2). Labels cycle 0..classes-1 in a
/// seeded random order, so counts differ by at most one.
Dataset make_gaussian_classification(std::size_t n, std::size_t dim, std::size_t classes,
                                     std::uint64_t seed, double separation = 4.0,
                                     double scale = 1.0);

/// Order-independent FNV-1a style hash of the dataset contents.
std::uint64_t dataset_hash(const Dataset& d);

/// Fraction of samples whose arg-max output equals the label.
double accuracy(const Mlp& model, const Dataset& data);

/// Training objective over a dataset: x is the flattened parameter vector
/// of `architecture`.
class MlpObjective final : public StochasticObjective {
 public:
  MlpObjective(Mlp architecture, const Dataset& data, double decay);

  [[nodiscard]] std::size_t dimension() const override { return architecture_.param_count(); }
  [[nodiscard]] std::size_t sample_count() const override { return data_->size(); }
  double loss_and_grad(const ParamVector& x, std::span<const std::size_t> batch,
                       ParamVector& grad) const override;

  [[nodiscard]] const Mlp& architecture() const noexcept { return architecture_; }
  [[nodiscard]] const Dataset& data() const noexcept { return *data_; }
  [[nodiscard]] double decay() const noexcept { return decay_; }

 private:
  Mlp architecture_;
  const Dataset* data_;
  double decay_;
};

/// Text checkpoint:
///   bpgrad-mlp 1
///   loss <softmax_cross_entropy|mean_squared>
///   layers <count>
///   layer <in> <out> <activation>      (one line per layer)
///   params <count>
///   <one parameter per line, shortest round-trip decimal, flatten() order>
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Mlp& model, const std::filesystem::path& path);
/// Throws IoError when the file cannot be read and InvalidInput on a
/// malformed or unsupported-version file.
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace bpgrad
