#pragma once

// Convolutional move-policy network:
//
//   input  n x n x 11
//   zero-pad to (n+6) x (n+6), conv 7x7 x K, ReLU
//   6 x [zero-pad to (n+4) x (n+4), conv 5x5 x K, ReLU]
//   flatten, dense 1024, ReLU
//   dense n*n, softmax
//
// All parameters live in one flat vector (see NetworkLayout for the slot
// order), which keeps optimizers, checkpoints and gradient checks simple.
// Scalar is float for training and serving, double for gradient checks.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chgo/chunkstore.hpp"
#include "chgo/errors.hpp"
#include "chgo/log.hpp"
#include "chgo/rng.hpp"

namespace chgo {

struct NetworkConfig {
  int board_size = 19;
  int n_planes = kNumPlanes;
  int filters = 64;
  int dense_units = 1024;

  int n_classes() const { return board_size * board_size; }
  bool operator==(const NetworkConfig&) const = default;
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int pad = 0;
};

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ShapeStage {
  std::string stage;
  int height = 0;
  int width = 0;
  int channels = 0;
  bool operator==(const ShapeStage&) const = default;
};

class NetworkLayout {
 public:
  static constexpr int kFirstKernel = 7;
  static constexpr int kKernel = 5;
  static constexpr int kHiddenConvs = 6;

  explicit NetworkLayout(const NetworkConfig& c) : config_(c) {
    if (c.board_size < 1 || c.board_size > kMaxBoardSize || c.n_planes < 1 || c.filters < 1 || c.dense_units < 1) {
      throw ConfigError("invalid network configuration");
    }
    convs_.push_back(ConvSpec{c.n_planes, c.filters, kFirstKernel, (kFirstKernel - 1) / 2});
    for (int i = 0; i < kHiddenConvs; ++i) convs_.push_back(ConvSpec{c.filters, c.filters, kKernel, (kKernel - 1) / 2});
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const auto& cv = convs_[i];
      add("conv" + std::to_string(i + 1) + ".weight",
          static_cast<std::size_t>(cv.out_channels) * cv.in_channels * cv.kernel * cv.kernel);
      add("conv" + std::to_string(i + 1) + ".bias", static_cast<std::size_t>(cv.out_channels));
    }
    add("dense1.weight", static_cast<std::size_t>(c.dense_units) * flat_size());
    add("dense1.bias", static_cast<std::size_t>(c.dense_units));
    add("dense2.weight", static_cast<std::size_t>(c.n_classes()) * c.dense_units);
    add("dense2.bias", static_cast<std::size_t>(c.n_classes()));
    check_shape_chain();
  }

  const NetworkConfig& config() const { return config_; }
  const std::vector<ConvSpec>& convs() const { return convs_; }
  const std::vector<TensorSlot>& slots() const { return slots_; }
  const TensorSlot& slot(std::size_t i) const { return slots_[i]; }
  std::size_t parameter_count() const { return total_; }
  int points() const { return config_.board_size * config_.board_size; }
  int flat_size() const { return config_.filters * points(); }

  // Slot indices: conv i weight = 2i, bias = 2i+1, then dense1 w/b, dense2 w/b.
  std::size_t dense1_slot() const { return 2 * convs_.size(); }
  std::size_t dense2_slot() const { return 2 * convs_.size() + 2; }

  std::vector<ShapeStage> shape_chain() const {
    const int n = config_.board_size;
    std::vector<ShapeStage> chain;
    chain.push_back({"input", n, n, config_.n_planes});
    int h = n;
    int ch = config_.n_planes;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const auto& cv = convs_[i];
      const int padded = h + 2 * cv.pad;
      chain.push_back({"pad" + std::to_string(i + 1), padded, padded, ch});
      h = padded - cv.kernel + 1;
      ch = cv.out_channels;
      chain.push_back({"conv" + std::to_string(i + 1) + "_" + std::to_string(cv.kernel) + "x" +
                           std::to_string(cv.kernel) + "+relu",
                       h, h, ch});
    }
    chain.push_back({"flatten", 1, 1, h * h * ch});
    chain.push_back({"dense1+relu", 1, 1, config_.dense_units});
    chain.push_back({"dense2+softmax", 1, 1, config_.n_classes()});
    return chain;
  }

 private:
  void add(std::string name, std::size_t size) {
    slots_.push_back(TensorSlot{std::move(name), total_, size});
    total_ += size;
  }

  void check_shape_chain() const {
    const int n = config_.board_size;
    const auto chain = shape_chain();
    if (chain[1].height != n + 6) throw ConfigError("first layer must pad the input to n+6");
    for (std::size_t i = 2; i < chain.size() - 3; i += 2) {
      if (chain[i].height != n || chain[i].channels != config_.filters) {
        throw ConfigError("convolution stack must preserve the board size");
      }
      if (i + 1 < chain.size() - 3 && chain[i + 1].height != n + 4) {
        throw ConfigError("hidden layers must pad to n+4");
      }
    }
    if (chain[chain.size() - 3].channels != flat_size()) throw ConfigError("flatten size mismatch");
  }

  NetworkConfig config_;
  std::vector<ConvSpec> convs_;
  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
};

// Parameter storage keeps a fixed alignment so vectorized kernels take the
// same path on every run.
template <typename Scalar>
using AlignedVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

template <typename Scalar>
struct Parameters {
  NetworkConfig config;
  AlignedVector<Scalar> values;

  std::span<Scalar> slot(const TensorSlot& s) { return std::span<Scalar>(values).subspan(s.offset, s.size); }
  std::span<const Scalar> slot(const TensorSlot& s) const {
    return std::span<const Scalar>(values).subspan(s.offset, s.size);
  }
  bool operator==(const Parameters&) const = default;
};

inline std::size_t parameter_count(const NetworkConfig& config) { return NetworkLayout(config).parameter_count(); }

// He-normal weights for the ReLU layers, 1/sqrt(fan_in) for the output
// layer, zero biases.
template <typename Scalar>
Parameters<Scalar> init_network(const NetworkConfig& config, std::uint64_t seed) {
  const NetworkLayout layout(config);
  Parameters<Scalar> p{config, AlignedVector<Scalar>(layout.parameter_count(), Scalar(0))};
  Rng rng(seed);
  auto fill = [&](const TensorSlot& slot, double fan_in, double gain) {
    const double stddev = std::sqrt(gain / fan_in);
    for (auto& v : p.slot(slot)) v = static_cast<Scalar>(stddev * standard_normal(rng));
  };
  for (std::size_t i = 0; i < layout.convs().size(); ++i) {
    const auto& cv = layout.convs()[i];
    fill(layout.slot(2 * i), double(cv.in_channels) * cv.kernel * cv.kernel, 2.0);
  }
  fill(layout.slot(layout.dense1_slot()), layout.flat_size(), 2.0);
  fill(layout.slot(layout.dense2_slot()), config.dense_units, 1.0);
  return p;
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

// cols[(c*k + ky)*k + kx][y*n + x] = in[c][y+ky-pad][x+kx-pad], zero outside.
template <typename Scalar>
void im2col(const Scalar* in, int channels, int n, int k, int pad, RowMatrix<Scalar>& cols) {
  const int pts = n * n;
  cols.resize(channels * k * k, pts);
  for (int c = 0; c < channels; ++c) {
    const Scalar* plane = in + static_cast<std::ptrdiff_t>(c) * pts;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols.data() + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * pts;
        for (int y = 0; y < n; ++y) {
          const int sy = y + ky - pad;
          Scalar* out = row + y * n;
          if (sy < 0 || sy >= n) {
            std::fill(out, out + n, Scalar(0));
            continue;
          }
          for (int x = 0; x < n; ++x) {
            const int sx = x + kx - pad;
            out[x] = (sx >= 0 && sx < n) ? plane[sy * n + sx] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, int channels, int n, int k, int pad, Scalar* out) {
  const int pts = n * n;
  std::fill(out, out + static_cast<std::ptrdiff_t>(channels) * pts, Scalar(0));
  for (int c = 0; c < channels; ++c) {
    Scalar* plane = out + static_cast<std::ptrdiff_t>(c) * pts;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.data() + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * pts;
        for (int y = 0; y < n; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= n) continue;
          for (int x = 0; x < n; ++x) {
            const int sx = x + kx - pad;
            if (sx >= 0 && sx < n) plane[sy * n + sx] += row[y * n + x];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void softmax_rows(RowMatrix<Scalar>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const Scalar mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace detail

// One forward pass that keeps the activations needed for backpropagation.
template <typename Scalar>
class TrainingPass {
 public:
  using Matrix = RowMatrix<Scalar>;

  TrainingPass(const Parameters<Scalar>& params, std::span<const std::uint8_t> features, int batch)
      : params_(params), layout_(params.config), batch_(batch) {
    const auto& cfg = params.config;
    const std::size_t expected = static_cast<std::size_t>(batch) * cfg.n_planes * layout_.points();
    if (batch < 1 || features.size() != expected) {
      throw ConfigError("feature tensor has " + std::to_string(features.size()) + " values, expected " +
                        std::to_string(expected));
    }
    const int n = cfg.board_size;
    const int pts = layout_.points();
    input_.resize(static_cast<Eigen::Index>(batch) * cfg.n_planes, pts);
    for (std::size_t i = 0; i < features.size(); ++i) input_.data()[i] = static_cast<Scalar>(features[i]);

    const auto& convs = layout_.convs();
    acts_.resize(convs.size());
    Matrix cols;
    for (std::size_t l = 0; l < convs.size(); ++l) {
      const auto& cv = convs[l];
      const Matrix& in = l == 0 ? input_ : acts_[l - 1];
      const auto w = weights(2 * l, cv.out_channels, cv.in_channels * cv.kernel * cv.kernel);
      const auto b = vector(2 * l + 1);
      acts_[l].resize(static_cast<Eigen::Index>(batch) * cv.out_channels, pts);
      for (int s = 0; s < batch; ++s) {
        detail::im2col(in.data() + static_cast<std::ptrdiff_t>(s) * cv.in_channels * pts, cv.in_channels, n,
                       cv.kernel, cv.pad, cols);
        auto out = acts_[l].middleRows(static_cast<Eigen::Index>(s) * cv.out_channels, cv.out_channels);
        out.noalias() = w * cols;
        out.colwise() += b;
        out = out.cwiseMax(Scalar(0));
      }
    }

    const auto flat = flattened();
    const auto w1 = weights(layout_.dense1_slot(), cfg.dense_units, layout_.flat_size());
    hidden_.noalias() = flat * w1.transpose();
    hidden_.rowwise() += vector(layout_.dense1_slot() + 1).transpose();
    hidden_ = hidden_.cwiseMax(Scalar(0));

    const auto w2 = weights(layout_.dense2_slot(), cfg.n_classes(), cfg.dense_units);
    logits_.noalias() = hidden_ * w2.transpose();
    logits_.rowwise() += vector(layout_.dense2_slot() + 1).transpose();
    probs_ = logits_;
    detail::softmax_rows(probs_);
  }

  int batch() const { return batch_; }
  const Matrix& logits() const { return logits_; }
  const Matrix& probabilities() const { return probs_; }

  // Mean categorical cross-entropy over the batch; computed from the logits
  // in double precision.
  double cross_entropy(std::span<const std::uint16_t> labels) const {
    double total = 0.0;
    for (int s = 0; s < batch_; ++s) {
      const auto row = logits_.row(s);
      const double mx = static_cast<double>(row.maxCoeff());
      double z = 0.0;
      for (Eigen::Index c = 0; c < row.size(); ++c) z += std::exp(static_cast<double>(row(c)) - mx);
      total -= static_cast<double>(row(labels[static_cast<std::size_t>(s)])) - mx - std::log(z);
    }
    return total / batch_;
  }

  // Gradients of sum_s <dlogits_s, logits_s> with respect to every parameter.
  AlignedVector<Scalar> backward(const Matrix& dlogits) const {
    const auto& cfg = params_.config;
    const int n = cfg.board_size;
    const int pts = layout_.points();
    AlignedVector<Scalar> grads(params_.values.size(), Scalar(0));

    const auto flat = flattened();
    const auto w2 = weights(layout_.dense2_slot(), cfg.n_classes(), cfg.dense_units);
    grad_matrix(grads, layout_.dense2_slot(), cfg.n_classes(), cfg.dense_units).noalias() =
        dlogits.transpose() * hidden_;
    grad_vector(grads, layout_.dense2_slot() + 1) = dlogits.colwise().sum().transpose();

    Matrix dhidden = dlogits * w2;
    dhidden = dhidden.cwiseProduct((hidden_.array() > Scalar(0)).matrix().template cast<Scalar>());
    const auto w1 = weights(layout_.dense1_slot(), cfg.dense_units, layout_.flat_size());
    grad_matrix(grads, layout_.dense1_slot(), cfg.dense_units, layout_.flat_size()).noalias() =
        dhidden.transpose() * flat;
    grad_vector(grads, layout_.dense1_slot() + 1) = dhidden.colwise().sum().transpose();

    Matrix dflat = dhidden * w1;
    const auto& convs = layout_.convs();
    Matrix dact = Eigen::Map<Matrix>(dflat.data(), static_cast<Eigen::Index>(batch_) * cfg.filters, pts);

    Matrix cols;
    Matrix dcols;
    for (std::size_t l = convs.size(); l-- > 0;) {
      const auto& cv = convs[l];
      const Matrix& in = l == 0 ? input_ : acts_[l - 1];
      const int fan = cv.in_channels * cv.kernel * cv.kernel;
      const auto w = weights(2 * l, cv.out_channels, fan);
      auto gw = grad_matrix(grads, 2 * l, cv.out_channels, fan);
      auto gb = grad_vector(grads, 2 * l + 1);
      dact = dact.cwiseProduct((acts_[l].array() > Scalar(0)).matrix().template cast<Scalar>());
      Matrix dprev;
      if (l > 0) dprev.resize(static_cast<Eigen::Index>(batch_) * cv.in_channels, pts);
      for (int s = 0; s < batch_; ++s) {
        const auto dz = dact.middleRows(static_cast<Eigen::Index>(s) * cv.out_channels, cv.out_channels);
        detail::im2col(in.data() + static_cast<std::ptrdiff_t>(s) * cv.in_channels * pts, cv.in_channels, n,
                       cv.kernel, cv.pad, cols);
        gw.noalias() += dz * cols.transpose();
        gb += dz.rowwise().sum();
        if (l > 0) {
          dcols.noalias() = w.transpose() * dz;
          detail::col2im(dcols, cv.in_channels, n, cv.kernel, cv.pad,
                         dprev.data() + static_cast<std::ptrdiff_t>(s) * cv.in_channels * pts);
        }
      }
      if (l > 0) dact = std::move(dprev);
    }
    return grads;
  }

 private:
  detail::ConstMatrixMap<Scalar> weights(std::size_t slot, int rows, int cols) const {
    return detail::ConstMatrixMap<Scalar>(params_.values.data() + layout_.slot(slot).offset, rows, cols);
  }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> vector(std::size_t slot) const {
    const auto& s = layout_.slot(slot);
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(params_.values.data() + s.offset,
                                                                      static_cast<Eigen::Index>(s.size));
  }
  detail::MatrixMap<Scalar> grad_matrix(AlignedVector<Scalar>& g, std::size_t slot, int rows, int cols) const {
    return detail::MatrixMap<Scalar>(g.data() + layout_.slot(slot).offset, rows, cols);
  }
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> grad_vector(AlignedVector<Scalar>& g, std::size_t slot) const {
    const auto& s = layout_.slot(slot);
    return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(g.data() + s.offset,
                                                                static_cast<Eigen::Index>(s.size));
  }
  // The last activation viewed as batch x (K * n * n), channel-major per sample.
  detail::ConstMatrixMap<Scalar> flattened() const {
    return detail::ConstMatrixMap<Scalar>(acts_.back().data(), batch_, layout_.flat_size());
  }

  const Parameters<Scalar>& params_;
  NetworkLayout layout_;
  int batch_;
  Matrix input_;
  std::vector<Matrix> acts_;
  Matrix hidden_;
  Matrix logits_;
  Matrix probs_;
};

// Row s holds the move distribution for sample s.
template <typename Scalar>
RowMatrix<Scalar> forward(const Parameters<Scalar>& params, std::span<const std::uint8_t> features, int batch) {
  return TrainingPass<Scalar>(params, features, batch).probabilities();
}

template <typename Scalar>
struct LossAndGradients {
  double loss = 0.0;
  AlignedVector<Scalar> grads;
};

template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(const Parameters<Scalar>& params, std::span<const std::uint8_t> features,
                                            std::span<const std::uint16_t> labels) {
  const int batch = static_cast<int>(labels.size());
  const int classes = params.config.n_classes();
  for (auto l : labels) {
    if (l >= classes) throw ConfigError("label " + std::to_string(l) + " out of range");
  }
  const TrainingPass<Scalar> pass(params, features, batch);
  RowMatrix<Scalar> dlogits = pass.probabilities();
  for (int s = 0; s < batch; ++s) dlogits(s, labels[static_cast<std::size_t>(s)]) -= Scalar(1);
  dlogits /= static_cast<Scalar>(batch);
  return {pass.cross_entropy(labels), pass.backward(dlogits)};
}

template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(const Parameters<Scalar>& params, const Batch& batch) {
  return loss_and_gradients(params, std::span<const std::uint8_t>(batch.features),
                            std::span<const std::uint16_t>(batch.labels));
}

// ---- Adadelta ---------------------------------------------------------------

template <typename Scalar>
struct AdadeltaState {
  std::vector<Scalar> g2;     // running average of squared gradients
  std::vector<Scalar> dx2;    // running average of squared updates
  double gamma = 0.9;
  double epsilon = 1e-6;

  static AdadeltaState zeros(std::size_t n) {
    AdadeltaState s;
    s.g2.assign(n, Scalar(0));
    s.dx2.assign(n, Scalar(0));
    return s;
  }
  bool operator==(const AdadeltaState&) const = default;
};

// No learning rate: the step size comes from the ratio of the two running
// averages. Rejects the whole step if any gradient is not finite.
template <typename Scalar>
void adadelta_step(Parameters<Scalar>& params, std::span<const Scalar> grads, AdadeltaState<Scalar>& state) {
  const std::size_t n = params.values.size();
  if (grads.size() != n) throw ConfigError("gradient size does not match parameters");
  if (state.g2.empty()) state = AdadeltaState<Scalar>::zeros(n);
  if (state.g2.size() != n || state.dx2.size() != n) throw ConfigError("optimizer state does not match parameters");
  for (auto g : grads) {
    if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient; step rejected");
  }
  const Scalar gamma = static_cast<Scalar>(state.gamma);
  const Scalar keep = static_cast<Scalar>(1.0 - state.gamma);
  const Scalar eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar g = grads[i];
    state.g2[i] = gamma * state.g2[i] + keep * g * g;
    const Scalar u = -std::sqrt(state.dx2[i] + eps) / std::sqrt(state.g2[i] + eps) * g;
    state.dx2[i] = gamma * state.dx2[i] + keep * u * u;
    params.values[i] += u;
  }
}

// ---- checkpoints --------------------------------------------------------------
//
// Binary, little-endian:
//   "CHGM" | u32 format version (1) | u32 board_size | u32 n_planes | u32 filters
//   | u32 dense_units | u32 agent version | u32 scalar bytes (4) | u64 parameter count
//   | f32[count] parameters | u8 has_optimizer | (f64 gamma | f64 epsilon
//   | f32[count] squared-gradient average | f32[count] squared-update average)

struct Checkpoint {
  Parameters<float> params;
  std::optional<AdadeltaState<float>> optimizer;
  std::uint32_t version = 0;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& file) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CorruptionError(file, "truncated checkpoint");
  return v;
}

template <typename T, typename A>
void read_array(std::istream& is, std::vector<T, A>& out, std::size_t n, const std::string& file) {
  out.resize(n);
  if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * sizeof(T)))) {
    throw CorruptionError(file, "truncated checkpoint");
  }
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::ostringstream os(std::ios::binary);
  const auto& c = ck.params.config;
  os.write("CHGM", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c.board_size));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c.n_planes));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c.filters));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c.dense_units));
  detail::write_pod<std::uint32_t>(os, ck.version);
  detail::write_pod<std::uint32_t>(os, 4);
  detail::write_pod<std::uint64_t>(os, ck.params.values.size());
  os.write(reinterpret_cast<const char*>(ck.params.values.data()),
           static_cast<std::streamsize>(ck.params.values.size() * sizeof(float)));
  detail::write_pod<std::uint8_t>(os, ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    detail::write_pod<double>(os, ck.optimizer->gamma);
    detail::write_pod<double>(os, ck.optimizer->epsilon);
    os.write(reinterpret_cast<const char*>(ck.optimizer->g2.data()),
             static_cast<std::streamsize>(ck.optimizer->g2.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(ck.optimizer->dx2.data()),
             static_cast<std::streamsize>(ck.optimizer->dx2.size() * sizeof(float)));
  }
  return os.str();
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  const std::string file = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptionError(file, "cannot open checkpoint");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CHGM", 4) != 0) throw CorruptionError(file, "bad checkpoint magic");
  if (detail::read_pod<std::uint32_t>(is, file) != 1) throw CorruptionError(file, "unsupported checkpoint version");
  Checkpoint ck;
  auto& c = ck.params.config;
  c.board_size = static_cast<int>(detail::read_pod<std::uint32_t>(is, file));
  c.n_planes = static_cast<int>(detail::read_pod<std::uint32_t>(is, file));
  c.filters = static_cast<int>(detail::read_pod<std::uint32_t>(is, file));
  c.dense_units = static_cast<int>(detail::read_pod<std::uint32_t>(is, file));
  ck.version = detail::read_pod<std::uint32_t>(is, file);
  if (detail::read_pod<std::uint32_t>(is, file) != 4) throw CorruptionError(file, "unsupported scalar width");
  const auto count = detail::read_pod<std::uint64_t>(is, file);
  std::size_t expected = 0;
  try {
    expected = parameter_count(c);
  } catch (const ConfigError& e) {
    throw CorruptionError(file, e.what());
  }
  if (count != expected) throw CorruptionError(file, "parameter count does not match configuration");
  detail::read_array(is, ck.params.values, count, file);
  if (detail::read_pod<std::uint8_t>(is, file) != 0) {
    AdadeltaState<float> st;
    st.gamma = detail::read_pod<double>(is, file);
    st.epsilon = detail::read_pod<double>(is, file);
    detail::read_array(is, st.g2, count, file);
    detail::read_array(is, st.dx2, count, file);
    ck.optimizer = std::move(st);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CorruptionError(file, "trailing bytes after checkpoint");
  return ck;
}

// ---- supervised training --------------------------------------------------------

struct TrainMetrics {
  int epoch = 0;
  double loss = 0.0;            // mean training loss over the epoch's batches
  double top1_accuracy = 0.0;   // on the held-out set
  long long samples_seen = 0;   // cumulative training samples
  bool operator==(const TrainMetrics&) const = default;
};

struct EvalMetrics {
  double loss = 0.0;
  double top1_accuracy = 0.0;
  long long samples = 0;
};

// Loss and top-1 accuracy over every sample in a chunk directory.
template <typename Scalar>
EvalMetrics evaluate(const Parameters<Scalar>& params, const fs::path& dir, int batch_size = kBatchSize) {
  EvalMetrics m;
  long long correct = 0;
  double loss_sum = 0.0;
  for_each_batch_all(dir, batch_size, [&](const Batch& b) {
    const TrainingPass<Scalar> pass(params, b.features, b.size());
    loss_sum += pass.cross_entropy(b.labels) * b.size();
    const auto& probs = pass.probabilities();
    for (int s = 0; s < b.size(); ++s) {
      Eigen::Index best = 0;
      probs.row(s).maxCoeff(&best);
      if (best == b.labels[static_cast<std::size_t>(s)]) ++correct;
    }
    m.samples += b.size();
  });
  if (m.samples > 0) {
    m.loss = loss_sum / static_cast<double>(m.samples);
    m.top1_accuracy = static_cast<double>(correct) / static_cast<double>(m.samples);
  }
  return m;
}

struct TrainOptions {
  int epochs = 1;
  std::uint64_t seed = 0;
  int batch_size = kBatchSize;
  std::optional<fs::path> checkpoint;  // rewritten after every epoch
  // Called after each epoch; returning false stops training early.
  std::function<bool(const TrainMetrics&, const Parameters<float>&)> on_epoch;
};

inline std::vector<TrainMetrics> train_supervised(Parameters<float>& params, AdadeltaState<float>& optimizer,
                                                  const fs::path& train_dir, const fs::path& test_dir,
                                                  const TrainOptions& opts) {
  std::vector<TrainMetrics> history;
  long long seen = 0;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    BatchReader reader(train_dir, opts.batch_size, derive_seed(opts.seed, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    int batches = 0;
    while (auto batch = reader.next()) {
      if (batch->board_size != params.config.board_size) throw ConfigError("training data board size mismatch");
      auto lg = loss_and_gradients(params, *batch);
      adadelta_step(params, std::span<const float>(lg.grads), optimizer);
      loss_sum += lg.loss;
      ++batches;
      seen += batch->size();
    }
    if (batches == 0) throw ConfigError("training set " + train_dir.string() + " yields no full batch");
    TrainMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / batches;
    m.top1_accuracy = evaluate(params, test_dir, opts.batch_size).top1_accuracy;
    m.samples_seen = seen;
    history.push_back(m);
    if (opts.checkpoint) save_checkpoint(*opts.checkpoint, Checkpoint{params, optimizer, 0});
    if (opts.on_epoch && !opts.on_epoch(m, params)) break;
  }
  return history;
}

}  // namespace chgo
