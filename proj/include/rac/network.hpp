#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rac/core.hpp"
#include "rac/counting.hpp"
#include "rac/data.hpp"
#include "rac/losses.hpp"
#include "rac/similarity.hpp"

namespace rac {

struct AggregatorConfig {
  std::size_t kernel_size = 3;  // odd
  std::size_t out_dim = 32;
};

// Temporal local-aggregation convolution followed by a multi-stage TCN whose
// stage outputs pass through sigmoids. Stage s > 1 refines the previous
// stage's probability track; the TSM used by the consistency loss is computed
// on the aggregator output.
struct NetworkConfig {
  std::size_t input_dim = 0;
  AggregatorConfig aggregator;
  std::size_t stages = 2;
  std::size_t layers_per_stage = 8;
  std::size_t channels = 32;
  std::size_t dilation_base = 2;  // layer l uses dilation base^l
  TargetMode target_mode = TargetMode::kStart;
  SimilarityMeasure similarity = SimilarityMeasure::hamming();
  double lambda = kDefaultLambda;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("network config: input_dim must be >= 1");
    if (aggregator.kernel_size < 1 || aggregator.kernel_size % 2 == 0)
      throw std::invalid_argument("network config: aggregator kernel size must be odd");
    if (aggregator.out_dim < 1) throw std::invalid_argument("network config: aggregator out_dim must be >= 1");
    if (stages < 1 || layers_per_stage < 1 || channels < 1 || dilation_base < 1)
      throw std::invalid_argument("network config: stages, layers, channels and dilation base must be >= 1");
    if (!std::isfinite(lambda) || lambda < 0.0)
      throw std::invalid_argument("network config: lambda must be finite and >= 0");
    similarity.validate();
  }

  std::size_t stage_radius() const {
    std::size_t r = 0, d = 1;
    for (std::size_t l = 0; l < layers_per_stage; ++l) {
      r += d;
      d *= dilation_base;
    }
    return r;
  }

  // Frames beyond this distance cannot influence a given output frame.
  std::size_t receptive_field_radius() const {
    return (aggregator.kernel_size - 1) / 2 + stages * stage_radius();
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 6.4e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t stride = 1;  // temporal subsampling; 1 = full resolution
  double gaussian_sigma = 1.0;
  double tsm_sigma = 1.0;
  double prominence_threshold = 0.2;

  void validate() const {
    if (!std::isfinite(learning_rate) || learning_rate <= 0.0)
      throw std::invalid_argument("train config: learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("train config: adam betas must be in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("train config: epsilon must be > 0");
    if (stride < 1) throw std::invalid_argument("train config: stride must be >= 1");
    if (!(gaussian_sigma >= 0.0) || !(tsm_sigma >= 0.0))
      throw std::invalid_argument("train config: sigmas must be >= 0");
    if (!(prominence_threshold >= 0.0 && prominence_threshold <= 1.0))
      throw std::invalid_argument("train config: prominence threshold must be in [0, 1]");
  }
};

struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> values;

  static Tensor zeros(std::vector<std::size_t> dims) {
    Tensor t;
    t.dims = std::move(dims);
    std::size_t n = 1;
    for (std::size_t d : t.dims) n *= d;
    t.values.assign(n, 0.0);
    return t;
  }

  std::size_t numel() const { return values.size(); }
};

// A learnable tensor with its Adam moment buffers.
struct Param {
  Tensor value, m1, m2;

  static Param zeros(std::vector<std::size_t> dims) {
    Param p;
    p.value = Tensor::zeros(dims);
    p.m1 = Tensor::zeros(p.value.dims);
    p.m2 = Tensor::zeros(p.value.dims);
    return p;
  }
};

// Zero-padded, length-preserving temporal convolution.
// Weight layout: {out_channels, kernel, in_channels}.
struct Conv1d {
  std::size_t in_channels = 0, out_channels = 0, kernel = 1, dilation = 1;
  Param weight;
  Param bias;

  static Conv1d make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t dilation) {
    Conv1d c;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel = kernel;
    c.dilation = dilation;
    c.weight = Param::zeros({out, kernel, in});
    c.bias = Param::zeros({out});
    return c;
  }

  std::size_t fan_in() const { return in_channels * kernel; }

  Matrix forward(const Matrix& x) const {
    const std::size_t frames = x.rows();
    Matrix out(frames, out_channels);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t o = 0; o < out_channels; ++o) out(t, o) = bias.value.values[o];
    const auto radius = static_cast<std::int64_t>((kernel - 1) / 2);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::int64_t tt = static_cast<std::int64_t>(t) +
                                (static_cast<std::int64_t>(k) - radius) * static_cast<std::int64_t>(dilation);
        if (tt < 0 || tt >= static_cast<std::int64_t>(frames)) continue;
        const double* xrow = x.row(static_cast<std::size_t>(tt));
        for (std::size_t o = 0; o < out_channels; ++o) {
          const double* w = &weight.value.values[(o * kernel + k) * in_channels];
          double acc = 0.0;
          for (std::size_t c = 0; c < in_channels; ++c) acc += w[c] * xrow[c];
          out(t, o) += acc;
        }
      }
    }
    return out;
  }

  // Accumulates weight/bias gradients and returns the input gradient.
  Matrix backward(const Matrix& x, const Matrix& d_out, Tensor& d_weight, Tensor& d_bias) const {
    const std::size_t frames = x.rows();
    Matrix d_x(frames, in_channels);
    const auto radius = static_cast<std::int64_t>((kernel - 1) / 2);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t o = 0; o < out_channels; ++o) d_bias.values[o] += d_out(t, o);
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::int64_t tt = static_cast<std::int64_t>(t) +
                                (static_cast<std::int64_t>(k) - radius) * static_cast<std::int64_t>(dilation);
        if (tt < 0 || tt >= static_cast<std::int64_t>(frames)) continue;
        const double* xrow = x.row(static_cast<std::size_t>(tt));
        double* dxrow = d_x.row(static_cast<std::size_t>(tt));
        for (std::size_t o = 0; o < out_channels; ++o) {
          const double g = d_out(t, o);
          if (g == 0.0) continue;
          const std::size_t base = (o * kernel + k) * in_channels;
          const double* w = &weight.value.values[base];
          double* dw = &d_weight.values[base];
          for (std::size_t c = 0; c < in_channels; ++c) {
            dw[c] += g * xrow[c];
            dxrow[c] += g * w[c];
          }
        }
      }
    }
    return d_x;
  }
};

struct NetworkState {
  struct Block {
    Conv1d dilated;    // kernel 3, dilation base^l
    Conv1d pointwise;  // 1x1 after the ReLU
  };
  struct Stage {
    Conv1d input_proj;  // 1x1 into the stage width
    std::vector<Block> blocks;
    Conv1d head;  // 1x1 down to one logit per frame
  };

  NetworkConfig config;
  Conv1d aggregator;
  std::vector<Stage> stages;
  std::uint64_t adam_step = 0;
  std::uint64_t revision = 0;  // bumped on every parameter update

  static NetworkState initialize(const NetworkConfig& cfg);
};

struct ParamRef {
  std::string name;
  Param* param;
  std::size_t fan_in;
};

inline std::vector<ParamRef> param_entries(NetworkState& s) {
  std::vector<ParamRef> out;
  auto add = [&out](const std::string& name, Conv1d& conv) {
    out.push_back({name + ".weight", &conv.weight, conv.fan_in()});
    out.push_back({name + ".bias", &conv.bias, conv.fan_in()});
  };
  add("aggregator", s.aggregator);
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    const std::string prefix = "stage" + std::to_string(i);
    add(prefix + ".input_proj", s.stages[i].input_proj);
    for (std::size_t l = 0; l < s.stages[i].blocks.size(); ++l) {
      add(prefix + ".block" + std::to_string(l) + ".dilated", s.stages[i].blocks[l].dilated);
      add(prefix + ".block" + std::to_string(l) + ".pointwise", s.stages[i].blocks[l].pointwise);
    }
    add(prefix + ".head", s.stages[i].head);
  }
  return out;
}

inline NetworkState NetworkState::initialize(const NetworkConfig& cfg) {
  cfg.validate();
  NetworkState s;
  s.config = cfg;
  s.aggregator = Conv1d::make(cfg.input_dim, cfg.aggregator.out_dim, cfg.aggregator.kernel_size, 1);
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    Stage stage;
    const std::size_t in = i == 0 ? cfg.aggregator.out_dim : 1;
    stage.input_proj = Conv1d::make(in, cfg.channels, 1, 1);
    std::size_t dilation = 1;
    for (std::size_t l = 0; l < cfg.layers_per_stage; ++l) {
      Block b;
      b.dilated = Conv1d::make(cfg.channels, cfg.channels, 3, dilation);
      b.pointwise = Conv1d::make(cfg.channels, cfg.channels, 1, 1);
      stage.blocks.push_back(std::move(b));
      dilation *= cfg.dilation_base;
    }
    stage.head = Conv1d::make(cfg.channels, 1, 1, 1);
    s.stages.push_back(std::move(stage));
  }

  Rng rng(cfg.seed);
  for (ParamRef& ref : param_entries(s)) {
    const double bound = std::sqrt(1.0 / static_cast<double>(ref.fan_in));
    for (double& v : ref.param->value.values) v = rng.uniform(-bound, bound);
  }
  s.adam_step = 0;
  s.revision = 1;
  return s;
}

// Gradient buffers mirroring the parameter tree.
struct ConvGrads {
  Tensor weight, bias;
  static ConvGrads zeros_like(const Conv1d& c) {
    return {Tensor::zeros(c.weight.value.dims), Tensor::zeros(c.bias.value.dims)};
  }
};

struct Gradients {
  struct Block {
    ConvGrads dilated, pointwise;
  };
  struct Stage {
    ConvGrads input_proj;
    std::vector<Block> blocks;
    ConvGrads head;
  };
  ConvGrads aggregator;
  std::vector<Stage> stages;

  static Gradients zeros_like(const NetworkState& s) {
    Gradients g;
    g.aggregator = ConvGrads::zeros_like(s.aggregator);
    for (const auto& stage : s.stages) {
      Stage sg;
      sg.input_proj = ConvGrads::zeros_like(stage.input_proj);
      for (const auto& block : stage.blocks)
        sg.blocks.push_back({ConvGrads::zeros_like(block.dilated), ConvGrads::zeros_like(block.pointwise)});
      sg.head = ConvGrads::zeros_like(stage.head);
      g.stages.push_back(std::move(sg));
    }
    return g;
  }

  // Same order as param_entries.
  std::vector<const Tensor*> tensor_entries() const {
    std::vector<const Tensor*> out;
    auto add = [&out](const ConvGrads& c) {
      out.push_back(&c.weight);
      out.push_back(&c.bias);
    };
    add(aggregator);
    for (const auto& stage : stages) {
      add(stage.input_proj);
      for (const auto& block : stage.blocks) {
        add(block.dilated);
        add(block.pointwise);
      }
      add(stage.head);
    }
    return out;
  }

  std::vector<Tensor*> tensor_entries() {
    std::vector<Tensor*> out;
    for (const Tensor* t : static_cast<const Gradients*>(this)->tensor_entries())
      out.push_back(const_cast<Tensor*>(t));
    return out;
  }

  void add(const Gradients& other) {
    auto mine = tensor_entries();
    auto theirs = other.tensor_entries();
    for (std::size_t i = 0; i < mine.size(); ++i)
      for (std::size_t j = 0; j < mine[i]->values.size(); ++j)
        mine[i]->values[j] += theirs[i]->values[j];
  }

  void scale(double factor) {
    for (Tensor* t : tensor_entries())
      for (double& v : t->values) v *= factor;
  }
};

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

struct StageCache {
  Matrix input;
  std::vector<Matrix> block_in;  // layers + 1 entries; last one feeds the head
  std::vector<Matrix> dil_pre;
  std::vector<Matrix> relu_out;
  Matrix head_pre;
  std::vector<double> output;  // sigmoid(head_pre)
};

struct ForwardCache {
  Matrix input;
  Matrix embeddings;  // aggregator output, tanh-bounded
  std::vector<StageCache> stages;
  std::uint64_t revision = 0;
};

struct ForwardOutput {
  std::vector<double> probs;
  ForwardCache cache;

  const Matrix& embeddings() const { return cache.embeddings; }
};

inline ForwardOutput forward(const NetworkState& state, const Matrix& input) {
  const NetworkConfig& cfg = state.config;
  if (input.cols() != cfg.input_dim)
    throw std::invalid_argument("forward: input dimension " + std::to_string(input.cols()) +
                                " does not match configured input_dim " + std::to_string(cfg.input_dim));
  if (input.rows() < 1) throw std::invalid_argument("forward: empty input");
  if (!input.all_finite()) throw std::invalid_argument("forward: non-finite input value");

  ForwardCache cache;
  cache.revision = state.revision;
  cache.input = input;

  Matrix agg_pre = state.aggregator.forward(input);
  cache.embeddings = Matrix(agg_pre.rows(), agg_pre.cols());
  for (std::size_t t = 0; t < agg_pre.rows(); ++t)
    for (std::size_t c = 0; c < agg_pre.cols(); ++c) cache.embeddings(t, c) = std::tanh(agg_pre(t, c));

  Matrix current = cache.embeddings;  // stage 0 consumes the aggregator output
  for (const auto& stage : state.stages) {
    StageCache sc;
    sc.input = std::move(current);
    sc.block_in.push_back(stage.input_proj.forward(sc.input));
    for (const auto& block : stage.blocks) {
      const Matrix& h = sc.block_in.back();
      Matrix pre = block.dilated.forward(h);
      Matrix relu(pre.rows(), pre.cols());
      for (std::size_t t = 0; t < pre.rows(); ++t)
        for (std::size_t c = 0; c < pre.cols(); ++c) relu(t, c) = pre(t, c) > 0.0 ? pre(t, c) : 0.0;
      Matrix out = block.pointwise.forward(relu);
      for (std::size_t t = 0; t < out.rows(); ++t)
        for (std::size_t c = 0; c < out.cols(); ++c) out(t, c) += h(t, c);
      sc.dil_pre.push_back(std::move(pre));
      sc.relu_out.push_back(std::move(relu));
      sc.block_in.push_back(std::move(out));
    }
    sc.head_pre = stage.head.forward(sc.block_in.back());
    sc.output.resize(sc.head_pre.rows());
    for (std::size_t t = 0; t < sc.head_pre.rows(); ++t)
      sc.output[t] = detail::sigmoid(sc.head_pre(t, 0));
    // the next stage consumes this stage's probability track
    current = Matrix(sc.output.size(), 1);
    for (std::size_t t = 0; t < sc.output.size(); ++t) current(t, 0) = sc.output[t];
    cache.stages.push_back(std::move(sc));
  }

  ForwardOutput out;
  out.cache = std::move(cache);
  out.probs = out.cache.stages.back().output;
  return out;
}

inline ForwardOutput forward(const NetworkState& state, const EmbeddingSequence& seq) {
  return forward(state, to_matrix(seq));
}

// Exact reverse-mode gradients of the composite objective. d_probs is the
// loss gradient at the final sigmoid output; d_embeddings (may be empty)
// carries the consistency-loss gradient into the aggregator output.
inline Gradients backward(const NetworkState& state, const ForwardCache& cache,
                          const std::vector<double>& d_probs, const Matrix& d_embeddings = Matrix()) {
  if (cache.revision != state.revision)
    throw std::invalid_argument("backward: stale forward cache (parameters changed since forward)");
  if (cache.stages.size() != state.stages.size())
    throw std::invalid_argument("backward: cache does not match network");
  const std::size_t frames = cache.input.rows();
  if (d_probs.size() != frames)
    throw std::invalid_argument("backward: d_probs length mismatch");
  if (!d_embeddings.empty() &&
      (d_embeddings.rows() != frames || d_embeddings.cols() != cache.embeddings.cols()))
    throw std::invalid_argument("backward: d_embeddings shape mismatch");

  Gradients grads = Gradients::zeros_like(state);

  std::vector<double> d_out = d_probs;  // gradient w.r.t. the current stage's sigmoid output
  Matrix d_emb_total(frames, cache.embeddings.cols());
  for (std::size_t s = state.stages.size(); s-- > 0;) {
    const auto& stage = state.stages[s];
    const StageCache& sc = cache.stages[s];
    auto& sg = grads.stages[s];

    Matrix d_head_pre(frames, 1);
    for (std::size_t t = 0; t < frames; ++t) {
      const double y = sc.output[t];
      d_head_pre(t, 0) = d_out[t] * y * (1.0 - y);
    }
    Matrix d_h = stage.head.backward(sc.block_in.back(), d_head_pre, sg.head.weight, sg.head.bias);

    for (std::size_t l = stage.blocks.size(); l-- > 0;) {
      const auto& block = stage.blocks[l];
      Matrix d_relu =
          block.pointwise.backward(sc.relu_out[l], d_h, sg.blocks[l].pointwise.weight, sg.blocks[l].pointwise.bias);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t c = 0; c < d_relu.cols(); ++c)
          if (sc.dil_pre[l](t, c) <= 0.0) d_relu(t, c) = 0.0;
      Matrix d_path =
          block.dilated.backward(sc.block_in[l], d_relu, sg.blocks[l].dilated.weight, sg.blocks[l].dilated.bias);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t c = 0; c < d_h.cols(); ++c) d_h(t, c) += d_path(t, c);  // residual path
    }

    Matrix d_stage_in =
        stage.input_proj.backward(sc.input, d_h, sg.input_proj.weight, sg.input_proj.bias);
    if (s > 0) {
      d_out.assign(frames, 0.0);
      for (std::size_t t = 0; t < frames; ++t) d_out[t] = d_stage_in(t, 0);
    } else {
      d_emb_total = std::move(d_stage_in);
    }
  }

  if (!d_embeddings.empty())
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t c = 0; c < d_emb_total.cols(); ++c) d_emb_total(t, c) += d_embeddings(t, c);

  // tanh backward, then the aggregator convolution
  Matrix d_agg_pre(frames, cache.embeddings.cols());
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < d_agg_pre.cols(); ++c) {
      const double e = cache.embeddings(t, c);
      d_agg_pre(t, c) = d_emb_total(t, c) * (1.0 - e * e);
    }
  state.aggregator.backward(cache.input, d_agg_pre, grads.aggregator.weight, grads.aggregator.bias);
  return grads;
}

// Standard Adam with bias correction over every parameter tensor; one shared
// step counter per state.
inline void adam_step(NetworkState& state, const Gradients& gradients, const TrainConfig& cfg) {
  cfg.validate();
  auto params = param_entries(state);
  auto grads = gradients.tensor_entries();
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: gradient set does not match parameter set");

  const auto step = static_cast<double>(++state.adam_step);
  ++state.revision;
  const double corr1 = 1.0 - std::pow(cfg.beta1, step);
  const double corr2 = 1.0 - std::pow(cfg.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i].param;
    const Tensor& g = *grads[i];
    if (g.dims != p.value.dims)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + params[i].name);
    for (std::size_t j = 0; j < g.values.size(); ++j) {
      const double gv = g.values[j];
      if (!std::isfinite(gv))
        throw std::runtime_error("adam_step: non-finite gradient in tensor " + params[i].name);
      p.m1.values[j] = cfg.beta1 * p.m1.values[j] + (1.0 - cfg.beta1) * gv;
      p.m2.values[j] = cfg.beta2 * p.m2.values[j] + (1.0 - cfg.beta2) * gv * gv;
      const double m_hat = p.m1.values[j] / corr1;
      const double v_hat = p.m2.values[j] / corr2;
      p.value.values[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

// --- stride handling -------------------------------------------------------

inline Matrix strided_input(const EmbeddingSequence& seq, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  const std::size_t kept = (seq.frames + stride - 1) / stride;
  Matrix m(kept, seq.dim);
  for (std::size_t i = 0; i < kept; ++i)
    for (std::size_t d = 0; d < seq.dim; ++d) m(i, d) = seq.at(i * stride, d);
  return m;
}

// Start/end frames map to floor(f / stride). When two adjacent intervals land
// in the same subsampled bucket the later start is bumped forward so the
// track stays valid and the repetition count is preserved.
inline AnnotationTrack strided_track(const AnnotationTrack& track, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  track.validate();
  AnnotationTrack out;
  out.total_frames = (track.total_frames + stride - 1) / stride;
  std::int64_t prev_end = -1;
  for (const Interval& iv : track.intervals) {
    auto start = static_cast<std::int64_t>(iv.start / stride);
    auto end = static_cast<std::int64_t>(iv.end / stride);
    if (start <= prev_end) start = prev_end + 1;
    if (end < start) end = start;
    if (end >= static_cast<std::int64_t>(out.total_frames))
      throw std::invalid_argument("strided_track: intervals do not fit at stride " +
                                  std::to_string(stride));
    out.intervals.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
    prev_end = end;
  }
  out.validate();
  return out;
}

// --- training ---------------------------------------------------------------

using Dataset = std::vector<std::pair<EmbeddingSequence, AnnotationTrack>>;

struct TrainResult {
  NetworkState state;
  std::vector<LossReport> history;  // one averaged report per epoch
};

inline TrainResult train_from(NetworkState state, const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const NetworkConfig& net = state.config;

  struct Prepared {
    Matrix input;
    std::vector<double> target;
    SimilarityMatrix reference;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(dataset.size());
  for (const auto& [seq, track] : dataset) {
    if (seq.dim != net.input_dim)
      throw std::invalid_argument("train: sequence dimension " + std::to_string(seq.dim) +
                                  " does not match network input_dim " + std::to_string(net.input_dim));
    if (seq.frames != track.total_frames)
      throw std::invalid_argument("train: sequence and annotation frame counts differ");
    Prepared p;
    p.input = strided_input(seq, cfg.stride);
    const AnnotationTrack st = strided_track(track, cfg.stride);
    p.target = make_target(st, net.target_mode, cfg.gaussian_sigma);
    if (net.lambda > 0.0) p.reference = reference_tsm(st, cfg.tsm_sigma);
    prepared.push_back(std::move(p));
  }

  Rng shuffle_rng(net.seed ^ 0x8f1bbcdcbfa53e0bULL);
  std::vector<LossReport> history;
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double sum_sse = 0.0, sum_treco = 0.0, sum_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      Gradients batch_grads = Gradients::zeros_like(state);
      for (std::size_t k = begin; k < end; ++k) {
        const Prepared& p = prepared[order[k]];
        ForwardOutput out = forward(state, p.input);
        auto [sse, d_probs] = sse_loss(p.target, out.probs);
        double treco = 0.0;
        Matrix d_emb;
        if (net.lambda > 0.0) {
          const Matrix raw = pairwise_raw_similarity(out.embeddings(), net.similarity);
          SimilarityMatrix tsm{TsmKind::kPredicted, minmax_normalize_rows(raw)};
          auto [loss, d_tsm] = treco_loss(tsm, p.reference);
          treco = loss;
          for (std::size_t i = 0; i < d_tsm.rows(); ++i)
            for (std::size_t j = 0; j < d_tsm.cols(); ++j) d_tsm(i, j) *= net.lambda;
          d_emb = predicted_tsm_backward(out.embeddings(), net.similarity, raw, d_tsm);
        }
        const LossReport report = total_loss(sse, treco, net.lambda);
        if (!std::isfinite(report.total))
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", sequence " + std::to_string(order[k]));
        sum_sse += report.sse;
        sum_treco += report.treco;
        sum_total += report.total;
        batch_grads.add(backward(state, out.cache, d_probs, d_emb));
      }
      batch_grads.scale(1.0 / static_cast<double>(end - begin));
      adam_step(state, batch_grads, cfg);
    }
    const auto n = static_cast<double>(prepared.size());
    history.push_back({sum_sse / n, sum_treco / n, sum_total / n, net.lambda});
  }
  return {std::move(state), std::move(history)};
}

inline TrainResult train(const Dataset& dataset, const NetworkConfig& net_cfg, const TrainConfig& cfg) {
  return train_from(NetworkState::initialize(net_cfg), dataset, cfg);
}

// --- checkpoint format: "RACW", version u32, config block, named tensors ----

inline constexpr char kCheckpointMagic[4] = {'R', 'A', 'C', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  io::write_u32(out, static_cast<std::uint32_t>(name.size()));
  io::write_bytes(out, name.data(), name.size());
  io::write_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (std::size_t d : t.dims) io::write_u64(out, d);
  for (double v : t.values) io::write_f32(out, static_cast<float>(v));
}

inline void read_tensor_into(io::ByteReader& reader, const std::string& expected_name, Tensor& t) {
  const std::uint32_t name_len = reader.read_u32("tensor name length");
  std::string name(name_len, '\0');
  reader.read_bytes(name.data(), name_len, "tensor name");
  if (name != expected_name)
    reader.fail("unexpected tensor \"" + name + "\", expected \"" + expected_name + "\"",
                reader.offset());
  const std::uint32_t rank = reader.read_u32("tensor rank");
  if (rank != t.dims.size())
    reader.fail("tensor " + name + ": rank mismatch", reader.offset());
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint64_t d = reader.read_u64("tensor dimension");
    if (d != t.dims[i])
      reader.fail("tensor " + name + ": dimension mismatch against configuration", reader.offset());
  }
  for (double& v : t.values) v = reader.read_f32("tensor payload");
}

}  // namespace detail

inline void save_checkpoint(const NetworkState& state, const std::filesystem::path& path) {
  io::atomic_write_file(path, [&](std::ostream& out) {
    io::write_bytes(out, kCheckpointMagic, 4);
    io::write_u32(out, kCheckpointVersion);
    const NetworkConfig& c = state.config;
    io::write_u64(out, c.input_dim);
    io::write_u64(out, c.aggregator.kernel_size);
    io::write_u64(out, c.aggregator.out_dim);
    io::write_u64(out, c.stages);
    io::write_u64(out, c.layers_per_stage);
    io::write_u64(out, c.channels);
    io::write_u64(out, c.dilation_base);
    io::write_u32(out, c.target_mode == TargetMode::kStart ? 0u : 1u);
    io::write_u32(out, static_cast<std::uint32_t>(c.similarity.kind));
    io::write_f64(out, c.similarity.beta);
    io::write_f64(out, c.lambda);
    io::write_u64(out, c.seed);
    io::write_u64(out, state.adam_step);

    auto& mutable_state = const_cast<NetworkState&>(state);
    auto entries = param_entries(mutable_state);
    io::write_u64(out, entries.size() * 3);
    for (const ParamRef& e : entries) {
      detail::write_tensor(out, e.name, e.param->value);
      detail::write_tensor(out, e.name + ".m1", e.param->m1);
      detail::write_tensor(out, e.name + ".m2", e.param->m2);
    }
  });
}

inline NetworkState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  io::ByteReader reader(in, path.string());

  char magic[4];
  reader.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) reader.fail("bad magic, expected \"RACW\"", 0);
  const std::uint32_t version = reader.read_u32("version");
  if (version != kCheckpointVersion) reader.fail("unsupported version " + std::to_string(version), 4);

  NetworkConfig c;
  c.input_dim = reader.read_u64("input_dim");
  c.aggregator.kernel_size = reader.read_u64("aggregator kernel");
  c.aggregator.out_dim = reader.read_u64("aggregator out_dim");
  c.stages = reader.read_u64("stages");
  c.layers_per_stage = reader.read_u64("layers_per_stage");
  c.channels = reader.read_u64("channels");
  c.dilation_base = reader.read_u64("dilation_base");
  c.target_mode = reader.read_u32("target_mode") == 0 ? TargetMode::kStart : TargetMode::kPeriodicity;
  const std::uint32_t kind = reader.read_u32("similarity kind");
  if (kind > 2) reader.fail("unknown similarity kind", reader.offset());
  c.similarity.kind = static_cast<MeasureKind>(kind);
  c.similarity.beta = reader.read_f64("similarity beta");
  c.lambda = reader.read_f64("lambda");
  c.seed = reader.read_u64("seed");
  const std::uint64_t adam_step_count = reader.read_u64("adam step counter");

  NetworkState state = NetworkState::initialize(c);
  state.adam_step = adam_step_count;
  auto entries = param_entries(state);
  const std::uint64_t tensor_count = reader.read_u64("tensor count");
  if (tensor_count != entries.size() * 3)
    reader.fail("tensor count " + std::to_string(tensor_count) + " does not match configuration",
                reader.offset());
  for (ParamRef& e : entries) {
    detail::read_tensor_into(reader, e.name, e.param->value);
    detail::read_tensor_into(reader, e.name + ".m1", e.param->m1);
    detail::read_tensor_into(reader, e.name + ".m2", e.param->m2);
  }
  if (!reader.at_eof()) reader.fail("trailing bytes after tensors", reader.offset());
  return state;
}

}  // namespace rac
