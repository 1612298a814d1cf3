#pragma once

// Small dense and LSTM approximators with exact reverse-mode gradients.
// Batches are column-major: one sample per column.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace mg::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Identity, Tanh };

// Dense stack: ReLU hidden layers, `output_act` on the last layer. When
// aux_width > 0 the auxiliary input is concatenated below the activations
// entering layer `aux_layer` (0 = alongside the network input).
struct MlpSpec {
  int input = 1;
  std::vector<int> hidden;
  int output = 1;
  Activation output_act = Activation::Tanh;
  int aux_width = 0;
  int aux_layer = 1;

  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

// LSTM layers over a sequence, then a dense head fed with
// [last hidden state; static input; aux input].
struct RecurrentSpec {
  int seq_width = 1;
  std::vector<int> lstm;
  int static_width = 0;
  std::vector<int> head;
  int output = 1;
  Activation output_act = Activation::Tanh;
  int aux_width = 0;

  void validate() const;
  bool operator==(const RecurrentSpec&) const = default;
};

using NetSpec = std::variant<MlpSpec, RecurrentSpec>;

struct Block {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool operator==(const Block&) const = default;
};

// Vectorized reductions pick their peeling from the buffer address, so an
// unaligned base would change summation order from one allocation to the next.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Flat parameter storage plus a gradient buffer of identical shape.
struct ParamSet {
  ParamVector values;
  ParamVector grads;
  std::vector<Block> layout;

  std::size_t size() const { return values.size(); }
  void zero_grad();
  bool same_layout(const ParamSet& other) const { return layout == other.layout; }
  bool all_finite() const;
  const Block& block(const std::string& name) const;
};

struct NetInput {
  Matrix x;                 // MLP input, or static input of a recurrent net
  std::vector<Matrix> seq;  // recurrent nets only, oldest first
  Matrix aux;               // empty when the spec has no aux input
};

struct InputGrad {
  Matrix x;
  std::vector<Matrix> seq;
  Matrix aux;
};

// Hidden/cell state of every LSTM layer, for step-by-step evaluation.
struct RecurrentCarry {
  std::vector<Matrix> h;
  std::vector<Matrix> c;
};

class Network {
 public:
  explicit Network(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  bool recurrent() const { return std::holds_alternative<RecurrentSpec>(spec_); }
  int output_width() const;
  int aux_width() const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Final layer ~ U[-3e-3, 3e-3]; earlier layers ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)].
  void init(std::mt19937_64& rng);

  // Caches activations for a subsequent backward().
  Matrix forward(const NetInput& in);
  // Cache-free evaluation, safe to call concurrently on a shared network.
  Matrix predict(const NetInput& in) const;

  // Accumulates parameter gradients (unless accumulate is false) for
  // d(sum(upstream .* output)) and returns gradients w.r.t. every input.
  InputGrad backward(const Matrix& upstream, bool accumulate = true);

  RecurrentCarry initial_carry(Eigen::Index batch) const;
  void step(RecurrentCarry& carry, const Matrix& x_t) const;
  Matrix readout(const RecurrentCarry& carry, const Matrix& static_in, const Matrix& aux) const;

 private:
  struct DenseCache {
    std::vector<Matrix> in;  // layer inputs (aux already concatenated)
    std::vector<Matrix> z;   // pre-activations
    Matrix out;
  };
  struct LstmCache {
    std::vector<Matrix> xh;  // [x_t; h_{t-1}]
    std::vector<Matrix> c_prev, i, f, g, o, c, tanh_c;
  };

  void build_layout();
  Matrix dense_forward(std::size_t first_block, const std::vector<int>& widths, int aux_layer, const Matrix& x,
                       const Matrix* aux, Activation out_act, DenseCache* cache) const;
  // Returns gradient w.r.t. the stack input; aux gradient in `aux_grad`.
  Matrix dense_backward(std::size_t first_block, const std::vector<int>& widths, int aux_layer, int aux_width,
                        Activation out_act, const DenseCache& cache, const Matrix& upstream, Matrix* aux_grad,
                        bool accumulate);
  void lstm_cell(std::size_t layer, const Matrix& x, Matrix& h, Matrix& c, LstmCache* cache) const;
  void check_input(const NetInput& in) const;

  NetSpec spec_;
  ParamSet params_;
  std::size_t head_first_block_ = 0;  // index into layout of the first dense block

  bool has_cache_ = false;
  Eigen::Index cache_batch_ = 0;
  DenseCache dense_cache_;
  std::vector<LstmCache> lstm_cache_;
};

struct OptimizerConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Adaptive-moment optimizer; moments persist per parameter.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig cfg, std::size_t n);

  // Applies one update from params.grads (descent direction).
  void step(ParamSet& params);
  void reset();
  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// dst <- (1 - mix) dst + mix src. mix = 1 is an exact copy.
void blend_params(ParamSet& dst, const ParamSet& src, double mix);
void copy_params(ParamSet& dst, const ParamSet& src);

// Versioned binary checkpoint: layout descriptor followed by little-endian doubles.
void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace mg::nn
