#include "mg/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mg/errors.hpp"

namespace mg::nn {

namespace {

using MapM = Eigen::Map<Matrix>;
using CMapM = Eigen::Map<const Matrix>;

constexpr char kMagic[8] = {'M', 'G', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr double kFinalInit = 3e-3;

Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Matrix apply_out(const Matrix& z, Activation act) {
  return act == Activation::Tanh ? Matrix(z.array().tanh().matrix()) : z;
}

Matrix vcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw IoError("truncated parameter file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void MlpSpec::validate() const {
  if (input < 1 || output < 1) throw ConfigError("mlp: widths must be >= 1");
  for (int w : hidden)
    if (w < 1) throw ConfigError("mlp: hidden widths must be >= 1");
  if (aux_width < 0) throw ConfigError("mlp: aux_width must be >= 0");
  if (aux_width > 0 && (aux_layer < 0 || aux_layer > static_cast<int>(hidden.size())))
    throw ConfigError("mlp: aux_layer out of range");
}

void RecurrentSpec::validate() const {
  if (seq_width < 1 || output < 1 || static_width < 0 || aux_width < 0)
    throw ConfigError("recurrent: invalid widths");
  if (lstm.empty()) throw ConfigError("recurrent: need at least one LSTM layer");
  for (int w : lstm)
    if (w < 1) throw ConfigError("recurrent: LSTM widths must be >= 1");
  for (int w : head)
    if (w < 1) throw ConfigError("recurrent: head widths must be >= 1");
}

void ParamSet::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

bool ParamSet::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

const Block& ParamSet::block(const std::string& name) const {
  for (const auto& b : layout)
    if (b.name == name) return b;
  throw ContractViolation("no parameter block '" + name + "'");
}

Network::Network(NetSpec spec) : spec_(std::move(spec)) {
  std::visit([](const auto& s) { s.validate(); }, spec_);
  build_layout();
}

int Network::output_width() const {
  return std::visit([](const auto& s) { return s.output; }, spec_);
}

int Network::aux_width() const {
  return std::visit([](const auto& s) { return s.aux_width; }, spec_);
}

void Network::build_layout() {
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    params_.layout.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  };
  auto add_dense = [&](int in, const std::vector<int>& hidden, int out, int aux_width, int aux_layer) {
    std::vector<int> widths = hidden;
    widths.push_back(out);
    for (std::size_t l = 0; l < widths.size(); ++l) {
      int fan_in = l == 0 ? in : widths[l - 1];
      if (aux_width > 0 && static_cast<int>(l) == aux_layer) fan_in += aux_width;
      add("dense" + std::to_string(l) + ".W", widths[l], fan_in);
      add("dense" + std::to_string(l) + ".b", widths[l], 1);
    }
  };
  if (const auto* m = std::get_if<MlpSpec>(&spec_)) {
    head_first_block_ = 0;
    add_dense(m->input, m->hidden, m->output, m->aux_width, m->aux_layer);
  } else {
    const auto& r = std::get<RecurrentSpec>(spec_);
    int in = r.seq_width;
    for (std::size_t l = 0; l < r.lstm.size(); ++l) {
      add("lstm" + std::to_string(l) + ".W", 4 * r.lstm[l], in + r.lstm[l]);
      add("lstm" + std::to_string(l) + ".b", 4 * r.lstm[l], 1);
      in = r.lstm[l];
    }
    head_first_block_ = params_.layout.size();
    add_dense(r.lstm.back() + r.static_width + r.aux_width, r.head, r.output, 0, 0);
  }
  params_.values.assign(offset, 0.0);
  params_.grads.assign(offset, 0.0);
}

void Network::init(std::mt19937_64& rng) {
  const std::size_t last_w = params_.layout.size() - 2;
  for (std::size_t k = 0; k < params_.layout.size(); ++k) {
    const Block& b = params_.layout[k];
    const bool is_lstm = b.name.rfind("lstm", 0) == 0;
    const bool final_layer = k >= last_w;
    double bound;
    if (final_layer) {
      bound = kFinalInit;
    } else {
      // Bias blocks share the fan-in of their weight block.
      const Block& w = b.cols == 1 && k > 0 ? params_.layout[k - 1] : b;
      bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < b.size(); ++i) params_.values[b.offset + i] = dist(rng);
    if (is_lstm && b.cols == 1) {
      const int n = b.rows / 4;
      for (int i = n; i < 2 * n; ++i) params_.values[b.offset + static_cast<std::size_t>(i)] += 1.0;
    }
  }
  params_.zero_grad();
  has_cache_ = false;
}

void Network::check_input(const NetInput& in) const {
  if (const auto* m = std::get_if<MlpSpec>(&spec_)) {
    if (in.x.rows() != m->input)
      throw ContractViolation("width mismatch: expected input width " + std::to_string(m->input) + ", got " +
                              std::to_string(in.x.rows()));
    if (m->aux_width > 0 && (in.aux.rows() != m->aux_width || in.aux.cols() != in.x.cols()))
      throw ContractViolation("width mismatch: aux input");
  } else {
    const auto& r = std::get<RecurrentSpec>(spec_);
    if (in.seq.empty()) throw ContractViolation("width mismatch: empty sequence");
    const Eigen::Index batch = in.seq.front().cols();
    for (const auto& s : in.seq)
      if (s.rows() != r.seq_width || s.cols() != batch) throw ContractViolation("width mismatch: sequence element");
    if (r.static_width > 0 && (in.x.rows() != r.static_width || in.x.cols() != batch))
      throw ContractViolation("width mismatch: static input");
    if (r.aux_width > 0 && (in.aux.rows() != r.aux_width || in.aux.cols() != batch))
      throw ContractViolation("width mismatch: aux input");
  }
}

Matrix Network::dense_forward(std::size_t first_block, const std::vector<int>& hidden, int aux_layer,
                              const Matrix& x, const Matrix* aux, Activation out_act, DenseCache* cache) const {
  const std::size_t layers = hidden.size() + 1;
  Matrix a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const Block& wb = params_.layout[first_block + 2 * l];
    const Block& bb = params_.layout[first_block + 2 * l + 1];
    CMapM W(params_.values.data() + wb.offset, wb.rows, wb.cols);
    CMapM b(params_.values.data() + bb.offset, bb.rows, 1);
    Matrix in = (aux && static_cast<int>(l) == aux_layer) ? vcat(a, *aux) : std::move(a);
    Matrix z = W * in;
    z.colwise() += b.col(0);
    const bool last = l + 1 == layers;
    a = last ? apply_out(z, out_act) : Matrix(z.cwiseMax(0.0));
    if (cache) {
      cache->in.push_back(std::move(in));
      cache->z.push_back(std::move(z));
    }
  }
  if (cache) cache->out = a;
  return a;
}

Matrix Network::dense_backward(std::size_t first_block, const std::vector<int>& hidden, int aux_layer,
                               int aux_width, Activation out_act, const DenseCache& cache, const Matrix& upstream,
                               Matrix* aux_grad, bool accumulate) {
  const std::size_t layers = hidden.size() + 1;
  Matrix g = upstream;
  if (out_act == Activation::Tanh) g.array() *= 1.0 - cache.out.array().square();
  Matrix gin;
  for (std::size_t l = layers; l-- > 0;) {
    const Block& wb = params_.layout[first_block + 2 * l];
    const Block& bb = params_.layout[first_block + 2 * l + 1];
    CMapM W(params_.values.data() + wb.offset, wb.rows, wb.cols);
    if (accumulate) {
      MapM dW(params_.grads.data() + wb.offset, wb.rows, wb.cols);
      MapM db(params_.grads.data() + bb.offset, bb.rows, 1);
      dW.noalias() += g * cache.in[l].transpose();
      db += g.rowwise().sum();
    }
    gin = W.transpose() * g;
    if (aux_width > 0 && static_cast<int>(l) == aux_layer) {
      if (aux_grad) *aux_grad = gin.bottomRows(aux_width);
      gin = Matrix(gin.topRows(gin.rows() - aux_width));
    }
    if (l > 0) g = gin.array() * (cache.z[l - 1].array() > 0.0).cast<double>();
  }
  return gin;
}

void Network::lstm_cell(std::size_t layer, const Matrix& x, Matrix& h, Matrix& c, LstmCache* cache) const {
  const Block& wb = params_.layout[2 * layer];
  const Block& bb = params_.layout[2 * layer + 1];
  CMapM W(params_.values.data() + wb.offset, wb.rows, wb.cols);
  CMapM b(params_.values.data() + bb.offset, bb.rows, 1);
  const Eigen::Index n = wb.rows / 4;
  Matrix xh = vcat(x, h);
  Matrix z = W * xh;
  z.colwise() += b.col(0);
  Matrix i = sigmoid(z.topRows(n));
  Matrix f = sigmoid(z.middleRows(n, n));
  Matrix g = z.middleRows(2 * n, n).array().tanh().matrix();
  Matrix o = sigmoid(z.bottomRows(n));
  Matrix c_new = (f.array() * c.array() + i.array() * g.array()).matrix();
  Matrix tc = c_new.array().tanh().matrix();
  h = (o.array() * tc.array()).matrix();
  if (cache) {
    cache->xh.push_back(std::move(xh));
    cache->c_prev.push_back(c);
    cache->i.push_back(std::move(i));
    cache->f.push_back(std::move(f));
    cache->g.push_back(std::move(g));
    cache->o.push_back(std::move(o));
    cache->c.push_back(c_new);
    cache->tanh_c.push_back(std::move(tc));
  }
  c = std::move(c_new);
}

RecurrentCarry Network::initial_carry(Eigen::Index batch) const {
  const auto& r = std::get<RecurrentSpec>(spec_);
  RecurrentCarry carry;
  for (int w : r.lstm) {
    carry.h.push_back(Matrix::Zero(w, batch));
    carry.c.push_back(Matrix::Zero(w, batch));
  }
  return carry;
}

void Network::step(RecurrentCarry& carry, const Matrix& x_t) const {
  const auto& r = std::get<RecurrentSpec>(spec_);
  if (x_t.rows() != r.seq_width) throw ContractViolation("width mismatch: sequence element");
  Matrix in = x_t;
  for (std::size_t l = 0; l < r.lstm.size(); ++l) {
    lstm_cell(l, in, carry.h[l], carry.c[l], nullptr);
    in = carry.h[l];
  }
}

Matrix Network::readout(const RecurrentCarry& carry, const Matrix& static_in, const Matrix& aux) const {
  const auto& r = std::get<RecurrentSpec>(spec_);
  Matrix head_in = carry.h.back();
  if (r.static_width > 0) head_in = vcat(head_in, static_in);
  if (r.aux_width > 0) head_in = vcat(head_in, aux);
  return dense_forward(head_first_block_, r.head, 0, head_in, nullptr, r.output_act, nullptr);
}

Matrix Network::predict(const NetInput& in) const {
  check_input(in);
  if (const auto* m = std::get_if<MlpSpec>(&spec_))
    return dense_forward(0, m->hidden, m->aux_layer, in.x, m->aux_width > 0 ? &in.aux : nullptr, m->output_act,
                         nullptr);
  RecurrentCarry carry = initial_carry(in.seq.front().cols());
  for (const auto& x : in.seq) step(carry, x);
  return readout(carry, in.x, in.aux);
}

Matrix Network::forward(const NetInput& in) {
  check_input(in);
  dense_cache_ = DenseCache{};
  lstm_cache_.clear();
  Matrix out;
  if (const auto* m = std::get_if<MlpSpec>(&spec_)) {
    out = dense_forward(0, m->hidden, m->aux_layer, in.x, m->aux_width > 0 ? &in.aux : nullptr, m->output_act,
                        &dense_cache_);
    cache_batch_ = in.x.cols();
  } else {
    const auto& r = std::get<RecurrentSpec>(spec_);
    const Eigen::Index batch = in.seq.front().cols();
    lstm_cache_.resize(r.lstm.size());
    std::vector<Matrix> layer_in = in.seq;
    for (std::size_t l = 0; l < r.lstm.size(); ++l) {
      Matrix h = Matrix::Zero(r.lstm[l], batch);
      Matrix c = Matrix::Zero(r.lstm[l], batch);
      for (auto& x : layer_in) {
        lstm_cell(l, x, h, c, &lstm_cache_[l]);
        x = h;
      }
    }
    Matrix head_in = layer_in.back();
    if (r.static_width > 0) head_in = vcat(head_in, in.x);
    if (r.aux_width > 0) head_in = vcat(head_in, in.aux);
    out = dense_forward(head_first_block_, r.head, 0, head_in, nullptr, r.output_act, &dense_cache_);
    cache_batch_ = batch;
  }
  has_cache_ = true;
  return out;
}

InputGrad Network::backward(const Matrix& upstream, bool accumulate) {
  if (!has_cache_) throw ContractViolation("call-order violation: backward() without a preceding forward()");
  if (upstream.rows() != output_width() || upstream.cols() != cache_batch_)
    throw ContractViolation("width mismatch: upstream gradient");
  InputGrad grad;
  if (const auto* m = std::get_if<MlpSpec>(&spec_)) {
    grad.x = dense_backward(0, m->hidden, m->aux_layer, m->aux_width, m->output_act, dense_cache_, upstream,
                            &grad.aux, accumulate);
    return grad;
  }
  const auto& r = std::get<RecurrentSpec>(spec_);
  Matrix head_grad = dense_backward(head_first_block_, r.head, 0, 0, r.output_act, dense_cache_, upstream,
                                    nullptr, accumulate);
  const Eigen::Index n_top = r.lstm.back();
  if (r.static_width > 0) grad.x = head_grad.middleRows(n_top, r.static_width);
  if (r.aux_width > 0) grad.aux = head_grad.bottomRows(r.aux_width);

  const std::size_t steps = lstm_cache_.front().xh.size();
  // External hidden-state gradients per step for the current layer.
  std::vector<Matrix> dh_ext(steps, Matrix::Zero(n_top, cache_batch_));
  dh_ext.back() = head_grad.topRows(n_top);
  for (std::size_t l = r.lstm.size(); l-- > 0;) {
    const Block& wb = params_.layout[2 * l];
    const Block& bb = params_.layout[2 * l + 1];
    CMapM W(params_.values.data() + wb.offset, wb.rows, wb.cols);
    const Eigen::Index n = wb.rows / 4;
    const Eigen::Index n_in = wb.cols - n;
    const LstmCache& cc = lstm_cache_[l];
    Matrix dh_next = Matrix::Zero(n, cache_batch_);
    Matrix dc_next = Matrix::Zero(n, cache_batch_);
    std::vector<Matrix> dx(steps);
    for (std::size_t s = steps; s-- > 0;) {
      Matrix dh = dh_ext[s] + dh_next;
      Matrix dc = dc_next + (dh.array() * cc.o[s].array() * (1.0 - cc.tanh_c[s].array().square())).matrix();
      Matrix dz(4 * n, cache_batch_);
      dz.topRows(n) = (dc.array() * cc.g[s].array() * cc.i[s].array() * (1.0 - cc.i[s].array())).matrix();
      dz.middleRows(n, n) =
          (dc.array() * cc.c_prev[s].array() * cc.f[s].array() * (1.0 - cc.f[s].array())).matrix();
      dz.middleRows(2 * n, n) = (dc.array() * cc.i[s].array() * (1.0 - cc.g[s].array().square())).matrix();
      dz.bottomRows(n) =
          (dh.array() * cc.tanh_c[s].array() * cc.o[s].array() * (1.0 - cc.o[s].array())).matrix();
      if (accumulate) {
        MapM dW(params_.grads.data() + wb.offset, wb.rows, wb.cols);
        MapM db(params_.grads.data() + bb.offset, bb.rows, 1);
        dW.noalias() += dz * cc.xh[s].transpose();
        db += dz.rowwise().sum();
      }
      Matrix dxh = W.transpose() * dz;
      dx[s] = dxh.topRows(n_in);
      dh_next = dxh.bottomRows(n);
      dc_next = (dc.array() * cc.f[s].array()).matrix();
    }
    dh_ext = std::move(dx);
  }
  grad.seq = std::move(dh_ext);
  return grad;
}

void OptimizerConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("optimizer: step size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("optimizer: decay rates must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) { cfg_.validate(); }

void Optimizer::step(ParamSet& params) {
  if (params.size() != m_.size()) throw ContractViolation("optimizer: parameter count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const double g = params.grads[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params.values[i] -= cfg_.step_size * mhat / (std::sqrt(vhat) + cfg_.epsilon);
  }
}

void Optimizer::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  t_ = 0;
}

void blend_params(ParamSet& dst, const ParamSet& src, double mix) {
  if (!dst.same_layout(src)) throw ContractViolation("blend_params: layout mismatch");
  if (mix == 1.0) {
    dst.values = src.values;
    return;
  }
  for (std::size_t i = 0; i < dst.values.size(); ++i)
    dst.values[i] = (1.0 - mix) * dst.values[i] + mix * src.values[i];
}

void copy_params(ParamSet& dst, const ParamSet& src) { blend_params(dst, src, 1.0); }

void save_params(const ParamSet& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.layout.size()));
  for (const auto& b : params.layout) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.cols));
    put<std::uint64_t>(out, b.offset);
  }
  put<std::uint64_t>(out, params.values.size());
  for (double v : params.values) put<double>(out, v);
  if (!out) throw IoError("write failed for " + path.string());
}

ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path.string() + ": not a parameter file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  ParamSet p;
  const auto nblocks = get<std::uint32_t>(in);
  std::size_t expected = 0;
  for (std::uint32_t k = 0; k < nblocks; ++k) {
    Block b;
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) throw IoError(path.string() + ": corrupt block name");
    b.name.resize(len);
    in.read(b.name.data(), len);
    b.rows = static_cast<int>(get<std::uint32_t>(in));
    b.cols = static_cast<int>(get<std::uint32_t>(in));
    b.offset = get<std::uint64_t>(in);
    if (b.offset != expected) throw IoError(path.string() + ": inconsistent layout");
    expected += b.size();
    p.layout.push_back(std::move(b));
  }
  const auto count = get<std::uint64_t>(in);
  if (count != expected) throw IoError(path.string() + ": parameter count does not match layout");
  p.values.resize(count);
  for (auto& v : p.values) v = get<double>(in);
  p.grads.assign(count, 0.0);
  return p;
}

}  // namespace mg::nn
