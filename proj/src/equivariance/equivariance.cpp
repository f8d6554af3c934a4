#include "dlab/equivariance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "dlab/error.hpp"
#include "dlab/matrix_io.hpp"

namespace dlab::eq {

TokenBatch TokenBatch::zeros(std::size_t batch, std::size_t channels, std::size_t prefix, std::size_t grid_h,
                             std::size_t grid_w) {
  TokenBatch x;
  x.batch = batch;
  x.channels = channels;
  x.prefix = prefix;
  x.grid_h = grid_h;
  x.grid_w = grid_w;
  x.tokens = prefix + grid_h * grid_w;
  x.data.assign(batch * x.tokens * channels, 0.0);
  return x;
}

Matrix TokenBatch::sample(std::size_t b) const {
  const auto first = data.begin() + static_cast<std::ptrdiff_t>(b * tokens * channels);
  return {tokens, channels, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(tokens * channels))};
}

void TokenBatch::set_sample(std::size_t b, const Matrix& m) {
  if (m.rows() != tokens || m.cols() != channels) throw ShapeError("set_sample: shape mismatch " + m.shape_string());
  std::copy(m.data().begin(), m.data().end(), data.begin() + static_cast<std::ptrdiff_t>(b * tokens * channels));
}

void TokenBatch::validate() const {
  if (tokens != prefix + grid_h * grid_w) {
    throw ShapeError("token batch: " + std::to_string(tokens) + " tokens != prefix " + std::to_string(prefix) +
                     " + " + std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  if (data.size() != batch * tokens * channels) throw ShapeError("token batch: data length does not match B x N x C");
  if (!std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("token batch: non-finite entry");
  }
}

bool TokenBatch::same_layout(const TokenBatch& o) const {
  return batch == o.batch && tokens == o.tokens && channels == o.channels && prefix == o.prefix &&
         grid_h == o.grid_h && grid_w == o.grid_w;
}

RolledTokens roll_to_grid(const TokenBatch& x) {
  x.validate();
  RolledTokens r;
  r.prefix_count = x.prefix;
  r.grid = {x.batch, x.channels, x.grid_h, x.grid_w, std::vector<double>(x.batch * x.channels * x.grid_h * x.grid_w)};
  r.prefix.resize(x.batch * x.prefix * x.channels);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t n = 0; n < x.prefix; ++n)
      for (std::size_t c = 0; c < x.channels; ++c) r.prefix[(b * x.prefix + n) * x.channels + c] = x.at(b, n, c);
    for (std::size_t s = 0; s < x.grid_h * x.grid_w; ++s)
      for (std::size_t c = 0; c < x.channels; ++c)
        r.grid.at(b, c, s / x.grid_w, s % x.grid_w) = x.at(b, x.prefix + s, c);
  }
  return r;
}

TokenBatch unroll(const RolledTokens& r) {
  const Grid& g = r.grid;
  if (r.prefix.size() != g.batch * r.prefix_count * g.channels) throw ShapeError("unroll: prefix slab size mismatch");
  TokenBatch x = TokenBatch::zeros(g.batch, g.channels, r.prefix_count, g.h, g.w);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t n = 0; n < r.prefix_count; ++n)
      for (std::size_t c = 0; c < g.channels; ++c) x.at(b, n, c) = r.prefix[(b * r.prefix_count + n) * g.channels + c];
    for (std::size_t s = 0; s < g.h * g.w; ++s)
      for (std::size_t c = 0; c < g.channels; ++c) x.at(b, r.prefix_count + s, c) = g.at(b, c, s / g.w, s % g.w);
  }
  return x;
}

std::string Translation::label() const {
  return std::string(mode == ShiftMode::circular ? "circular" : "zero_pad") + "(" + std::to_string(dy) + "," +
         std::to_string(dx) + ")";
}

Grid translate(const Grid& g, const Translation& t) {
  const auto h = static_cast<long>(g.h);
  const auto w = static_cast<long>(g.w);
  if (std::abs(static_cast<long>(t.dy)) >= h || std::abs(static_cast<long>(t.dx)) >= w) {
    throw InputError("translate: shift " + t.label() + " out of range for " + std::to_string(g.h) + "x" +
                     std::to_string(g.w) + " grid");
  }
  Grid out = g;
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.channels; ++c)
      for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
          long sy = y - t.dy;
          long sx = x - t.dx;
          if (t.mode == ShiftMode::circular) {
            sy = ((sy % h) + h) % h;
            sx = ((sx % w) + w) % w;
          } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            continue;
          }
          out.at(b, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              g.at(b, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
  return out;
}

TokenBatch translate_tokens(const TokenBatch& x, const Translation& t) {
  RolledTokens r = roll_to_grid(x);
  r.grid = translate(r.grid, t);
  return unroll(r);
}

namespace {

void require_shape_preserved(const TokenBatch& in, const TokenBatch& out, const std::string& who) {
  if (!in.same_layout(out)) throw ShapeError("token map '" + who + "' changed the token batch shape");
}

std::vector<double> softmax_row(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  std::vector<double> out(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (out[i] = std::exp(v[i] - m));
  for (double& x : out) x /= s;
  return out;
}

struct AttentionForward {
  Matrix q, k, v, attn, out;
};

AttentionForward attention_forward(const AttentionParams& p, const Matrix& x) {
  AttentionForward f;
  f.q = matmul(x, p.wq);
  f.k = matmul(x, p.wk);
  f.v = matmul(x, p.wv);
  Matrix scores = matmul_nt(f.q, f.k);
  scores *= 1.0 / std::sqrt(static_cast<double>(x.cols()));
  scores += p.pos_bias;
  f.attn = Matrix(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = softmax_row(scores.row(i));
    std::copy(row.begin(), row.end(), f.attn.row(i).begin());
  }
  f.out = matmul(f.attn, f.v);
  if (p.residual) f.out += x;
  return f;
}

}  // namespace

TokenMlp::TokenMlp(Matrix w1, Matrix w2) : w1_(std::move(w1)), w2_(std::move(w2)) {
  if (w1_.cols() != w2_.rows() || w1_.rows() != w2_.cols()) {
    throw ShapeError("token mlp: weights " + w1_.shape_string() + " and " + w2_.shape_string() +
                     " do not form a C -> h -> C map");
  }
}

TokenBatch TokenMlp::apply(const TokenBatch& x) const {
  x.validate();
  if (x.channels != w1_.rows()) throw ShapeError("token mlp: channel mismatch");
  const Matrix flat(x.batch * x.tokens, x.channels, x.data);
  Matrix h = matmul(flat, w1_);
  for (double& v : h.data()) v = std::max(v, 0.0);
  const Matrix y = matmul(h, w2_);
  TokenBatch out = x;
  std::copy(y.data().begin(), y.data().end(), out.data.begin());
  return out;
}

SelfAttentionMap::SelfAttentionMap(AttentionParams params) : p_(std::move(params)) {
  const std::size_t c = p_.wq.rows();
  for (const Matrix* w : {&p_.wq, &p_.wk, &p_.wv})
    if (w->rows() != c || w->cols() != c) throw ShapeError("self attention: projections must be C x C");
  if (p_.pos_bias.rows() != p_.pos_bias.cols()) throw ShapeError("self attention: positional bias must be N x N");
}

TokenBatch SelfAttentionMap::apply(const TokenBatch& x) const {
  x.validate();
  if (x.channels != p_.wq.rows() || x.tokens != p_.pos_bias.rows()) {
    throw ShapeError("self attention: token batch does not match parameter shapes");
  }
  TokenBatch out = x;
  for (std::size_t b = 0; b < x.batch; ++b) out.set_sample(b, attention_forward(p_, x.sample(b)).out);
  require_shape_preserved(x, out, id());
  return out;
}

AttentionGrad SelfAttentionMap::backward(const TokenBatch& x, const TokenBatch& upstream) const {
  if (!x.same_layout(upstream)) throw ShapeError("self attention backward: upstream layout mismatch");
  const std::size_t c = p_.wq.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  AttentionGrad g{Matrix(c, c), Matrix(c, c), Matrix(c, c), Matrix(x.tokens, x.tokens)};
  for (std::size_t b = 0; b < x.batch; ++b) {
    const Matrix xb = x.sample(b);
    const Matrix dout = upstream.sample(b);
    const AttentionForward f = attention_forward(p_, xb);
    const Matrix d_attn = matmul_nt(dout, f.v);
    const Matrix dv = matmul_tn(f.attn, dout);
    Matrix ds(f.attn.rows(), f.attn.cols());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      double row_dot = 0.0;
      for (std::size_t j = 0; j < ds.cols(); ++j) row_dot += d_attn(i, j) * f.attn(i, j);
      for (std::size_t j = 0; j < ds.cols(); ++j) ds(i, j) = f.attn(i, j) * (d_attn(i, j) - row_dot);
    }
    g.pos_bias += ds;
    const Matrix dq = matmul(ds, f.k) * scale;
    const Matrix dk = matmul_tn(ds, f.q) * scale;
    g.wq += matmul_tn(xb, dq);
    g.wk += matmul_tn(xb, dk);
    g.wv += matmul_tn(xb, dv);
  }
  return g;
}

ConvMixerMap::ConvMixerMap(std::size_t radius, std::vector<Matrix> kernels)
    : radius_(radius), kernels_(std::move(kernels)) {
  const std::size_t side = 2 * radius_ + 1;
  if (kernels_.size() != side * side) throw ShapeError("conv mixer: expected (2r+1)^2 kernels");
  for (const auto& k : kernels_)
    if (k.rows() != kernels_.front().rows() || k.cols() != k.rows()) throw ShapeError("conv mixer: kernels must be C x C");
}

TokenBatch ConvMixerMap::apply(const TokenBatch& x) const {
  x.validate();
  const std::size_t c = x.channels;
  if (c != kernels_.front().rows()) throw ShapeError("conv mixer: channel mismatch");
  const auto h = static_cast<long>(x.grid_h);
  const auto w = static_cast<long>(x.grid_w);
  const auto r = static_cast<long>(radius_);
  TokenBatch out = x;
  for (std::size_t b = 0; b < x.batch; ++b)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        const std::size_t dst = x.prefix + static_cast<std::size_t>(y * w + xx);
        std::vector<double> acc(c, 0.0);
        std::size_t kidx = 0;
        for (long oy = -r; oy <= r; ++oy)
          for (long ox = -r; ox <= r; ++ox, ++kidx) {
            const long sy = ((y + oy) % h + h) % h;
            const long sx = ((xx + ox) % w + w) % w;
            const std::size_t src = x.prefix + static_cast<std::size_t>(sy * w + sx);
            const Matrix& k = kernels_[kidx];
            for (std::size_t i = 0; i < c; ++i) {
              const double xi = x.at(b, src, i);
              for (std::size_t j = 0; j < c; ++j) acc[j] += xi * k(i, j);
            }
          }
        for (std::size_t j = 0; j < c; ++j) out.at(b, dst, j) = acc[j];
      }
  return out;
}

double mu_t(const TokenMap& phi, const TokenBatch& x, const Translation& t) {
  x.validate();
  // Translate the spatial tokens and re-attach the untouched prefix.
  RolledTokens rx = roll_to_grid(x);
  rx.grid = translate(rx.grid, t);
  const TokenBatch tx = unroll(rx);

  const TokenBatch fx = phi.apply(x);
  const TokenBatch ftx = phi.apply(tx);
  require_shape_preserved(x, fx, phi.id());
  require_shape_preserved(x, ftx, phi.id());

  RolledTokens rf = roll_to_grid(fx);
  rf.grid = translate(rf.grid, t);
  rf.prefix = rx.prefix;  // T phi(x) carries the input's prefix tokens
  const TokenBatch tfx = unroll(rf);

  // Error over spatial tokens only.
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t n = x.prefix; n < x.tokens; ++n)
      for (std::size_t c = 0; c < x.channels; ++c) {
        const double d = tfx.at(b, n, c) - ftx.at(b, n, c);
        sum += d * d;
        ++count;
      }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::string SuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["phi_id"] = phi_id;
  j["translations"] = translations;
  j["mean"] = mean;
  j["std"] = std;
  j["n"] = n;
  return j.dump(2);
}

SuiteReport mu_t_suite(const TokenMap& phi, const std::vector<TokenBatch>& xs,
                       const std::vector<Translation>& translations) {
  if (xs.empty()) throw InputError("mu_t_suite: empty input stream");
  if (translations.empty()) throw InputError("mu_t_suite: empty translation set");
  const std::size_t pairs = xs.size() * translations.size();
  std::vector<double> values(pairs);
  const auto n = static_cast<std::ptrdiff_t>(pairs);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    values[k] = mu_t(phi, xs[k / translations.size()], translations[k % translations.size()]);
  }
  SuiteReport rep;
  rep.phi_id = phi.id();
  for (const auto& t : translations) rep.translations.push_back(t.label());
  rep.n = pairs;
  for (double v : values) rep.mean += v;
  rep.mean /= static_cast<double>(pairs);
  double var = 0.0;
  for (double v : values) var += (v - rep.mean) * (v - rep.mean);
  rep.std = std::sqrt(var / static_cast<double>(pairs));
  return rep;
}

std::vector<Translation> unit_translations(ShiftMode mode) {
  std::vector<Translation> out;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if (dy != 0 || dx != 0) out.push_back({dy, dx, mode});
  return out;
}

void write_token_batch(const std::filesystem::path& path, const TokenBatch& x) {
  x.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  for (std::size_t v : {x.batch, x.tokens, x.channels, x.prefix, x.grid_h, x.grid_w}) io::write_u64(os, v);
  io::write_frame(os, Matrix(x.batch * x.tokens, x.channels, x.data));
}

TokenBatch read_token_batch(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  TokenBatch x;
  x.batch = io::read_u64(is);
  x.tokens = io::read_u64(is);
  x.channels = io::read_u64(is);
  x.prefix = io::read_u64(is);
  x.grid_h = io::read_u64(is);
  x.grid_w = io::read_u64(is);
  const Matrix m = io::read_frame(is);
  if (m.rows() != x.batch * x.tokens || m.cols() != x.channels) {
    throw ShapeError("token batch file: frame " + m.shape_string() + " does not match header");
  }
  x.data.assign(m.data().begin(), m.data().end());
  x.validate();
  return x;
}

}  // namespace dlab::eq
