#pragma once

// Translational equivariance of token-sequence maps. Spatial tokens are laid
// out row-major on an H x W patch grid after `prefix` class-style tokens.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab::eq {

struct TokenBatch {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::size_t channels = 0;
  std::size_t prefix = 2;
  std::size_t grid_h = 14;
  std::size_t grid_w = 14;
  std::vector<double> data;  // batch x tokens x channels

  static TokenBatch zeros(std::size_t batch, std::size_t channels, std::size_t prefix, std::size_t grid_h,
                          std::size_t grid_w);

  double& at(std::size_t b, std::size_t n, std::size_t c) { return data[(b * tokens + n) * channels + c]; }
  double at(std::size_t b, std::size_t n, std::size_t c) const { return data[(b * tokens + n) * channels + c]; }

  // Tokens of sample b as an N x C matrix.
  Matrix sample(std::size_t b) const;
  void set_sample(std::size_t b, const Matrix& m);

  // Throws ShapeError/NumericError when the layout invariants do not hold.
  void validate() const;
  bool same_layout(const TokenBatch& other) const;
};

// batch x channels x H x W
struct Grid {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> data;

  double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return data[((b * channels + c) * h + y) * w + x];
  }
  double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return data[((b * channels + c) * h + y) * w + x];
  }
};

struct RolledTokens {
  Grid grid;
  std::vector<double> prefix;  // batch x prefix x channels, untouched
  std::size_t prefix_count = 0;
};

RolledTokens roll_to_grid(const TokenBatch& x);
TokenBatch unroll(const RolledTokens& r);

enum class ShiftMode { circular, zero_pad };

struct Translation {
  int dy = 0;
  int dx = 0;
  ShiftMode mode = ShiftMode::circular;

  Translation inverse() const { return {-dy, -dx, mode}; }
  std::string label() const;
};

// Content at (y, x) moves to (y + dy, x + dx).
Grid translate(const Grid& g, const Translation& t);

// Applies t to the spatial tokens of x, keeping the prefix tokens in place.
TokenBatch translate_tokens(const TokenBatch& x, const Translation& t);

// Shape-preserving map on token batches.
class TokenMap {
 public:
  virtual ~TokenMap() = default;
  virtual TokenBatch apply(const TokenBatch& x) const = 0;
  virtual std::string id() const = 0;
};

class IdentityMap final : public TokenMap {
 public:
  TokenBatch apply(const TokenBatch& x) const override { return x; }
  std::string id() const override { return "identity"; }
};

// Same two-layer ReLU MLP applied to every token.
class TokenMlp final : public TokenMap {
 public:
  TokenMlp(Matrix w1, Matrix w2);
  TokenBatch apply(const TokenBatch& x) const override;
  std::string id() const override { return "token_mlp"; }

 private:
  Matrix w1_, w2_;
};

// Single-head self-attention over all tokens with an additive N x N
// positional bias on the attention logits, plus a residual connection.
struct AttentionParams {
  Matrix wq, wk, wv;  // C x C
  Matrix pos_bias;    // N x N
  bool residual = true;
};

struct AttentionGrad {
  Matrix wq, wk, wv, pos_bias;
};

class SelfAttentionMap final : public TokenMap {
 public:
  explicit SelfAttentionMap(AttentionParams params);
  TokenBatch apply(const TokenBatch& x) const override;
  std::string id() const override { return "self_attention"; }

  const AttentionParams& params() const { return p_; }
  AttentionParams& params() { return p_; }

  // Gradient of sum(upstream * apply(x)) with respect to every parameter.
  AttentionGrad backward(const TokenBatch& x, const TokenBatch& upstream) const;

 private:
  AttentionParams p_;
};

// Circular convolution over the patch grid: each spatial token becomes
// sum over offsets (oy, ox) in [-radius, radius]^2 of x[y + oy, x + ox] * K_(oy,ox),
// wrapping at the borders. Prefix tokens pass through. Exactly equivariant
// under circular translations.
class ConvMixerMap final : public TokenMap {
 public:
  ConvMixerMap(std::size_t radius, std::vector<Matrix> kernels);
  TokenBatch apply(const TokenBatch& x) const override;
  std::string id() const override { return "conv_mixer"; }

 private:
  std::size_t radius_;
  std::vector<Matrix> kernels_;  // (2r+1)^2 matrices, C x C, row-major over (oy, ox)
};

// Mean squared error between the spatial tokens of phi(T x) and T phi(x).
double mu_t(const TokenMap& phi, const TokenBatch& x, const Translation& t);

struct SuiteReport {
  std::string phi_id;
  std::vector<std::string> translations;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over all (x, T) pairs
  std::size_t n = 0;

  // {"phi_id", "translations", "mean", "std", "n"}
  std::string to_json() const;
};

SuiteReport mu_t_suite(const TokenMap& phi, const std::vector<TokenBatch>& xs,
                       const std::vector<Translation>& translations);

// The eight unit circular shifts.
std::vector<Translation> unit_translations(ShiftMode mode = ShiftMode::circular);

// File layout: u64 batch, tokens, channels, prefix, grid_h, grid_w, followed by
// a matrix frame with rows = batch * tokens and cols = channels.
void write_token_batch(const std::filesystem::path& path, const TokenBatch& x);
TokenBatch read_token_batch(const std::filesystem::path& path);

}  // namespace dlab::eq
