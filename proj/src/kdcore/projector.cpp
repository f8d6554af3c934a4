#include <algorithm>

#include "dlab/error.hpp"
#include "dlab/kdcore.hpp"

namespace dlab::kd {

ProjectorState ProjectorState::linear(Matrix w) {
  ProjectorState p;
  p.layers.push_back(std::move(w));
  return p;
}

ProjectorState ProjectorState::mlp(std::vector<Matrix> layers) {
  ProjectorState p;
  p.layers = std::move(layers);
  p.validate();
  return p;
}

std::size_t ProjectorState::input_dim() const { return layers.empty() ? 0 : layers.front().rows(); }
std::size_t ProjectorState::output_dim() const { return layers.empty() ? 0 : layers.back().cols(); }

void ProjectorState::validate() const {
  if (layers.empty()) throw ShapeError("projector: no layers");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i - 1].cols() != layers[i].rows()) {
      throw ShapeError("projector: layer " + std::to_string(i - 1) + " (" + layers[i - 1].shape_string() +
                       ") does not chain into layer " + std::to_string(i) + " (" + layers[i].shape_string() + ")");
    }
  }
}

namespace {

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = std::max(v, 0.0);
}

void check_input(const Matrix& zs, const ProjectorState& p) {
  p.validate();
  if (zs.cols() != p.input_dim()) {
    throw ShapeError("project: input " + zs.shape_string() + " does not match projector input dim " +
                     std::to_string(p.input_dim()));
  }
}

}  // namespace

Matrix relu_stack_forward(const Matrix& x, std::span<const Matrix> layers) {
  if (layers.empty()) throw ShapeError("relu stack: no layers");
  Matrix h = matmul(x, layers[0]);
  for (std::size_t i = 1; i < layers.size(); ++i) {
    relu_inplace(h);
    h = matmul(h, layers[i]);
  }
  return h;
}

ProjectorGrad relu_stack_vjp(const Matrix& x, std::span<const Matrix> layers, const Matrix& upstream) {
  const std::size_t depth = layers.size();
  if (depth == 0) throw ShapeError("relu stack: no layers");
  // inputs[i] is the (post-activation) input to layer i; pre[i] its pre-activation output.
  std::vector<Matrix> inputs{x};
  std::vector<Matrix> pre;
  for (std::size_t i = 0; i < depth; ++i) {
    pre.push_back(matmul(inputs.back(), layers[i]));
    if (i + 1 < depth) {
      Matrix a = pre.back();
      relu_inplace(a);
      inputs.push_back(std::move(a));
    }
  }
  if (upstream.rows() != x.rows() || upstream.cols() != layers.back().cols()) {
    throw ShapeError("relu stack vjp: upstream " + upstream.shape_string() + " does not match output " +
                     std::to_string(x.rows()) + "x" + std::to_string(layers.back().cols()));
  }

  ProjectorGrad g;
  g.grad_layers.resize(depth);
  Matrix delta = upstream;
  for (std::size_t i = depth; i-- > 0;) {
    g.grad_layers[i] = matmul_tn(inputs[i], delta);
    Matrix back = matmul_nt(delta, layers[i]);
    if (i > 0) {
      auto bd = back.data();
      auto zd = pre[i - 1].data();
      for (std::size_t k = 0; k < bd.size(); ++k)
        if (zd[k] <= 0.0) bd[k] = 0.0;
    }
    delta = std::move(back);
  }
  g.grad_input = std::move(delta);
  return g;
}

Matrix project(const Matrix& zs, const ProjectorState& p) {
  check_input(zs, p);
  return relu_stack_forward(zs, p.layers);
}

ProjectorGrad project_vjp(const Matrix& zs, const ProjectorState& p, const Matrix& upstream) {
  check_input(zs, p);
  return relu_stack_vjp(zs, p.layers, upstream);
}

}  // namespace dlab::kd
