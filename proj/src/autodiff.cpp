#include "apo/autodiff.hpp"

#include <cmath>

namespace apo::ad {

const Eigen::MatrixXd& Var::value() const {
  if (tape == nullptr) throw std::logic_error("Var: not bound to a tape");
  return tape->value(id);
}

double Var::scalar() const {
  const Eigen::MatrixXd& v = value();
  if (v.size() != 1) throw std::logic_error("Var::scalar: value is not 1x1");
  return v(0, 0);
}

Var Tape::push(Node node) {
  for (int in : node.inputs) {
    if (nodes_[in].requires_grad) node.requires_grad = true;
  }
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_owner(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::logic_error("Tape: variable belongs to another tape");
  }
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  check_owner(a);
  check_owner(b);
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw std::invalid_argument(std::string("Tape::") + op + ": shape mismatch");
  }
}

Var Tape::constant(Eigen::MatrixXd value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Eigen::MatrixXd& value, int slot) {
  if (slot < 0) throw std::invalid_argument("Tape::parameter: negative slot");
  Node n;
  n.op = Op::Parameter;
  n.value = value;
  n.requires_grad = true;
  n.slot = slot;
  max_slot_ = std::max(max_slot_, slot);
  return push(std::move(n));
}

Var Tape::affine(Var x, Var weight, Var bias) {
  check_owner(x);
  check_owner(weight);
  check_owner(bias);
  const auto& xv = nodes_[x.id].value;
  const auto& wv = nodes_[weight.id].value;
  const auto& bv = nodes_[bias.id].value;
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw std::invalid_argument("Tape::affine: shape mismatch");
  }
  Node n;
  n.op = Op::Affine;
  n.value = xv * wv;
  n.value.rowwise() += bv.row(0);
  n.inputs = {x.id, weight.id, bias.id};
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::Add;
  n.value = nodes_[a.id].value + nodes_[b.id].value;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::Sub;
  n.value = nodes_[a.id].value - nodes_[b.id].value;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::Mul;
  n.value = nodes_[a.id].value.cwiseProduct(nodes_[b.id].value);
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::scale(Var x, double c) {
  check_owner(x);
  Node n;
  n.op = Op::Scale;
  n.value = c * nodes_[x.id].value;
  n.coef = c;
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::add_scalar(Var x, double c) {
  check_owner(x);
  Node n;
  n.op = Op::AddScalar;
  n.value = nodes_[x.id].value.array() + c;
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  check_owner(x);
  Node n;
  n.op = Op::Tanh;
  n.value = nodes_[x.id].value.array().tanh();
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::log(Var x) {
  check_owner(x);
  Node n;
  n.op = Op::Log;
  n.value = nodes_[x.id].value.array().log();
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::exp(Var x) {
  check_owner(x);
  Node n;
  n.op = Op::Exp;
  n.value = nodes_[x.id].value.array().exp();
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::square(Var x) {
  check_owner(x);
  Node n;
  n.op = Op::Square;
  n.value = nodes_[x.id].value.array().square();
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::min(Var a, Var b) {
  check_same_shape(a, b, "min");
  Node n;
  n.op = Op::Min;
  n.value = nodes_[a.id].value.cwiseMin(nodes_[b.id].value);
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::clip(Var x, double lo, double hi) {
  check_owner(x);
  if (!(lo <= hi)) throw std::invalid_argument("Tape::clip: lo > hi");
  Node n;
  n.op = Op::Clip;
  n.value = nodes_[x.id].value.cwiseMax(lo).cwiseMin(hi);
  n.lo = lo;
  n.hi = hi;
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  check_owner(x);
  const auto& xv = nodes_[x.id].value;
  if (xv.size() == 0) throw std::invalid_argument("Tape::mean: empty input");
  Node n;
  n.op = Op::Mean;
  n.value = Eigen::MatrixXd::Constant(1, 1, xv.mean());
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::row_sum(Var x) {
  check_owner(x);
  Node n;
  n.op = Op::RowSum;
  n.value = nodes_[x.id].value.rowwise().sum();
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::broadcast_rows(Var row, Eigen::Index count) {
  check_owner(row);
  const auto& rv = nodes_[row.id].value;
  if (rv.rows() != 1) throw std::invalid_argument("Tape::broadcast_rows: input must have one row");
  Node n;
  n.op = Op::BroadcastRows;
  n.value = rv.replicate(count, 1);
  n.inputs = {row.id};
  return push(std::move(n));
}

Var Tape::pick(Var x, std::vector<int> columns) {
  check_owner(x);
  const auto& xv = nodes_[x.id].value;
  if (static_cast<Eigen::Index>(columns.size()) != xv.rows()) {
    throw std::invalid_argument("Tape::pick: one column index per row is required");
  }
  Node n;
  n.op = Op::Pick;
  n.value.resize(xv.rows(), 1);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const int c = columns[static_cast<std::size_t>(i)];
    if (c < 0 || c >= xv.cols()) throw std::out_of_range("Tape::pick: column index out of range");
    n.value(i, 0) = xv(i, c);
  }
  n.columns = std::move(columns);
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::opaque(std::string name, Eigen::MatrixXd value, const std::vector<Var>& inputs) {
  Node n;
  n.op = Op::Opaque;
  n.value = std::move(value);
  n.name = std::move(name);
  for (Var v : inputs) {
    check_owner(v);
    n.inputs.push_back(v.id);
  }
  return push(std::move(n));
}

SlotGradients Tape::backward(Var loss) const {
  check_owner(loss);
  if (nodes_[loss.id].value.size() != 1) throw std::invalid_argument("Tape::backward: loss must be 1x1");

  SlotGradients out(static_cast<std::size_t>(max_slot_ + 1));
  std::vector<Eigen::MatrixXd> grad(static_cast<std::size_t>(loss.id) + 1);
  grad[loss.id] = Eigen::MatrixXd::Ones(1, 1);

  auto accumulate = [&](int id, const Eigen::MatrixXd& g) {
    if (!nodes_[id].requires_grad) return;
    if (grad[id].size() == 0) {
      grad[id] = g;
    } else {
      grad[id] += g;
    }
  };

  for (int id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || grad[id].size() == 0) continue;
    const Eigen::MatrixXd& g = grad[id];
    const auto in = [&](std::size_t k) -> const Eigen::MatrixXd& { return nodes_[n.inputs[k]].value; };

    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Parameter: {
        Eigen::MatrixXd& slot = out[static_cast<std::size_t>(n.slot)];
        if (slot.size() == 0) {
          slot = g;
        } else {
          slot += g;
        }
        break;
      }
      case Op::Affine:
        accumulate(n.inputs[0], g * in(1).transpose());
        accumulate(n.inputs[1], in(0).transpose() * g);
        accumulate(n.inputs[2], g.colwise().sum());
        break;
      case Op::Add:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case Op::Sub:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], -g);
        break;
      case Op::Mul:
        accumulate(n.inputs[0], g.cwiseProduct(in(1)));
        accumulate(n.inputs[1], g.cwiseProduct(in(0)));
        break;
      case Op::Scale:
        accumulate(n.inputs[0], n.coef * g);
        break;
      case Op::AddScalar:
        accumulate(n.inputs[0], g);
        break;
      case Op::Tanh:
        accumulate(n.inputs[0], g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::Log:
        accumulate(n.inputs[0], g.cwiseQuotient(in(0)));
        break;
      case Op::Exp:
        accumulate(n.inputs[0], g.cwiseProduct(n.value));
        break;
      case Op::Square:
        accumulate(n.inputs[0], 2.0 * g.cwiseProduct(in(0)));
        break;
      case Op::Min: {
        const auto pick_a = (in(0).array() <= in(1).array()).cast<double>();
        accumulate(n.inputs[0], (g.array() * pick_a).matrix());
        accumulate(n.inputs[1], (g.array() * (1.0 - pick_a)).matrix());
        break;
      }
      case Op::Clip: {
        const auto inside = ((in(0).array() >= n.lo) && (in(0).array() <= n.hi)).cast<double>();
        accumulate(n.inputs[0], (g.array() * inside).matrix());
        break;
      }
      case Op::Mean: {
        const auto& xv = in(0);
        accumulate(n.inputs[0],
                   Eigen::MatrixXd::Constant(xv.rows(), xv.cols(), g(0, 0) / static_cast<double>(xv.size())));
        break;
      }
      case Op::RowSum:
        accumulate(n.inputs[0], g.replicate(1, in(0).cols()));
        break;
      case Op::BroadcastRows:
        accumulate(n.inputs[0], g.colwise().sum());
        break;
      case Op::Pick: {
        Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(in(0).rows(), in(0).cols());
        for (Eigen::Index i = 0; i < gx.rows(); ++i) gx(i, n.columns[static_cast<std::size_t>(i)]) = g(i, 0);
        accumulate(n.inputs[0], gx);
        break;
      }
      case Op::Opaque:
        throw UnsupportedPrimitive("backward: no derivative rule for '" + n.name + "'");
    }
  }
  return out;
}

}  // namespace apo::ad
