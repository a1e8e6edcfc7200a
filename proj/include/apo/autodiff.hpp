#pragma once

#include <Eigen/Dense>

#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

namespace apo::ad {

/// Backward reached a node that has no derivative rule.
class UnsupportedPrimitive : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its Tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  [[nodiscard]] const Eigen::MatrixXd& value() const;
  [[nodiscard]] double scalar() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
};

enum class Op {
  Constant,
  Parameter,
  Affine,        // x W + e b
  Add,
  Sub,
  Mul,           // elementwise
  Scale,         // c * x
  AddScalar,     // x + c
  Tanh,
  Log,
  Exp,
  Square,
  Min,           // elementwise min(a, b); ties select a
  Clip,          // clamp to [lo, hi]; gradient passes on the closed interval
  Mean,          // mean of all entries -> 1x1
  RowSum,        // n x k -> n x 1
  BroadcastRows, // 1 x k -> n x k
  Pick,          // n x k, column index per row -> n x 1
  Opaque,        // recorded value with no derivative rule
};

/// Gradient per parameter slot; slots never bound on the tape stay 0x0.
using SlotGradients = std::vector<Eigen::MatrixXd>;

/**
 * Reverse-mode tape over dense matrices.
 *
 * Nodes are appended in evaluation order, so a single reverse sweep is a
 * valid topological order for backpropagation.
 */
class Tape {
 public:
  Var constant(Eigen::MatrixXd value);
  /// Leaf whose gradient is reported under `slot` by backward().
  Var parameter(const Eigen::MatrixXd& value, int slot);

  Var affine(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double c);
  Var add_scalar(Var x, double c);
  Var tanh(Var x);
  Var log(Var x);
  Var exp(Var x);
  Var square(Var x);
  Var min(Var a, Var b);
  Var clip(Var x, double lo, double hi);
  Var mean(Var x);
  Var row_sum(Var x);
  Var broadcast_rows(Var row, Eigen::Index n);
  Var pick(Var x, std::vector<int> columns);
  /// Records a value computed outside the tape from `inputs`. Differentiating
  /// through it raises UnsupportedPrimitive.
  Var opaque(std::string name, Eigen::MatrixXd value, const std::vector<Var>& inputs);

  /// d loss / d parameter for every slot; `loss` must be 1x1.
  SlotGradients backward(Var loss) const;

  [[nodiscard]] const Eigen::MatrixXd& value(int id) const { return nodes_[id].value; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Constant;
    Eigen::MatrixXd value;
    std::vector<int> inputs;
    bool requires_grad = false;
    int slot = -1;
    double coef = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<int> columns;
    std::string name;
  };

  Var push(Node node);
  void check_owner(Var v) const;
  void check_same_shape(Var a, Var b, const char* op) const;

  std::deque<Node> nodes_;
  int max_slot_ = -1;
};

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator*(double c, Var x) { return x.tape->scale(x, c); }
inline Var operator*(Var x, double c) { return x.tape->scale(x, c); }
inline Var operator-(Var x) { return x.tape->scale(x, -1.0); }
inline Var operator+(Var x, double c) { return x.tape->add_scalar(x, c); }
inline Var operator-(Var x, double c) { return x.tape->add_scalar(x, -c); }

}  // namespace apo::ad
