#pragma once

// Tensor-level reverse-mode automatic differentiation.
//
// Every value is a dense double matrix. Operations build a DAG of Nodes; calling
// backward() on a scalar root walks the DAG in reverse topological order and
// accumulates gradients into every node that requires them. Parameters are
// persistent leaf nodes whose gradients survive across graphs until zeroed.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace eventlm::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad{false};
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward_fn;

    // Allocates a zero gradient of the value's shape on first use.
    Matrix& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    [[nodiscard]] const Matrix& value() const { return node_->value; }
    [[nodiscard]] const Matrix& grad() const { return node_->grad; }
    [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
    [[nodiscard]] double scalar() const;
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    [[nodiscard]] bool valid() const { return static_cast<bool>(node_); }
    [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// A named, persistent leaf. The optimizer mutates value() in place; the graph
// sees the new value on the next forward pass.
class Parameter {
public:
    Parameter(std::string name, std::string family, Matrix init);

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::string& family() const { return family_; }
    [[nodiscard]] Matrix& value() { return node_->value; }
    [[nodiscard]] const Matrix& value() const { return node_->value; }
    [[nodiscard]] const Matrix& grad() const { return node_->grad; }
    [[nodiscard]] bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    [[nodiscard]] Eigen::Index size() const { return node_->value.size(); }

    [[nodiscard]] bool trainable() const { return node_->requires_grad; }
    void set_trainable(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad.resize(0, 0); }

    [[nodiscard]] Var var() const { return Var(node_); }

private:
    std::string name_;
    std::string family_;
    std::shared_ptr<Node> node_;
};

using ParameterPtr = std::shared_ptr<Parameter>;

[[nodiscard]] Var constant(Matrix value);
[[nodiscard]] Var scalar_constant(double value);

// Builds a node from a computed value. `backward` is dropped when no input
// requires a gradient.
[[nodiscard]] Var make_node(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
void backward(const Var& root);

// Elementwise arithmetic (shapes must match).
[[nodiscard]] Var add(const Var& a, const Var& b);
[[nodiscard]] Var sub(const Var& a, const Var& b);
[[nodiscard]] Var mul(const Var& a, const Var& b);
[[nodiscard]] Var scale(const Var& a, double s);
[[nodiscard]] Var add_scalar(const Var& a, double s);
[[nodiscard]] Var mul_const(const Var& a, const Matrix& m);

// Broadcasting: `row` is 1 x cols(a) and is added/multiplied into every row.
[[nodiscard]] Var add_row(const Var& a, const Var& row);
[[nodiscard]] Var mul_row(const Var& a, const Var& row);
// Scales row r of `a` by the constant col[r].
[[nodiscard]] Var scale_rows(const Var& a, const Vector& col);

// Linear algebra.
[[nodiscard]] Var matmul(const Var& a, const Var& b);
[[nodiscard]] Var matmul_nt(const Var& a, const Var& b);  // a * b^T
[[nodiscard]] Var linear(const Var& x, const Var& weight);  // x * W^T, W is out x in

// Shape manipulation.
[[nodiscard]] Var gather_rows(const Var& a, const std::vector<int>& rows);
[[nodiscard]] Var concat_rows(const std::vector<Var>& parts);
[[nodiscard]] Var concat_cols(const std::vector<Var>& parts);
[[nodiscard]] Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
// Column vector with entries a(rows[i], cols[i]).
[[nodiscard]] Var pick(const Var& a, const std::vector<int>& rows, const std::vector<int>& cols);

// Reductions.
[[nodiscard]] Var sum(const Var& a);
[[nodiscard]] Var row_sums(const Var& a);  // rows x 1

// Pointwise nonlinearities.
[[nodiscard]] Var exp(const Var& a);
[[nodiscard]] Var log(const Var& a);
[[nodiscard]] Var softplus(const Var& a);
[[nodiscard]] Var gelu(const Var& a);
[[nodiscard]] Var relu(const Var& a);
[[nodiscard]] Var square(const Var& a);
[[nodiscard]] Var clamp_max(const Var& a, double hi);

// Row-wise layer normalization with learnable gain and bias (both 1 x cols).
[[nodiscard]] Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// Row-wise softmax where entry (i, j) with j > i is masked out.
[[nodiscard]] Var causal_softmax(const Var& scores);
[[nodiscard]] Var log_softmax_rows(const Var& a);

// Scalar helpers shared with the non-graph evaluation paths.
[[nodiscard]] double softplus_value(double x);
[[nodiscard]] double sigmoid_value(double x);
[[nodiscard]] double gelu_value(double x);
[[nodiscard]] double gelu_derivative(double x);

}  // namespace eventlm::ad
