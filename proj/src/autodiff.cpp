#include "eventlm/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace eventlm::ad {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

Node& in(Node& n, std::size_t i) { return *n.inputs[i]; }

}  // namespace

Matrix& Node::grad_buffer() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
}

double Var::scalar() const {
    if (node_->value.size() != 1) {
        throw std::logic_error("Var::scalar on a non-scalar value");
    }
    return node_->value(0, 0);
}

Parameter::Parameter(std::string name, std::string family, Matrix init)
    : name_(std::move(name)), family_(std::move(family)), node_(std::make_shared<Node>()) {
    node_->value = std::move(init);
    node_->requires_grad = true;
}

Var constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var make_node(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool needs = false;
    node->inputs.reserve(inputs.size());
    for (const auto& v : inputs) {
        needs = needs || v.requires_grad();
        node->inputs.push_back(v.node());
    }
    node->requires_grad = needs;
    if (needs) {
        node->backward_fn = std::move(backward);
    } else {
        node->inputs.clear();
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.node()->value.size() != 1) {
        throw std::invalid_argument("backward: root must be a scalar");
    }
    if (!root.requires_grad()) {
        return;
    }
    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer().array() += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.size() != 0) {
            node->backward_fn(*node);
        }
    }
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return make_node(a.value() + b.value(), {a, b}, [](Node& n) {
        if (in(n, 0).requires_grad) in(n, 0).grad_buffer() += n.grad;
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer() += n.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return make_node(a.value() - b.value(), {a, b}, [](Node& n) {
        if (in(n, 0).requires_grad) in(n, 0).grad_buffer() += n.grad;
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer() -= n.grad;
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    return make_node(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        if (in(n, 0).requires_grad) in(n, 0).grad_buffer() += n.grad.cwiseProduct(in(n, 1).value);
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer() += n.grad.cwiseProduct(in(n, 0).value);
    });
}

Var scale(const Var& a, double s) {
    return make_node(a.value() * s, {a}, [s](Node& n) { in(n, 0).grad_buffer() += n.grad * s; });
}

Var add_scalar(const Var& a, double s) {
    return make_node(a.value().array() + s, {a}, [](Node& n) { in(n, 0).grad_buffer() += n.grad; });
}

Var mul_const(const Var& a, const Matrix& m) {
    if (a.rows() != m.rows() || a.cols() != m.cols()) {
        throw std::invalid_argument("mul_const: shape mismatch");
    }
    return make_node(a.value().cwiseProduct(m), {a},
                     [m](Node& n) { in(n, 0).grad_buffer() += n.grad.cwiseProduct(m); });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument("add_row: row must be 1 x cols(a)");
    }
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make_node(std::move(out), {a, row}, [](Node& n) {
        if (in(n, 0).requires_grad) in(n, 0).grad_buffer() += n.grad;
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer() += n.grad.colwise().sum();
    });
}

Var mul_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw std::invalid_argument("mul_row: row must be 1 x cols(a)");
    }
    Matrix out = a.value().array().rowwise() * row.value().row(0).array();
    return make_node(std::move(out), {a, row}, [](Node& n) {
        const Matrix& av = in(n, 0).value;
        const Matrix& rv = in(n, 1).value;
        if (in(n, 0).requires_grad) {
            in(n, 0).grad_buffer().array() += n.grad.array().rowwise() * rv.row(0).array();
        }
        if (in(n, 1).requires_grad) {
            in(n, 1).grad_buffer() += n.grad.cwiseProduct(av).colwise().sum();
        }
    });
}

Var scale_rows(const Var& a, const Vector& col) {
    if (col.size() != a.rows()) {
        throw std::invalid_argument("scale_rows: length mismatch");
    }
    Matrix out = a.value().array().colwise() * col.array();
    return make_node(std::move(out), {a}, [col](Node& n) {
        in(n, 0).grad_buffer().array() += n.grad.array().colwise() * col.array();
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    return make_node(a.value() * b.value(), {a, b}, [](Node& n) {
        if (in(n, 0).requires_grad) in(n, 0).grad_buffer().noalias() += n.grad * in(n, 1).value.transpose();
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer().noalias() += in(n, 0).value.transpose() * n.grad;
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    }
    return make_node(a.value() * b.value().transpose(), {a, b}, [](Node& n) {
        if (in(n, 0).requires_grad) in(n, 0).grad_buffer().noalias() += n.grad * in(n, 1).value;
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer().noalias() += n.grad.transpose() * in(n, 0).value;
    });
}

Var linear(const Var& x, const Var& weight) { return matmul_nt(x, weight); }

Var gather_rows(const Var& a, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= a.rows()) {
            throw std::out_of_range("gather_rows: index " + std::to_string(rows[i]) + " out of range");
        }
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    return make_node(std::move(out), {a}, [rows](Node& n) {
        Matrix& g = in(n, 0).grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            g.row(rows[i]) += n.grad.row(static_cast<Eigen::Index>(i));
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: no parts");
    }
    Eigen::Index total = 0;
    const Eigen::Index cols = parts.front().cols();
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw std::invalid_argument("concat_rows: column mismatch");
        }
        total += p.rows();
    }
    Matrix out(total, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_node(std::move(out), parts, [offsets](Node& n) {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            Node& p = in(n, i);
            if (p.requires_grad) p.grad_buffer() += n.grad.middleRows(offsets[i], p.value.rows());
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: no parts");
    }
    Eigen::Index total = 0;
    const Eigen::Index rows = parts.front().rows();
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw std::invalid_argument("concat_cols: row mismatch");
        }
        total += p.cols();
    }
    Matrix out(rows, total);
    std::vector<Eigen::Index> offsets;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_node(std::move(out), parts, [offsets](Node& n) {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            Node& p = in(n, i);
            if (p.requires_grad) p.grad_buffer() += n.grad.middleCols(offsets[i], p.value.cols());
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw std::out_of_range("slice_cols: range out of bounds");
    }
    return make_node(a.value().middleCols(start, count), {a},
                     [start, count](Node& n) { in(n, 0).grad_buffer().middleCols(start, count) += n.grad; });
}

Var pick(const Var& a, const std::vector<int>& rows, const std::vector<int>& cols) {
    if (rows.size() != cols.size()) {
        throw std::invalid_argument("pick: index lists differ in length");
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= a.rows() || cols[i] < 0 || cols[i] >= a.cols()) {
            throw std::out_of_range("pick: index out of range");
        }
        out(static_cast<Eigen::Index>(i), 0) = a.value()(rows[i], cols[i]);
    }
    return make_node(std::move(out), {a}, [rows, cols](Node& n) {
        Matrix& g = in(n, 0).grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            g(rows[i], cols[i]) += n.grad(static_cast<Eigen::Index>(i), 0);
        }
    });
}

Var sum(const Var& a) {
    return make_node(Matrix::Constant(1, 1, a.value().sum()), {a},
                     [](Node& n) { in(n, 0).grad_buffer().array() += n.grad(0, 0); });
}

Var row_sums(const Var& a) {
    return make_node(a.value().rowwise().sum(), {a}, [](Node& n) {
        in(n, 0).grad_buffer().colwise() += n.grad.col(0);
    });
}

Var exp(const Var& a) {
    Matrix out = a.value().array().exp();
    return make_node(out, {a}, [](Node& n) { in(n, 0).grad_buffer() += n.grad.cwiseProduct(n.value); });
}

Var log(const Var& a) {
    return make_node(a.value().array().log(), {a},
                     [](Node& n) { in(n, 0).grad_buffer().array() += n.grad.array() / in(n, 0).value.array(); });
}

Var softplus(const Var& a) {
    return make_node(a.value().unaryExpr([](double x) { return softplus_value(x); }), {a}, [](Node& n) {
        in(n, 0).grad_buffer().array() +=
            n.grad.array() * in(n, 0).value.unaryExpr([](double x) { return sigmoid_value(x); }).array();
    });
}

Var gelu(const Var& a) {
    return make_node(a.value().unaryExpr([](double x) { return gelu_value(x); }), {a}, [](Node& n) {
        in(n, 0).grad_buffer().array() +=
            n.grad.array() * in(n, 0).value.unaryExpr([](double x) { return gelu_derivative(x); }).array();
    });
}

Var relu(const Var& a) {
    return make_node(a.value().cwiseMax(0.0), {a}, [](Node& n) {
        in(n, 0).grad_buffer().array() += (in(n, 0).value.array() > 0.0).select(n.grad.array(), 0.0);
    });
}

Var square(const Var& a) {
    return make_node(a.value().array().square(), {a},
                     [](Node& n) { in(n, 0).grad_buffer().array() += 2.0 * n.grad.array() * in(n, 0).value.array(); });
}

Var clamp_max(const Var& a, double hi) {
    return make_node(a.value().cwiseMin(hi), {a}, [hi](Node& n) {
        in(n, 0).grad_buffer().array() += (in(n, 0).value.array() < hi).select(n.grad.array(), 0.0);
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Eigen::Index rows = x.rows();
    const Eigen::Index cols = x.cols();
    if (gain.rows() != 1 || gain.cols() != cols || bias.rows() != 1 || bias.cols() != cols) {
        throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
    }
    Matrix xhat(rows, cols);
    Vector inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    return make_node(std::move(out), {x, gain, bias}, [xhat, inv_std](Node& n) {
        const Matrix& g = in(n, 1).value;
        if (in(n, 1).requires_grad) in(n, 1).grad_buffer() += n.grad.cwiseProduct(xhat).colwise().sum();
        if (in(n, 2).requires_grad) in(n, 2).grad_buffer() += n.grad.colwise().sum();
        if (in(n, 0).requires_grad) {
            Matrix& gx = in(n, 0).grad_buffer();
            const double inv_cols = 1.0 / static_cast<double>(xhat.cols());
            for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                const Eigen::RowVectorXd dxhat = n.grad.row(r).cwiseProduct(g.row(0));
                const double m1 = dxhat.sum() * inv_cols;
                const double m2 = dxhat.dot(xhat.row(r)) * inv_cols;
                gx.row(r).array() += inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
            }
        }
    });
}

Var causal_softmax(const Var& scores) {
    const Eigen::Index rows = scores.rows();
    if (scores.cols() != rows) {
        throw std::invalid_argument("causal_softmax: scores must be square");
    }
    Matrix p = Matrix::Zero(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        auto valid = scores.value().row(i).head(i + 1);
        const double mx = valid.maxCoeff();
        p.row(i).head(i + 1) = (valid.array() - mx).exp();
        p.row(i).head(i + 1) /= p.row(i).head(i + 1).sum();
    }
    return make_node(std::move(p), {scores}, [](Node& n) {
        Matrix& g = in(n, 0).grad_buffer();
        for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            auto pr = n.value.row(i).head(i + 1);
            auto dr = n.grad.row(i).head(i + 1);
            const double dot = pr.dot(dr);
            g.row(i).head(i + 1).array() += pr.array() * (dr.array() - dot);
        }
    });
}

Var log_softmax_rows(const Var& a) {
    Matrix out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double mx = out.row(r).maxCoeff();
        const double lse = mx + std::log((out.row(r).array() - mx).exp().sum());
        out.row(r).array() -= lse;
    }
    return make_node(std::move(out), {a}, [](Node& n) {
        Matrix& g = in(n, 0).grad_buffer();
        for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
            const double total = n.grad.row(r).sum();
            g.row(r).array() += n.grad.row(r).array() - n.value.row(r).array().exp() * total;
        }
    });
}

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_value(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

}  // namespace eventlm::ad
