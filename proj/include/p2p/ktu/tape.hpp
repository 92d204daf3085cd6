#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace p2p::ktu {

class Tape;

/// Handle to a matrix value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Eigen::MatrixXd& value() const;
    Eigen::MatrixXd& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode recorder over dense matrices. Nodes are appended in evaluation
/// order, so a single reverse sweep visits every consumer before its inputs.
class Tape {
public:
    /// Constant input; gradients are accumulated but not propagated further.
    Var constant(Eigen::MatrixXd value);

    /// Trainable leaf; backward() adds the node gradient into `*grad_sink`.
    Var parameter(const Eigen::MatrixXd& value, Eigen::MatrixXd* grad_sink);

    Var matmul(Var a, Var b);
    Var matmul_transposed(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var hadamard_const(Var a, const Eigen::MatrixXd& mask);
    Var relu(Var a);
    Var softplus(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);
    Var cols(Var a, Eigen::Index start, Eigen::Index n);
    Var hconcat(const std::vector<Var>& parts);
    Var row(Var a, Eigen::Index r);

    /// Propagates gradients already seeded into node grads (see Var::grad).
    void backward();

    std::size_t size() const { return nodes_.size(); }

private:
    friend struct Var;
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        std::function<void(Tape&, std::size_t)> backward;
    };

    Var push(Eigen::MatrixXd value, std::function<void(Tape&, std::size_t)> backward);
    Node& node(std::size_t id) { return nodes_[id]; }
    Eigen::MatrixXd& grad_of(std::size_t id);

    std::vector<Node> nodes_;
};

double softplus(double x);
double sigmoid(double x);

}  // namespace p2p::ktu
