#include "p2p/ktu/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace p2p::ktu {

double softplus(double x) {
    // log(1 + e^x) without overflow
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

const Eigen::MatrixXd& Var::value() const { return tape->nodes_[id].value; }

Eigen::MatrixXd& Var::grad() const { return tape->grad_of(id); }

Eigen::MatrixXd& Tape::grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::push(Eigen::MatrixXd value, std::function<void(Tape&, std::size_t)> backward) {
    nodes_.push_back(Node{std::move(value), Eigen::MatrixXd(), std::move(backward)});
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Eigen::MatrixXd value) { return push(std::move(value), nullptr); }

Var Tape::parameter(const Eigen::MatrixXd& value, Eigen::MatrixXd* grad_sink) {
    return push(value, [grad_sink](Tape& t, std::size_t self) {
        if (grad_sink != nullptr) *grad_sink += t.nodes_[self].grad;
    });
}

Var Tape::matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    const std::size_t ia = a.id, ib = b.id;
    return push(a.value() * b.value(), [ia, ib](Tape& t, std::size_t self) {
        const Eigen::MatrixXd& g = t.nodes_[self].grad;
        t.grad_of(ia).noalias() += g * t.nodes_[ib].value.transpose();
        t.grad_of(ib).noalias() += t.nodes_[ia].value.transpose() * g;
    });
}

Var Tape::matmul_transposed(Var a, Var b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_transposed: inner dimensions differ");
    const std::size_t ia = a.id, ib = b.id;
    return push(a.value() * b.value().transpose(), [ia, ib](Tape& t, std::size_t self) {
        const Eigen::MatrixXd& g = t.nodes_[self].grad;
        t.grad_of(ia).noalias() += g * t.nodes_[ib].value;
        t.grad_of(ib).noalias() += g.transpose() * t.nodes_[ia].value;
    });
}

Var Tape::add(Var a, Var b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: shape mismatch");
    const std::size_t ia = a.id, ib = b.id;
    return push(a.value() + b.value(), [ia, ib](Tape& t, std::size_t self) {
        t.grad_of(ia) += t.nodes_[self].grad;
        t.grad_of(ib) += t.nodes_[self].grad;
    });
}

Var Tape::add_row(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
    const std::size_t ia = a.id, ir = row.id;
    Eigen::MatrixXd out = a.value().rowwise() + row.value().row(0);
    return push(std::move(out), [ia, ir](Tape& t, std::size_t self) {
        const Eigen::MatrixXd& g = t.nodes_[self].grad;
        t.grad_of(ia) += g;
        t.grad_of(ir) += g.colwise().sum();
    });
}

Var Tape::scale(Var a, double s) {
    const std::size_t ia = a.id;
    return push(a.value() * s, [ia, s](Tape& t, std::size_t self) { t.grad_of(ia) += s * t.nodes_[self].grad; });
}

Var Tape::add_scalar(Var a, double s) {
    const std::size_t ia = a.id;
    return push(a.value().array() + s, [ia](Tape& t, std::size_t self) { t.grad_of(ia) += t.nodes_[self].grad; });
}

Var Tape::hadamard_const(Var a, const Eigen::MatrixXd& mask) {
    if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw std::invalid_argument("hadamard: shape mismatch");
    const std::size_t ia = a.id;
    return push(a.value().cwiseProduct(mask), [ia, mask](Tape& t, std::size_t self) {
        t.grad_of(ia) += t.nodes_[self].grad.cwiseProduct(mask);
    });
}

Var Tape::relu(Var a) {
    const std::size_t ia = a.id;
    return push(a.value().cwiseMax(0.0), [ia](Tape& t, std::size_t self) {
        const Eigen::MatrixXd& x = t.nodes_[ia].value;
        t.grad_of(ia) += (x.array() > 0.0).select(t.nodes_[self].grad, 0.0);
    });
}

Var Tape::softplus(Var a) {
    const std::size_t ia = a.id;
    return push(a.value().unaryExpr([](double x) { return ktu::softplus(x); }), [ia](Tape& t, std::size_t self) {
        const Eigen::MatrixXd& x = t.nodes_[ia].value;
        t.grad_of(ia) += t.nodes_[self].grad.cwiseProduct(x.unaryExpr([](double v) { return sigmoid(v); }));
    });
}

Var Tape::softmax_rows(Var a) {
    const std::size_t ia = a.id;
    Eigen::MatrixXd y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double m = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - m).exp();
        y.row(r) /= y.row(r).sum();
    }
    return push(std::move(y), [ia](Tape& t, std::size_t self) {
        const Eigen::MatrixXd& y = t.nodes_[self].value;
        const Eigen::MatrixXd& g = t.nodes_[self].grad;
        const Eigen::VectorXd dot = y.cwiseProduct(g).rowwise().sum();
        t.grad_of(ia) += y.cwiseProduct(g.colwise() - dot);
    });
}

Var Tape::layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
    const Eigen::Index n = a.cols();
    if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
        throw std::invalid_argument("layer_norm: parameter shape mismatch");
    const Eigen::MatrixXd& x = a.value();
    Eigen::MatrixXd xhat(x.rows(), n);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mean) * inv_std[r];
    }
    Eigen::MatrixXd y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    const std::size_t ia = a.id, ig = gamma.id, ib = beta.id;
    return push(std::move(y), [ia, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                                   std::size_t self) {
        const Eigen::MatrixXd& g = t.nodes_[self].grad;
        const Eigen::RowVectorXd gam = t.nodes_[ig].value.row(0);
        t.grad_of(ig) += g.cwiseProduct(xhat).colwise().sum();
        t.grad_of(ib) += g.colwise().sum();
        const Eigen::MatrixXd dxhat = g.array().rowwise() * gam.array();
        Eigen::MatrixXd& ga = t.grad_of(ia);
        const double cols = static_cast<double>(xhat.cols());
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
            const double mean_d = dxhat.row(r).sum() / cols;
            const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / cols;
            ga.row(r) += inv_std[r] * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
        }
    });
}

Var Tape::cols(Var a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || start + n > a.cols()) throw std::invalid_argument("cols: slice out of range");
    const std::size_t ia = a.id;
    return push(a.value().middleCols(start, n), [ia, start, n](Tape& t, std::size_t self) {
        t.grad_of(ia).middleCols(start, n) += t.nodes_[self].grad;
    });
}

Var Tape::hconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hconcat: nothing to concatenate");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("hconcat: row mismatch");
        total += p.cols();
    }
    Eigen::MatrixXd out(rows, total);
    std::vector<std::size_t> ids;
    std::vector<Eigen::Index> widths;
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
        out.middleCols(offset, p.cols()) = p.value();
        offset += p.cols();
        ids.push_back(p.id);
        widths.push_back(p.cols());
    }
    return push(std::move(out), [ids, widths](Tape& t, std::size_t self) {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            t.grad_of(ids[i]) += t.nodes_[self].grad.middleCols(off, widths[i]);
            off += widths[i];
        }
    });
}

Var Tape::row(Var a, Eigen::Index r) {
    if (r < 0 || r >= a.rows()) throw std::invalid_argument("row: index out of range");
    const std::size_t ia = a.id;
    return push(a.value().row(r), [ia, r](Tape& t, std::size_t self) {
        t.grad_of(ia).row(r) += t.nodes_[self].grad.row(0);
    });
}

void Tape::backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0 || !n.backward) continue;
        n.backward(*this, i);
    }
}

}  // namespace p2p::ktu
