#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace p2p {

/// Adaptive-moment optimizer over a list of dense tensors.
class Adam {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    Adam() = default;
    Adam(const std::vector<Eigen::MatrixXd>& shapes, Options options) : options_(options) {
        for (const auto& s : shapes) {
            m_.push_back(Eigen::MatrixXd::Zero(s.rows(), s.cols()));
            v_.push_back(Eigen::MatrixXd::Zero(s.rows(), s.cols()));
        }
    }

    template <typename ParamAccess>
    void step(ParamAccess&& param, const std::vector<Eigen::MatrixXd>& grads) {
        if (grads.size() != m_.size()) throw std::invalid_argument("Adam: gradient count mismatch");
        ++t_;
        const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < grads.size(); ++i) {
            m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * grads[i];
            v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * grads[i].cwiseAbs2();
            Eigen::MatrixXd& p = param(i);
            p.array() -= options_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.epsilon);
        }
    }

    std::size_t steps() const { return t_; }

private:
    Options options_{};
    std::vector<Eigen::MatrixXd> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace p2p
