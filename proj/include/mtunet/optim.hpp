#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "mtunet/checkpoint.hpp"
#include "mtunet/tensor.hpp"

namespace mtunet {

// Bias-corrected Adam with the usual defaults. Moments are keyed by
// parameter id, so the same optimizer can drive weights and sigmas together.
template <typename T>
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-8;

    explicit Adam(double lr = 1e-3) : lr_(lr) {}

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::uint64_t steps() const { return t_; }

    // Applies one update to every parameter and zeroes its gradient.
    void step(const ParamRefs<T>& params) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (auto* p : params) {
            auto& mom = moments_[p->id];
            if (mom.m.shape() != p->value.shape()) {
                mom.m = Tensor<double>(p->value.shape());
                mom.v = Tensor<double>(p->value.shape());
            }
            for (std::size_t i = 0; i < p->size(); ++i) {
                const double g = static_cast<double>(p->grad[i]);
                mom.m[i] = kBeta1 * mom.m[i] + (1.0 - kBeta1) * g;
                mom.v[i] = kBeta2 * mom.v[i] + (1.0 - kBeta2) * g * g;
                const double m_hat = mom.m[i] / c1;
                const double v_hat = mom.v[i] / c2;
                p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) -
                                             lr_ * m_hat / (std::sqrt(v_hat) + kEpsilon));
            }
            p->zero_grad();
        }
    }

    // Drops both moment estimates and the step counter.
    void reset_moments() {
        moments_.clear();
        t_ = 0;
    }

    const Tensor<double>* first_moment(const std::string& id) const {
        auto it = moments_.find(id);
        return it == moments_.end() ? nullptr : &it->second.m;
    }

private:
    struct Moments {
        Tensor<double> m, v;
    };
    double lr_;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

struct RlrpConfig {
    int patience = 10;
    double factor = 0.1;
    double min_delta = 0.0;
    bool rollback = true;
    double min_lr = 1e-7;

    void validate() const {
        if (patience < 1) throw ConfigError("RLRP patience must be >= 1");
        if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("RLRP factor must lie in (0,1)");
        if (min_delta < 0.0) throw ConfigError("RLRP min_delta must be >= 0");
    }
};

enum class RlrpAction { None, ReduceAndRollback };

// Reduce-on-plateau with best-epoch rollback. A snapshot of the tracked
// parameters is taken at every new best; after `patience` consecutive epochs
// with val_loss >= best - min_delta the rate is cut by `factor`, the best
// snapshot restored and the optimizer moments cleared.
template <typename T>
class RlrpScheduler {
public:
    explicit RlrpScheduler(RlrpConfig config = {}) : config_(config) { config_.validate(); }

    RlrpAction observe(int epoch, double val_loss, const ParamRefs<T>& params, Adam<T>& adam) {
        if (val_loss < best_loss_ - config_.min_delta) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
            bad_epochs_ = 0;
            best_ = snapshot(params, epoch, val_loss);
            return RlrpAction::None;
        }
        if (++bad_epochs_ < config_.patience) return RlrpAction::None;

        bad_epochs_ = 0;
        ++reductions_;
        adam.set_lr(std::max(adam.lr() * config_.factor, config_.min_lr));
        if (config_.rollback && best_) restore(params, *best_);
        adam.reset_moments();
        return RlrpAction::ReduceAndRollback;
    }

    double best_loss() const { return best_loss_; }
    int best_epoch() const { return best_epoch_; }
    int bad_epochs() const { return bad_epochs_; }
    int reductions() const { return reductions_; }
    const std::optional<Checkpoint<T>>& best_checkpoint() const { return best_; }
    const RlrpConfig& config() const { return config_; }

private:
    RlrpConfig config_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = -1;
    int bad_epochs_ = 0;
    int reductions_ = 0;
    std::optional<Checkpoint<T>> best_;
};

}  // namespace mtunet
