#pragma once

#include <string>
#include <utility>
#include <vector>

#include "meanfleet/autodiff.hpp"
#include "meanfleet/rng.hpp"

namespace mf::nn {

using ad::Tensor;
using ad::Tape;
using ad::Var;

enum class OutputActivation : std::uint8_t { None, Tanh, Sigmoid };

struct MlpConfig {
    std::vector<int> widths;  // input, hidden..., output
    double leaky_slope = 0.01;
    OutputActivation output = OutputActivation::None;
    bool batch_norm = false;   // post-activation BN on hidden layers
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

// Leaf vars of one tape, aligned with Mlp::parameters() order. Binding once
// and reusing the vars across repeated forwards makes gradients accumulate
// over time steps.
struct MlpBinding {
    std::vector<Var> vars;
};

// Fully connected network with leaky-ReLU hidden activations, optional
// post-activation batch normalization, Kaiming-uniform init, zero biases.
class Mlp {
  public:
    Mlp() = default;
    explicit Mlp(MlpConfig cfg);

    void init(Rng& rng);

    const MlpConfig& config() const { return cfg_; }
    int input_dim() const { return cfg_.widths.front(); }
    int output_dim() const { return cfg_.widths.back(); }

    // Binds every parameter to the tape once. trainable=false binds them as
    // constants: values flow forward but no adjoints are kept (a frozen
    // network that inputs still differentiate through).
    MlpBinding bind(Tape& tape, bool trainable = true);

    // Forward pass reusing previously bound parameter vars.
    Var forward_bound(Tape& tape, const MlpBinding& binding, Var x, bool train);

    // Convenience: bind + forward in one call.
    Var forward(Tape& tape, Var x, bool train, MlpBinding* binding = nullptr,
                bool trainable = true);

    // Inference path on plain tensors (BN in eval mode).
    Tensor forward_plain(const Tensor& x, bool parallel = true) const;

    // Trainable tensors in a stable order (weights, biases, BN gamma/beta).
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

    // Running statistics are state, not parameters; exposed for checkpoints
    // and tests.
    std::vector<Tensor*> running_stats();

  private:
    MlpConfig cfg_;
    struct Linear {
        Tensor w;  // in x out
        Tensor b;  // 1 x out
    };
    struct BnLayer {
        Tensor gamma, beta, run_mean, run_var;  // all 1 x F
    };
    std::vector<Linear> lin_;
    std::vector<BnLayer> bn_;
};

// Decoupled weight-decay adaptive moment optimizer.
class AdamW {
  public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

    void set_lr(double lr) { lr_ = lr; }
    int iterations() const { return t_; }

  private:
    double lr_, wd_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Rescales all gradients by min(1, max_norm / global L2 norm).
// Returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

// Gradients of bound parameters after backward(), aligned with
// binding.vars. Unreached parameters yield zero tensors.
std::vector<Tensor> collect_grads(const Tape& tape, const MlpBinding& binding);

}  // namespace mf::nn
