#include "meanfleet/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "meanfleet/kernels.hpp"

namespace mf::nn {

using nlohmann::json;

Mlp::Mlp(MlpConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    const int layers = static_cast<int>(cfg_.widths.size()) - 1;
    for (int l = 0; l < layers; ++l) {
        Linear lin;
        lin.w = Tensor(cfg_.widths[static_cast<size_t>(l)], cfg_.widths[static_cast<size_t>(l) + 1]);
        lin.b = Tensor(1, cfg_.widths[static_cast<size_t>(l) + 1]);
        lin_.push_back(std::move(lin));
    }
    if (cfg_.batch_norm) {
        for (int l = 0; l < layers - 1; ++l) {
            const int f = cfg_.widths[static_cast<size_t>(l) + 1];
            BnLayer bn;
            bn.gamma = Tensor(1, f, 1.0);
            bn.beta = Tensor(1, f, 0.0);
            bn.run_mean = Tensor(1, f, 0.0);
            bn.run_var = Tensor(1, f, 1.0);
            bn_.push_back(std::move(bn));
        }
    }
}

void Mlp::init(Rng& rng) {
    const double gain = std::sqrt(2.0 / (1.0 + cfg_.leaky_slope * cfg_.leaky_slope));
    for (auto& lin : lin_) {
        const double bound = gain * std::sqrt(3.0 / lin.w.rows);
        for (double& x : lin.w.v) x = rng.uniform(-bound, bound);
        for (double& x : lin.b.v) x = 0.0;
    }
    for (auto& bn : bn_) {
        for (double& x : bn.gamma.v) x = 1.0;
        for (double& x : bn.beta.v) x = 0.0;
        for (double& x : bn.run_mean.v) x = 0.0;
        for (double& x : bn.run_var.v) x = 1.0;
    }
}

MlpBinding Mlp::bind(Tape& tape, bool trainable) {
    MlpBinding binding;
    for (Tensor* t : parameters())
        binding.vars.push_back(trainable ? tape.leaf(*t) : tape.constant(*t));
    return binding;
}

Var Mlp::forward_bound(Tape& tape, const MlpBinding& binding, Var x, bool train) {
    const int layers = static_cast<int>(lin_.size());
    Var h = x;
    for (int l = 0; l < layers; ++l) {
        const Var w = binding.vars[static_cast<size_t>(2 * l)];
        const Var b = binding.vars[static_cast<size_t>(2 * l) + 1];
        h = tape.add_row_vec(tape.matmul(h, w), b);
        if (l + 1 < layers) {
            h = tape.leaky_relu(h, cfg_.leaky_slope);
            if (cfg_.batch_norm) {
                BnLayer& bn = bn_[static_cast<size_t>(l)];
                const Var gamma = binding.vars[static_cast<size_t>(2 * layers + 2 * l)];
                const Var beta = binding.vars[static_cast<size_t>(2 * layers + 2 * l) + 1];
                h = tape.batch_norm(h, gamma, beta, &bn.run_mean, &bn.run_var, train,
                                    cfg_.bn_momentum, cfg_.bn_eps);
            }
        }
    }
    switch (cfg_.output) {
        case OutputActivation::Tanh: return tape.tanh(h);
        case OutputActivation::Sigmoid: return tape.sigmoid(h);
        case OutputActivation::None: return h;
    }
    return h;
}

Var Mlp::forward(Tape& tape, Var x, bool train, MlpBinding* binding, bool trainable) {
    MlpBinding local = bind(tape, trainable);
    Var out = forward_bound(tape, local, x, train);
    if (binding) *binding = std::move(local);
    return out;
}

Tensor Mlp::forward_plain(const Tensor& x, bool parallel) const {
    Tensor h = x;
    const int layers = static_cast<int>(lin_.size());
    for (int l = 0; l < layers; ++l) {
        const Linear& lin = lin_[static_cast<size_t>(l)];
        Tensor out(h.rows, lin.w.cols);
        kernels::matmul_nn(h.v.data(), lin.w.v.data(), out.v.data(), h.rows, h.cols, lin.w.cols,
                           false, parallel);
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) += lin.b.v[static_cast<size_t>(c)];
        if (l + 1 < layers) {
            for (double& v : out.v) v = v >= 0.0 ? v : cfg_.leaky_slope * v;
            if (cfg_.batch_norm) {
                const BnLayer& bn = bn_[static_cast<size_t>(l)];
                for (int c = 0; c < out.cols; ++c) {
                    const double inv =
                        1.0 / std::sqrt(bn.run_var.v[static_cast<size_t>(c)] + cfg_.bn_eps);
                    const double scale = bn.gamma.v[static_cast<size_t>(c)] * inv;
                    const double shift = bn.beta.v[static_cast<size_t>(c)] -
                                         bn.run_mean.v[static_cast<size_t>(c)] * scale;
                    for (int r = 0; r < out.rows; ++r) out.at(r, c) = out.at(r, c) * scale + shift;
                }
            }
        }
        h = std::move(out);
    }
    switch (cfg_.output) {
        case OutputActivation::Tanh:
            for (double& v : h.v) v = std::tanh(v);
            break;
        case OutputActivation::Sigmoid:
            for (double& v : h.v) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case OutputActivation::None:
            break;
    }
    return h;
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (auto& lin : lin_) {
        out.push_back(&lin.w);
        out.push_back(&lin.b);
    }
    for (auto& bn : bn_) {
        out.push_back(&bn.gamma);
        out.push_back(&bn.beta);
    }
    return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& lin : lin_) {
        out.push_back(&lin.w);
        out.push_back(&lin.b);
    }
    for (const auto& bn : bn_) {
        out.push_back(&bn.gamma);
        out.push_back(&bn.beta);
    }
    return out;
}

std::vector<Tensor*> Mlp::running_stats() {
    std::vector<Tensor*> out;
    for (auto& bn : bn_) {
        out.push_back(&bn.run_mean);
        out.push_back(&bn.run_var);
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'M', 'F', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
std::uint32_t read_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

void write_tensor(std::ofstream& f, const Tensor& t) {
    write_u32(f, static_cast<std::uint32_t>(t.rows));
    write_u32(f, static_cast<std::uint32_t>(t.cols));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(sizeof(double) * t.v.size()));
}

Tensor read_tensor(std::ifstream& f) {
    const int rows = static_cast<int>(read_u32(f));
    const int cols = static_cast<int>(read_u32(f));
    Tensor t(rows, cols);
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(sizeof(double) * t.v.size()));
    return t;
}

}  // namespace

void Mlp::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Mlp::save: cannot open " + path);
    f.write(kMagic, 4);
    write_u32(f, kVersion);
    std::vector<const Tensor*> all;
    for (const auto& lin : lin_) {
        all.push_back(&lin.w);
        all.push_back(&lin.b);
    }
    for (const auto& bn : bn_) {
        all.push_back(&bn.gamma);
        all.push_back(&bn.beta);
        all.push_back(&bn.run_mean);
        all.push_back(&bn.run_var);
    }
    write_u32(f, static_cast<std::uint32_t>(all.size()));
    for (const Tensor* t : all) write_tensor(f, *t);
    if (!f) throw std::runtime_error("Mlp::save: write failed for " + path);

    json j;
    j["schema_version"] = 1;
    j["widths"] = cfg_.widths;
    j["leaky_slope"] = cfg_.leaky_slope;
    j["output"] = cfg_.output == OutputActivation::Tanh
                      ? "tanh"
                      : (cfg_.output == OutputActivation::Sigmoid ? "sigmoid" : "none");
    j["batch_norm"] = cfg_.batch_norm;
    j["bn_momentum"] = cfg_.bn_momentum;
    j["bn_eps"] = cfg_.bn_eps;
    json tensors = json::array();
    const int layers = static_cast<int>(lin_.size());
    for (int l = 0; l < layers; ++l) {
        tensors.push_back("linear" + std::to_string(l) + ".weight");
        tensors.push_back("linear" + std::to_string(l) + ".bias");
    }
    for (int l = 0; l < static_cast<int>(bn_.size()); ++l) {
        tensors.push_back("bn" + std::to_string(l) + ".gamma");
        tensors.push_back("bn" + std::to_string(l) + ".beta");
        tensors.push_back("bn" + std::to_string(l) + ".running_mean");
        tensors.push_back("bn" + std::to_string(l) + ".running_var");
    }
    j["tensors"] = std::move(tensors);
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("Mlp::save: cannot open sidecar for " + path);
    side << j.dump(2) << "\n";
}

Mlp Mlp::load(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("Mlp::load: missing sidecar " + path + ".json");
    json j;
    side >> j;
    MlpConfig cfg;
    cfg.widths = j.at("widths").get<std::vector<int>>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    const std::string out = j.at("output").get<std::string>();
    cfg.output = out == "tanh" ? OutputActivation::Tanh
                               : (out == "sigmoid" ? OutputActivation::Sigmoid : OutputActivation::None);
    cfg.batch_norm = j.at("batch_norm").get<bool>();
    cfg.bn_momentum = j.at("bn_momentum").get<double>();
    cfg.bn_eps = j.at("bn_eps").get<double>();
    Mlp mlp(cfg);

    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Mlp::load: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("Mlp::load: bad magic");
    if (read_u32(f) != kVersion) throw std::runtime_error("Mlp::load: unsupported version");
    const std::uint32_t count = read_u32(f);
    std::vector<Tensor*> all;
    for (auto& lin : mlp.lin_) {
        all.push_back(&lin.w);
        all.push_back(&lin.b);
    }
    for (auto& bn : mlp.bn_) {
        all.push_back(&bn.gamma);
        all.push_back(&bn.beta);
        all.push_back(&bn.run_mean);
        all.push_back(&bn.run_var);
    }
    if (count != all.size()) throw std::runtime_error("Mlp::load: tensor count mismatch");
    for (Tensor* t : all) {
        Tensor got = read_tensor(f);
        if (!got.same_shape(*t)) throw std::runtime_error("Mlp::load: tensor shape mismatch");
        *t = std::move(got);
    }
    if (!f) throw std::runtime_error("Mlp::load: truncated file");
    return mlp;
}

void AdamW::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("AdamW: param/grad count mismatch");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(p->rows, p->cols, 0.0);
            v_.emplace_back(p->rows, p->cols, 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (size_t i = 0; i < p.v.size(); ++i) {
            m.v[i] = b1_ * m.v[i] + (1.0 - b1_) * g.v[i];
            v.v[i] = b2_ * v.v[i] + (1.0 - b2_) * g.v[i] * g.v[i];
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            p.v[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p.v[i]);
        }
    }
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (double x : g.v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor& g : grads)
            for (double& x : g.v) x *= scale;
    }
    return norm;
}

std::vector<Tensor> collect_grads(const Tape& tape, const MlpBinding& binding) {
    std::vector<Tensor> out;
    out.reserve(binding.vars.size());
    for (const Var var : binding.vars) {
        const auto& node = tape.nodes[static_cast<size_t>(var.id)];
        if (node.grad_live)
            out.push_back(node.grad);
        else
            out.emplace_back(node.val.rows, node.val.cols, 0.0);
    }
    return out;
}

}  // namespace mf::nn
