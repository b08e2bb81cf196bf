#include "meanfleet/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "meanfleet/kernels.hpp"

namespace mf::ad {

namespace {

inline double sigmoid_fn(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double normal_cdf_fn(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }
inline double normal_pdf_fn(double z) {
    return 0.3989422804014326779 * std::exp(-0.5 * z * z);
}

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Var Tape::push(Op op, Tensor val, int a, int b, int c, bool needs_grad) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    nodes.push_back(std::move(n));
    return Var{static_cast<int>(nodes.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes[static_cast<size_t>(id)];
    if (!n.grad_live) {
        n.grad = Tensor(n.val.rows, n.val.cols, 0.0);
        n.grad_live = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Var x) const {
    const Node& n = nodes[static_cast<size_t>(check(x))];
    if (!n.grad_live) throw std::logic_error("Tape::grad: no gradient recorded");
    return n.grad;
}

#define BINARY_ELEMWISE_PROLOGUE(name)                                           \
    const int ia = check(a), ib = check(b);                                       \
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;                        \
    const Tensor& vb = nodes[static_cast<size_t>(ib)].val;                        \
    require(va.same_shape(vb) || vb.numel() == 1 || va.numel() == 1, name ": shape mismatch");

Var Tape::add(Var a, Var b) {
    BINARY_ELEMWISE_PROLOGUE("add")
    Tensor out = va.numel() == 1 && vb.numel() != 1 ? Tensor(vb.rows, vb.cols) : Tensor(va.rows, va.cols);
    const bool sa = va.numel() == 1, sb = vb.numel() == 1;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[static_cast<size_t>(i)] = (sa ? va.v[0] : va.v[static_cast<size_t>(i)]) +
                                        (sb ? vb.v[0] : vb.v[static_cast<size_t>(i)]);
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::Add, std::move(out), ia, ib, -1, ng);
}

Var Tape::sub(Var a, Var b) {
    BINARY_ELEMWISE_PROLOGUE("sub")
    Tensor out = va.numel() == 1 && vb.numel() != 1 ? Tensor(vb.rows, vb.cols) : Tensor(va.rows, va.cols);
    const bool sa = va.numel() == 1, sb = vb.numel() == 1;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[static_cast<size_t>(i)] = (sa ? va.v[0] : va.v[static_cast<size_t>(i)]) -
                                        (sb ? vb.v[0] : vb.v[static_cast<size_t>(i)]);
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::Sub, std::move(out), ia, ib, -1, ng);
}

Var Tape::mul(Var a, Var b) {
    BINARY_ELEMWISE_PROLOGUE("mul")
    Tensor out = va.numel() == 1 && vb.numel() != 1 ? Tensor(vb.rows, vb.cols) : Tensor(va.rows, va.cols);
    const bool sa = va.numel() == 1, sb = vb.numel() == 1;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[static_cast<size_t>(i)] = (sa ? va.v[0] : va.v[static_cast<size_t>(i)]) *
                                        (sb ? vb.v[0] : vb.v[static_cast<size_t>(i)]);
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::Mul, std::move(out), ia, ib, -1, ng);
}

Var Tape::div(Var a, Var b) {
    BINARY_ELEMWISE_PROLOGUE("div")
    Tensor out = va.numel() == 1 && vb.numel() != 1 ? Tensor(vb.rows, vb.cols) : Tensor(va.rows, va.cols);
    const bool sa = va.numel() == 1, sb = vb.numel() == 1;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[static_cast<size_t>(i)] = (sa ? va.v[0] : va.v[static_cast<size_t>(i)]) /
                                        (sb ? vb.v[0] : vb.v[static_cast<size_t>(i)]);
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::Div, std::move(out), ia, ib, -1, ng);
}

#undef BINARY_ELEMWISE_PROLOGUE

Var Tape::neg(Var a) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = -x;
    return push(Op::Neg, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::add_scalar(Var a, double s) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x += s;
    Var v = push(Op::AddScalar, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().x0 = s;
    return v;
}

Var Tape::mul_scalar(Var a, double s) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x *= s;
    Var v = push(Op::MulScalar, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().x0 = s;
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    const Tensor& vb = nodes[static_cast<size_t>(ib)].val;
    require(va.cols == vb.rows, "matmul: inner dimension mismatch");
    Tensor out(va.rows, vb.cols);
    kernels::matmul_nn(va.v.data(), vb.v.data(), out.v.data(), va.rows, va.cols, vb.cols, false,
                       true);
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::MatMul, std::move(out), ia, ib, -1, ng);
}

Var Tape::transpose(Var a) {
    const int ia = check(a);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    Tensor out(va.cols, va.rows);
    for (int r = 0; r < va.rows; ++r)
        for (int c = 0; c < va.cols; ++c) out.at(c, r) = va.at(r, c);
    return push(Op::Transpose, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::reshape(Var a, int rows, int cols) {
    const int ia = check(a);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    require(static_cast<std::int64_t>(rows) * cols == va.numel(), "reshape: element count mismatch");
    Tensor out(rows, cols, va.v);
    return push(Op::Reshape, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::leaky_relu(Var a, double slope) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = x >= 0.0 ? x : slope * x;
    Var v = push(Op::LeakyRelu, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().x0 = slope;
    return v;
}

Var Tape::tanh(Var a) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = std::tanh(x);
    return push(Op::Tanh, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::sigmoid(Var a) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = sigmoid_fn(x);
    return push(Op::Sigmoid, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::log(Var a) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = std::log(x);
    return push(Op::Log, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::exp(Var a) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = std::exp(x);
    return push(Op::Exp, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::sum(Var a) {
    const int ia = check(a);
    double s = 0.0;
    for (double x : nodes[static_cast<size_t>(ia)].val.v) s += x;
    return push(Op::SumAll, Tensor::scalar(s), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::mean(Var a) {
    const int ia = check(a);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    double s = 0.0;
    for (double x : va.v) s += x;
    return push(Op::MeanAll, Tensor::scalar(s / static_cast<double>(va.numel())), ia, -1, -1,
                nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::stop_gradient(Var a) {
    const int ia = check(a);
    return push(Op::StopGrad, nodes[static_cast<size_t>(ia)].val, ia, -1, -1, false);
}

Var Tape::concat_cols(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    const Tensor& vb = nodes[static_cast<size_t>(ib)].val;
    require(va.rows == vb.rows, "concat_cols: row mismatch");
    Tensor out(va.rows, va.cols + vb.cols);
    for (int r = 0; r < va.rows; ++r) {
        std::memcpy(&out.at(r, 0), va.v.data() + static_cast<size_t>(r) * va.cols,
                    sizeof(double) * static_cast<size_t>(va.cols));
        std::memcpy(&out.at(r, va.cols), vb.v.data() + static_cast<size_t>(r) * vb.cols,
                    sizeof(double) * static_cast<size_t>(vb.cols));
    }
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::ConcatCols, std::move(out), ia, ib, -1, ng);
}

Var Tape::slice_cols(Var a, int begin, int count) {
    const int ia = check(a);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    require(begin >= 0 && count >= 0 && begin + count <= va.cols, "slice_cols: out of range");
    Tensor out(va.rows, count);
    for (int r = 0; r < va.rows; ++r)
        std::memcpy(&out.at(r, 0), va.v.data() + static_cast<size_t>(r) * va.cols + begin,
                    sizeof(double) * static_cast<size_t>(count));
    Var v = push(Op::SliceCols, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().i0 = begin;
    nodes.back().i1 = count;
    return v;
}

Var Tape::tile_rows(Var row, int n) {
    const int ia = check(row);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    require(va.rows == 1, "tile_rows: input must be a row vector");
    Tensor out(n, va.cols);
    for (int r = 0; r < n; ++r)
        std::memcpy(&out.at(r, 0), va.v.data(), sizeof(double) * static_cast<size_t>(va.cols));
    return push(Op::TileRows, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
}

Var Tape::scale_rows(Var mat, Var col) {
    const int ia = check(mat), ib = check(col);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    const Tensor& vb = nodes[static_cast<size_t>(ib)].val;
    require(vb.cols == 1 && vb.rows == va.rows, "scale_rows: column vector mismatch");
    Tensor out = va;
    for (int r = 0; r < va.rows; ++r) {
        const double s = vb.v[static_cast<size_t>(r)];
        for (int c = 0; c < va.cols; ++c) out.at(r, c) *= s;
    }
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::ScaleRows, std::move(out), ia, ib, -1, ng);
}

Var Tape::row_normalize(Var mat) {
    const int ia = check(mat);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    Tensor out = va;
    Tensor sums(va.rows, 1);
    for (int r = 0; r < va.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < va.cols; ++c) s += va.at(r, c);
        require(s != 0.0, "row_normalize: zero row sum");
        sums.v[static_cast<size_t>(r)] = s;
        const double inv = 1.0 / s;
        for (int c = 0; c < va.cols; ++c) out.at(r, c) *= inv;
    }
    Var v = push(Op::RowNormalize, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().aux = std::move(sums);
    return v;
}

Var Tape::cdf_intervals(Var centers, int M, double sigma) {
    const int ia = check(centers);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    require(va.cols == 1, "cdf_intervals: centers must be a column vector");
    require(sigma > 0.0, "cdf_intervals: sigma must be positive");
    const int n = va.rows;
    Tensor out(n, M);
    const double inv = 1.0 / sigma;
    for (int i = 0; i < n; ++i) {
        const double s = va.v[static_cast<size_t>(i)];
        double prev = normal_cdf_fn((0.0 - s) * inv);
        for (int k = 0; k < M; ++k) {
            const double next = normal_cdf_fn((static_cast<double>(k + 1) / M - s) * inv);
            out.at(i, k) = next - prev;
            prev = next;
        }
    }
    Var v = push(Op::CdfIntervals, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().i0 = M;
    nodes.back().x0 = sigma;
    return v;
}

Var Tape::clamp(Var a, double lo, double hi) {
    const int ia = check(a);
    Tensor out = nodes[static_cast<size_t>(ia)].val;
    for (double& x : out.v) x = x < lo ? lo : (x > hi ? hi : x);
    Var v = push(Op::Clamp, std::move(out), ia, -1, -1, nodes[static_cast<size_t>(ia)].needs_grad);
    nodes.back().x0 = lo;
    nodes.back().x1 = hi;
    return v;
}

Var Tape::add_row_vec(Var mat, Var row) {
    const int ia = check(mat), ib = check(row);
    const Tensor& va = nodes[static_cast<size_t>(ia)].val;
    const Tensor& vb = nodes[static_cast<size_t>(ib)].val;
    require(vb.rows == 1 && vb.cols == va.cols, "add_row_vec: row vector mismatch");
    Tensor out = va;
    for (int r = 0; r < va.rows; ++r)
        for (int c = 0; c < va.cols; ++c) out.at(r, c) += vb.v[static_cast<size_t>(c)];
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad || nodes[static_cast<size_t>(ib)].needs_grad;
    return push(Op::AddRowVec, std::move(out), ia, ib, -1, ng);
}

Var Tape::batch_norm(Var x, Var gamma, Var beta, Tensor* running_mean, Tensor* running_var,
                     bool train, double momentum, double eps) {
    const int ia = check(x), ib = check(gamma), ic = check(beta);
    const Tensor& vx = nodes[static_cast<size_t>(ia)].val;
    const Tensor& vg = nodes[static_cast<size_t>(ib)].val;
    const Tensor& vb = nodes[static_cast<size_t>(ic)].val;
    const int F = vx.cols;
    require(vg.rows == 1 && vg.cols == F && vb.rows == 1 && vb.cols == F,
            "batch_norm: gamma/beta shape mismatch");
    require(running_mean->cols == F && running_var->cols == F, "batch_norm: running stats mismatch");

    Tensor mean(1, F), var(1, F);
    if (train) {
        const double n = static_cast<double>(vx.rows);
        require(vx.rows >= 2, "batch_norm: train mode needs >= 2 rows");
        for (int c = 0; c < F; ++c) {
            double s = 0.0;
            for (int r = 0; r < vx.rows; ++r) s += vx.at(r, c);
            mean.v[static_cast<size_t>(c)] = s / n;
        }
        for (int c = 0; c < F; ++c) {
            double s = 0.0;
            for (int r = 0; r < vx.rows; ++r) {
                const double d = vx.at(r, c) - mean.v[static_cast<size_t>(c)];
                s += d * d;
            }
            var.v[static_cast<size_t>(c)] = s / n;
        }
        for (int c = 0; c < F; ++c) {
            running_mean->v[static_cast<size_t>(c)] =
                (1.0 - momentum) * running_mean->v[static_cast<size_t>(c)] + momentum * mean.v[static_cast<size_t>(c)];
            running_var->v[static_cast<size_t>(c)] =
                (1.0 - momentum) * running_var->v[static_cast<size_t>(c)] + momentum * var.v[static_cast<size_t>(c)];
        }
    } else {
        mean = *running_mean;
        var = *running_var;
    }

    Tensor invstd(1, F);
    for (int c = 0; c < F; ++c) invstd.v[static_cast<size_t>(c)] = 1.0 / std::sqrt(var.v[static_cast<size_t>(c)] + eps);

    Tensor xhat(vx.rows, F);
    Tensor out(vx.rows, F);
    for (int r = 0; r < vx.rows; ++r) {
        for (int c = 0; c < F; ++c) {
            const double xh = (vx.at(r, c) - mean.v[static_cast<size_t>(c)]) * invstd.v[static_cast<size_t>(c)];
            xhat.at(r, c) = xh;
            out.at(r, c) = vg.v[static_cast<size_t>(c)] * xh + vb.v[static_cast<size_t>(c)];
        }
    }
    const bool ng = nodes[static_cast<size_t>(ia)].needs_grad ||
                    nodes[static_cast<size_t>(ib)].needs_grad ||
                    nodes[static_cast<size_t>(ic)].needs_grad;
    Var v = push(Op::BatchNorm, std::move(out), ia, ib, ic, ng);
    nodes.back().i0 = train ? 1 : 0;
    nodes.back().aux = std::move(xhat);
    nodes.back().aux2 = std::move(invstd);
    return v;
}

void Tape::backward(Var scalar_loss) {
    const int root = check(scalar_loss);
    if (nodes[static_cast<size_t>(root)].val.numel() != 1)
        throw std::logic_error("backward: loss must be scalar");
    grad_buf(root).v[0] = 1.0;

    for (int id = root; id >= 0; --id) {
        Node& n = nodes[static_cast<size_t>(id)];
        if (!n.grad_live || !n.needs_grad || n.op == Op::Leaf || n.op == Op::StopGrad) continue;
        const Tensor& g = n.grad;

        auto add_into = [&](int target, auto&& fn) {
            if (target < 0 || !nodes[static_cast<size_t>(target)].needs_grad) return;
            fn(grad_buf(target), nodes[static_cast<size_t>(target)].val);
        };

        switch (n.op) {
            case Op::Add:
            case Op::Sub: {
                const double sign_b = n.op == Op::Sub ? -1.0 : 1.0;
                add_into(n.a, [&](Tensor& ga, const Tensor& va) {
                    if (va.numel() == 1) {
                        for (double x : g.v) ga.v[0] += x;
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
                    }
                });
                add_into(n.b, [&](Tensor& gb, const Tensor& vb) {
                    if (vb.numel() == 1) {
                        for (double x : g.v) gb.v[0] += sign_b * x;
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += sign_b * g.v[i];
                    }
                });
                break;
            }
            case Op::Mul: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                const Tensor& vb = nodes[static_cast<size_t>(n.b)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    if (va.numel() == 1) {
                        for (size_t i = 0; i < g.v.size(); ++i)
                            ga.v[0] += g.v[i] * (vb.numel() == 1 ? vb.v[0] : vb.v[i]);
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i)
                            ga.v[i] += g.v[i] * (vb.numel() == 1 ? vb.v[0] : vb.v[i]);
                    }
                });
                add_into(n.b, [&](Tensor& gb, const Tensor&) {
                    if (vb.numel() == 1) {
                        for (size_t i = 0; i < g.v.size(); ++i)
                            gb.v[0] += g.v[i] * (va.numel() == 1 ? va.v[0] : va.v[i]);
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i)
                            gb.v[i] += g.v[i] * (va.numel() == 1 ? va.v[0] : va.v[i]);
                    }
                });
                break;
            }
            case Op::Div: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                const Tensor& vb = nodes[static_cast<size_t>(n.b)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    if (va.numel() == 1) {
                        for (size_t i = 0; i < g.v.size(); ++i)
                            ga.v[0] += g.v[i] / (vb.numel() == 1 ? vb.v[0] : vb.v[i]);
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i)
                            ga.v[i] += g.v[i] / (vb.numel() == 1 ? vb.v[0] : vb.v[i]);
                    }
                });
                add_into(n.b, [&](Tensor& gb, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) {
                        const double bv = vb.numel() == 1 ? vb.v[0] : vb.v[i];
                        const double av = va.numel() == 1 ? va.v[0] : va.v[i];
                        const double gi = -g.v[i] * av / (bv * bv);
                        if (vb.numel() == 1)
                            gb.v[0] += gi;
                        else
                            gb.v[i] += gi;
                    }
                });
                break;
            }
            case Op::Neg:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] -= g.v[i];
                });
                break;
            case Op::AddScalar:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
                });
                break;
            case Op::MulScalar:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += n.x0 * g.v[i];
                });
                break;
            case Op::MatMul: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                const Tensor& vb = nodes[static_cast<size_t>(n.b)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    kernels::matmul_nt(g.v.data(), vb.v.data(), ga.v.data(), g.rows, g.cols,
                                       vb.rows, true, true);
                });
                add_into(n.b, [&](Tensor& gb, const Tensor&) {
                    kernels::matmul_tn(va.v.data(), g.v.data(), gb.v.data(), va.rows, va.cols,
                                       g.cols, true, true);
                });
                break;
            }
            case Op::Transpose:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) ga.at(c, r) += g.at(r, c);
                });
                break;
            case Op::Reshape:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
                });
                break;
            case Op::LeakyRelu: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i)
                        ga.v[i] += g.v[i] * (va.v[i] >= 0.0 ? 1.0 : n.x0);
                });
                break;
            }
            case Op::Tanh:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i)
                        ga.v[i] += g.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
                });
                break;
            case Op::Sigmoid:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i)
                        ga.v[i] += g.v[i] * n.val.v[i] * (1.0 - n.val.v[i]);
                });
                break;
            case Op::Log: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] / va.v[i];
                });
                break;
            }
            case Op::Exp:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * n.val.v[i];
                });
                break;
            case Op::SumAll:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (double& x : ga.v) x += g.v[0];
                });
                break;
            case Op::MeanAll:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    const double s = g.v[0] / static_cast<double>(ga.numel());
                    for (double& x : ga.v) x += s;
                });
                break;
            case Op::ConcatCols: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int r = 0; r < ga.rows; ++r)
                        for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += g.at(r, c);
                });
                add_into(n.b, [&](Tensor& gb, const Tensor&) {
                    for (int r = 0; r < gb.rows; ++r)
                        for (int c = 0; c < gb.cols; ++c) gb.at(r, c) += g.at(r, c + va.cols);
                });
                break;
            }
            case Op::SliceCols:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) ga.at(r, c + n.i0) += g.at(r, c);
                });
                break;
            case Op::TileRows:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) ga.v[static_cast<size_t>(c)] += g.at(r, c);
                });
                break;
            case Op::ScaleRows: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                const Tensor& vb = nodes[static_cast<size_t>(n.b)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r) {
                        const double s = vb.v[static_cast<size_t>(r)];
                        for (int c = 0; c < g.cols; ++c) ga.at(r, c) += g.at(r, c) * s;
                    }
                });
                add_into(n.b, [&](Tensor& gb, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r) {
                        double s = 0.0;
                        for (int c = 0; c < g.cols; ++c) s += g.at(r, c) * va.at(r, c);
                        gb.v[static_cast<size_t>(r)] += s;
                    }
                });
                break;
            }
            case Op::RowNormalize: {
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r) {
                        const double inv = 1.0 / n.aux.v[static_cast<size_t>(r)];
                        double dot = 0.0;
                        for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * n.val.at(r, c);
                        for (int c = 0; c < g.cols; ++c)
                            ga.at(r, c) += (g.at(r, c) - dot) * inv;
                    }
                });
                break;
            }
            case Op::CdfIntervals: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                const int M = n.i0;
                const double inv = 1.0 / n.x0;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (int i = 0; i < va.rows; ++i) {
                        const double s = va.v[static_cast<size_t>(i)];
                        double acc = 0.0;
                        double pdf_prev = normal_pdf_fn((0.0 - s) * inv);
                        for (int k = 0; k < M; ++k) {
                            const double pdf_next =
                                normal_pdf_fn((static_cast<double>(k + 1) / M - s) * inv);
                            acc += g.at(i, k) * (pdf_prev - pdf_next) * inv;
                            pdf_prev = pdf_next;
                        }
                        ga.v[static_cast<size_t>(i)] += acc;
                    }
                });
                break;
            }
            case Op::Clamp: {
                const Tensor& va = nodes[static_cast<size_t>(n.a)].val;
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i)
                        if (va.v[i] > n.x0 && va.v[i] < n.x1) ga.v[i] += g.v[i];
                });
                break;
            }
            case Op::AddRowVec:
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
                });
                add_into(n.b, [&](Tensor& gb, const Tensor&) {
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) gb.v[static_cast<size_t>(c)] += g.at(r, c);
                });
                break;
            case Op::BatchNorm: {
                const Tensor& vg = nodes[static_cast<size_t>(n.b)].val;
                const Tensor& xhat = n.aux;
                const Tensor& invstd = n.aux2;
                const int F = g.cols;
                const int B = g.rows;
                add_into(n.c, [&](Tensor& gbeta, const Tensor&) {
                    for (int r = 0; r < B; ++r)
                        for (int c = 0; c < F; ++c) gbeta.v[static_cast<size_t>(c)] += g.at(r, c);
                });
                add_into(n.b, [&](Tensor& ggamma, const Tensor&) {
                    for (int r = 0; r < B; ++r)
                        for (int c = 0; c < F; ++c)
                            ggamma.v[static_cast<size_t>(c)] += g.at(r, c) * xhat.at(r, c);
                });
                add_into(n.a, [&](Tensor& ga, const Tensor&) {
                    if (n.i0 == 0) {  // eval: frozen affine
                        for (int r = 0; r < B; ++r)
                            for (int c = 0; c < F; ++c)
                                ga.at(r, c) += g.at(r, c) * vg.v[static_cast<size_t>(c)] *
                                               invstd.v[static_cast<size_t>(c)];
                        return;
                    }
                    std::vector<double> sum_dxhat(static_cast<size_t>(F), 0.0);
                    std::vector<double> sum_dxhat_xhat(static_cast<size_t>(F), 0.0);
                    for (int r = 0; r < B; ++r) {
                        for (int c = 0; c < F; ++c) {
                            const double dxh = g.at(r, c) * vg.v[static_cast<size_t>(c)];
                            sum_dxhat[static_cast<size_t>(c)] += dxh;
                            sum_dxhat_xhat[static_cast<size_t>(c)] += dxh * xhat.at(r, c);
                        }
                    }
                    const double invB = 1.0 / static_cast<double>(B);
                    for (int r = 0; r < B; ++r) {
                        for (int c = 0; c < F; ++c) {
                            const double dxh = g.at(r, c) * vg.v[static_cast<size_t>(c)];
                            ga.at(r, c) += invstd.v[static_cast<size_t>(c)] *
                                           (dxh - invB * sum_dxhat[static_cast<size_t>(c)] -
                                            invB * xhat.at(r, c) * sum_dxhat_xhat[static_cast<size_t>(c)]);
                        }
                    }
                });
                break;
            }
            case Op::Leaf:
            case Op::StopGrad:
                break;
        }
    }
}

}  // namespace mf::ad
