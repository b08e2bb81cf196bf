#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mf::ad {

// Dense row-major rank-2 tensor of doubles. Scalars are 1x1; vectors are
// explicit rows (1xn) or columns (nx1).
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}
    Tensor(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != static_cast<size_t>(r) * c) throw std::invalid_argument("Tensor: bad data size");
    }

    static Tensor scalar(double x) { return Tensor(1, 1, std::vector<double>{x}); }
    static Tensor row(std::vector<double> data) {
        const int n = static_cast<int>(data.size());
        return Tensor(1, n, std::move(data));
    }
    static Tensor col(std::vector<double> data) {
        const int n = static_cast<int>(data.size());
        return Tensor(n, 1, std::move(data));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(rows) * cols; }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double item() const {
        if (numel() != 1) throw std::logic_error("Tensor::item: not a scalar");
        return v[0];
    }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddScalar,
    MulScalar,
    MatMul,
    Transpose,
    Reshape,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Log,
    Exp,
    SumAll,
    MeanAll,
    StopGrad,
    ConcatCols,
    SliceCols,
    TileRows,
    ScaleRows,
    RowNormalize,
    CdfIntervals,
    Clamp,
    AddRowVec,
    BatchNorm,
};

// Handle into a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eager define-by-run tape: values are computed at node creation, adjoints
// on backward() in reverse topological (= creation) order. Gradients
// accumulate additively across fan-out. Constant subgraphs are skipped.
class Tape {
  public:
    struct Node {
        Op op = Op::Leaf;
        int a = -1, b = -1, c = -1;
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        bool grad_live = false;
        double x0 = 0.0, x1 = 0.0;  // op payload (scalar, slope, bounds, sigma, eps)
        int i0 = 0, i1 = 0;         // op payload (slice offsets, train flag)
        Tensor aux, aux2;           // cached intermediates for backward
    };

    std::vector<Node> nodes;

    Var leaf(Tensor v) { return push(Op::Leaf, std::move(v), -1, -1, -1, true); }
    Var constant(Tensor v) { return push(Op::Leaf, std::move(v), -1, -1, -1, false); }

    const Tensor& value(Var x) const { return nodes[check(x)].val; }
    const Tensor& grad(Var x) const;

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var reshape(Var a, int rows, int cols);
    Var leaky_relu(Var a, double slope = 0.01);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var log(Var a);
    Var exp(Var a);
    Var sum(Var a);
    Var mean(Var a);
    Var stop_gradient(Var a);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, int begin, int count);
    Var tile_rows(Var row, int n);
    Var scale_rows(Var mat, Var col);
    Var row_normalize(Var mat);
    // out[i][k] = Phi((b_{k+1}-s_i)/sigma) - Phi((b_k-s_i)/sigma) over the M
    // cells of [0,1]; sigma must be positive.
    Var cdf_intervals(Var centers, int M, double sigma);
    Var clamp(Var a, double lo, double hi);
    Var add_row_vec(Var mat, Var row);
    // Batch normalization over rows. Train mode uses batch statistics and
    // updates the running tensors in place at node creation; eval mode is the
    // frozen affine map.
    Var batch_norm(Var x, Var gamma, Var beta, Tensor* running_mean, Tensor* running_var,
                   bool train, double momentum = 0.1, double eps = 1e-5);

    void backward(Var scalar_loss);

  private:
    int check(Var x) const {
        if (!x.valid() || x.id >= static_cast<int>(nodes.size()))
            throw std::logic_error("Tape: invalid var");
        return x.id;
    }
    Var push(Op op, Tensor val, int a, int b, int c, bool needs_grad);
    Tensor& grad_buf(int id);
};

}  // namespace mf::ad
