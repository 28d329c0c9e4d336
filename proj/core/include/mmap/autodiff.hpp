#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmap {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Named trainable array. Gradients accumulate across backward calls until
// zero_grad; the optimizer only ever touches parameters whose trainable
// flag is set.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Mat v)
        : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(); }
};

class Graph;

// Handle into a Graph's tape.
struct Var {
    int id = -1;
};

// Eager reverse-mode tape over dense double matrices. Values are computed
// as ops are applied; backward() replays the tape in reverse creation
// order. One Graph per forward pass; cheap to construct and discard.
//
// With grad disabled the same code path runs value-only (no closures, no
// grad buffers), which is how inference and the public forward operations
// use it.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Mat v);
    // Leaf bound to a parameter; repeated calls with the same parameter
    // return the same node so gradients from all uses sum naturally.
    Var leaf(const Parameter& p);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var cmul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_rowvec(Var a, Var bias);    // bias is 1 x cols(a)
    Var cmul_rowvec(Var a, Var gain);   // gain is 1 x cols(a)
    Var transpose(Var a);
    Var slice_rows(Var a, int start, int n);
    Var slice_cols(Var a, int start, int n);
    Var concat_rows(const std::vector<Var>& vs);
    Var concat_cols(const std::vector<Var>& vs);
    Var softmax_rows(Var a);
    Var layernorm_rows(Var a, double eps = 1e-5);
    Var gelu(Var a);
    Var mean_all(Var a);   // 1x1
    Var sum_all(Var a);    // 1x1
    // Mean over all entries of the squared difference; 1x1.
    Var mse(Var a, Var b);
    // Cosine similarity of two row vectors with a zero-norm guard; 1x1.
    Var cosine_sim(Var a, Var b, double eps = 1e-8);

    const Mat& value(Var v) const { return nodes_[v.id].value; }
    const Mat& grad(Var v) const { return nodes_[v.id].grad; }

    // Seeds d(loss)=1 (loss must be 1x1) and propagates. Parameter
    // gradients are added to Parameter::grad.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        std::function<void()> back;
        Parameter* param = nullptr;
    };

    int push(Mat value, bool needs_grad);
    void ensure_grad(int id);
    void check_same_shape(Var a, Var b, const char* op) const;

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
    bool grad_enabled_;
};

}  // namespace mmap
