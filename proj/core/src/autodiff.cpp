#include "mmap/autodiff.hpp"

#include <cmath>

#include "mmap/errors.hpp"

namespace mmap {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

int Graph::push(Mat value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
}

void Graph::check_same_shape(Var a, Var b, const char* op) const {
    const Mat& x = nodes_[a.id].value;
    const Mat& y = nodes_[b.id].value;
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + " vs " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()));
    }
}

Var Graph::constant(Mat v) { return {push(std::move(v), false)}; }

Var Graph::leaf(const Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {it->second};
    bool track = grad_enabled_ && p.trainable;
    int id = push(p.value, track);
    if (track) nodes_[id].param = const_cast<Parameter*>(&p);
    param_nodes_.emplace(&p, id);
    return {id};
}

Var Graph::matmul(Var a, Var b) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    int id = push(A * B, ng);
    if (ng) {
        nodes_[id].back = [this, id, a, b] {
            const Mat& G = nodes_[id].grad;
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad.noalias() += G * nodes_[b.id].value.transpose();
            }
            if (nodes_[b.id].needs_grad) {
                ensure_grad(b.id);
                nodes_[b.id].grad.noalias() += nodes_[a.id].value.transpose() * G;
            }
        };
    }
    return {id};
}

Var Graph::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    int id = push(nodes_[a.id].value + nodes_[b.id].value, ng);
    if (ng) {
        nodes_[id].back = [this, id, a, b] {
            const Mat& G = nodes_[id].grad;
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad += G;
            }
            if (nodes_[b.id].needs_grad) {
                ensure_grad(b.id);
                nodes_[b.id].grad += G;
            }
        };
    }
    return {id};
}

Var Graph::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    int id = push(nodes_[a.id].value - nodes_[b.id].value, ng);
    if (ng) {
        nodes_[id].back = [this, id, a, b] {
            const Mat& G = nodes_[id].grad;
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad += G;
            }
            if (nodes_[b.id].needs_grad) {
                ensure_grad(b.id);
                nodes_[b.id].grad -= G;
            }
        };
    }
    return {id};
}

Var Graph::cmul(Var a, Var b) {
    check_same_shape(a, b, "cmul");
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    int id = push(nodes_[a.id].value.cwiseProduct(nodes_[b.id].value), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, b] {
            const Mat& G = nodes_[id].grad;
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad += G.cwiseProduct(nodes_[b.id].value);
            }
            if (nodes_[b.id].needs_grad) {
                ensure_grad(b.id);
                nodes_[b.id].grad += G.cwiseProduct(nodes_[a.id].value);
            }
        };
    }
    return {id};
}

Var Graph::scale(Var a, double s) {
    bool ng = nodes_[a.id].needs_grad;
    int id = push(nodes_[a.id].value * s, ng);
    if (ng) {
        nodes_[id].back = [this, id, a, s] {
            ensure_grad(a.id);
            nodes_[a.id].grad += nodes_[id].grad * s;
        };
    }
    return {id};
}

Var Graph::add_rowvec(Var a, Var bias) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[bias.id].value;
    if (B.rows() != 1 || B.cols() != A.cols()) throw ShapeError("add_rowvec: bias must be 1 x cols");
    bool ng = nodes_[a.id].needs_grad || nodes_[bias.id].needs_grad;
    Mat v = A;
    v.rowwise() += B.row(0);
    int id = push(std::move(v), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, bias] {
            const Mat& G = nodes_[id].grad;
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad += G;
            }
            if (nodes_[bias.id].needs_grad) {
                ensure_grad(bias.id);
                nodes_[bias.id].grad += G.colwise().sum();
            }
        };
    }
    return {id};
}

Var Graph::cmul_rowvec(Var a, Var gain) {
    const Mat& A = nodes_[a.id].value;
    const Mat& Gm = nodes_[gain.id].value;
    if (Gm.rows() != 1 || Gm.cols() != A.cols()) throw ShapeError("cmul_rowvec: gain must be 1 x cols");
    bool ng = nodes_[a.id].needs_grad || nodes_[gain.id].needs_grad;
    Mat v = A.array().rowwise() * Gm.row(0).array();
    int id = push(std::move(v), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, gain] {
            const Mat& G = nodes_[id].grad;
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad.array() += G.array().rowwise() * nodes_[gain.id].value.row(0).array();
            }
            if (nodes_[gain.id].needs_grad) {
                ensure_grad(gain.id);
                nodes_[gain.id].grad += (G.cwiseProduct(nodes_[a.id].value)).colwise().sum();
            }
        };
    }
    return {id};
}

Var Graph::transpose(Var a) {
    bool ng = nodes_[a.id].needs_grad;
    int id = push(nodes_[a.id].value.transpose(), ng);
    if (ng) {
        nodes_[id].back = [this, id, a] {
            ensure_grad(a.id);
            nodes_[a.id].grad += nodes_[id].grad.transpose();
        };
    }
    return {id};
}

Var Graph::slice_rows(Var a, int start, int n) {
    const Mat& A = nodes_[a.id].value;
    if (start < 0 || n <= 0 || start + n > A.rows()) throw ShapeError("slice_rows: out of range");
    bool ng = nodes_[a.id].needs_grad;
    int id = push(A.middleRows(start, n), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, start, n] {
            ensure_grad(a.id);
            nodes_[a.id].grad.middleRows(start, n) += nodes_[id].grad;
        };
    }
    return {id};
}

Var Graph::slice_cols(Var a, int start, int n) {
    const Mat& A = nodes_[a.id].value;
    if (start < 0 || n <= 0 || start + n > A.cols()) throw ShapeError("slice_cols: out of range");
    bool ng = nodes_[a.id].needs_grad;
    int id = push(A.middleCols(start, n), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, start, n] {
            ensure_grad(a.id);
            nodes_[a.id].grad.middleCols(start, n) += nodes_[id].grad;
        };
    }
    return {id};
}

Var Graph::concat_rows(const std::vector<Var>& vs) {
    if (vs.empty()) throw ShapeError("concat_rows: empty input");
    Eigen::Index cols = nodes_[vs[0].id].value.cols();
    Eigen::Index rows = 0;
    bool ng = false;
    for (Var v : vs) {
        const Mat& m = nodes_[v.id].value;
        if (m.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += m.rows();
        ng = ng || nodes_[v.id].needs_grad;
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (Var v : vs) {
        const Mat& m = nodes_[v.id].value;
        out.middleRows(r, m.rows()) = m;
        r += m.rows();
    }
    int id = push(std::move(out), ng);
    if (ng) {
        std::vector<Var> parts(vs);
        nodes_[id].back = [this, id, parts] {
            const Mat& G = nodes_[id].grad;
            Eigen::Index r = 0;
            for (Var v : parts) {
                Eigen::Index n = nodes_[v.id].value.rows();
                if (nodes_[v.id].needs_grad) {
                    ensure_grad(v.id);
                    nodes_[v.id].grad += G.middleRows(r, n);
                }
                r += n;
            }
        };
    }
    return {id};
}

Var Graph::concat_cols(const std::vector<Var>& vs) {
    if (vs.empty()) throw ShapeError("concat_cols: empty input");
    Eigen::Index rows = nodes_[vs[0].id].value.rows();
    Eigen::Index cols = 0;
    bool ng = false;
    for (Var v : vs) {
        const Mat& m = nodes_[v.id].value;
        if (m.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += m.cols();
        ng = ng || nodes_[v.id].needs_grad;
    }
    Mat out(rows, cols);
    Eigen::Index c = 0;
    for (Var v : vs) {
        const Mat& m = nodes_[v.id].value;
        out.middleCols(c, m.cols()) = m;
        c += m.cols();
    }
    int id = push(std::move(out), ng);
    if (ng) {
        std::vector<Var> parts(vs);
        nodes_[id].back = [this, id, parts] {
            const Mat& G = nodes_[id].grad;
            Eigen::Index c = 0;
            for (Var v : parts) {
                Eigen::Index n = nodes_[v.id].value.cols();
                if (nodes_[v.id].needs_grad) {
                    ensure_grad(v.id);
                    nodes_[v.id].grad += G.middleCols(c, n);
                }
                c += n;
            }
        };
    }
    return {id};
}

Var Graph::softmax_rows(Var a) {
    const Mat& A = nodes_[a.id].value;
    Mat y(A.rows(), A.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        double m = A.row(i).maxCoeff();
        Eigen::ArrayXd e = (A.row(i).array() - m).exp();
        y.row(i) = (e / e.sum()).matrix();
    }
    bool ng = nodes_[a.id].needs_grad;
    int id = push(std::move(y), ng);
    if (ng) {
        nodes_[id].back = [this, id, a] {
            const Mat& G = nodes_[id].grad;
            const Mat& Y = nodes_[id].value;
            ensure_grad(a.id);
            Mat& Ga = nodes_[a.id].grad;
            for (Eigen::Index i = 0; i < Y.rows(); ++i) {
                double dot = G.row(i).dot(Y.row(i));
                Ga.row(i).array() += (G.row(i).array() - dot) * Y.row(i).array();
            }
        };
    }
    return {id};
}

Var Graph::layernorm_rows(Var a, double eps) {
    const Mat& A = nodes_[a.id].value;
    const Eigen::Index d = A.cols();
    Mat y(A.rows(), d);
    Vec inv_std(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        double mu = A.row(i).mean();
        Eigen::ArrayXd xc = A.row(i).array() - mu;
        double var = xc.square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = is;
        y.row(i) = (xc * is).matrix();
    }
    bool ng = nodes_[a.id].needs_grad;
    int id = push(std::move(y), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, inv_std] {
            const Mat& G = nodes_[id].grad;
            const Mat& Y = nodes_[id].value;
            ensure_grad(a.id);
            Mat& Ga = nodes_[a.id].grad;
            for (Eigen::Index i = 0; i < Y.rows(); ++i) {
                double gm = G.row(i).mean();
                double gym = G.row(i).cwiseProduct(Y.row(i)).mean();
                Ga.row(i).array() +=
                    inv_std(i) * (G.row(i).array() - gm - Y.row(i).array() * gym);
            }
        };
    }
    return {id};
}

Var Graph::gelu(Var a) {
    const Mat& A = nodes_[a.id].value;
    Mat y = A.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
    bool ng = nodes_[a.id].needs_grad;
    int id = push(std::move(y), ng);
    if (ng) {
        nodes_[id].back = [this, id, a] {
            ensure_grad(a.id);
            const Mat& A = nodes_[a.id].value;
            Mat d = A.unaryExpr([](double x) {
                double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                return cdf + x * pdf;
            });
            nodes_[a.id].grad += nodes_[id].grad.cwiseProduct(d);
        };
    }
    return {id};
}

Var Graph::sum_all(Var a) {
    bool ng = nodes_[a.id].needs_grad;
    Mat v(1, 1);
    v(0, 0) = nodes_[a.id].value.sum();
    int id = push(std::move(v), ng);
    if (ng) {
        nodes_[id].back = [this, id, a] {
            ensure_grad(a.id);
            nodes_[a.id].grad.array() += nodes_[id].grad(0, 0);
        };
    }
    return {id};
}

Var Graph::mean_all(Var a) {
    double n = static_cast<double>(nodes_[a.id].value.size());
    return scale(sum_all(a), 1.0 / n);
}

Var Graph::mse(Var a, Var b) {
    check_same_shape(a, b, "mse");
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    double n = static_cast<double>(A.size());
    Mat v(1, 1);
    v(0, 0) = (A - B).squaredNorm() / n;
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    int id = push(std::move(v), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, b, n] {
            double g = nodes_[id].grad(0, 0);
            Mat d = (2.0 / n) * (nodes_[a.id].value - nodes_[b.id].value);
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                nodes_[a.id].grad += g * d;
            }
            if (nodes_[b.id].needs_grad) {
                ensure_grad(b.id);
                nodes_[b.id].grad -= g * d;
            }
        };
    }
    return {id};
}

Var Graph::cosine_sim(Var a, Var b, double eps) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    if (A.rows() != 1 || B.rows() != 1 || A.cols() != B.cols()) {
        throw ShapeError("cosine_sim: expects two 1 x d row vectors");
    }
    double na = A.norm();
    double nb = B.norm();
    double s = A.row(0).dot(B.row(0));
    bool guarded = na * nb <= eps;
    double denom = guarded ? eps : na * nb;
    Mat v(1, 1);
    v(0, 0) = s / denom;
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    int id = push(std::move(v), ng);
    if (ng) {
        nodes_[id].back = [this, id, a, b, na, nb, denom, guarded] {
            double g = nodes_[id].grad(0, 0);
            const Mat& A = nodes_[a.id].value;
            const Mat& B = nodes_[b.id].value;
            double c = nodes_[id].value(0, 0);
            if (nodes_[a.id].needs_grad) {
                ensure_grad(a.id);
                if (guarded) {
                    nodes_[a.id].grad += g * B / denom;
                } else {
                    nodes_[a.id].grad += g * (B / denom - (c / (na * na)) * A);
                }
            }
            if (nodes_[b.id].needs_grad) {
                ensure_grad(b.id);
                if (guarded) {
                    nodes_[b.id].grad += g * A / denom;
                } else {
                    nodes_[b.id].grad += g * (A / denom - (c / (nb * nb)) * B);
                }
            }
        };
    }
    return {id};
}

void Graph::backward(Var loss) {
    if (!grad_enabled_) throw ConfigError("backward called on a grad-disabled graph");
    Node& ln = nodes_[loss.id];
    if (ln.value.size() != 1) throw ShapeError("backward: loss must be a 1x1 node");
    ensure_grad(loss.id);
    ln.grad(0, 0) += 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.back) n.back();
        if (n.param) n.param->grad += n.grad;
    }
}

}  // namespace mmap
