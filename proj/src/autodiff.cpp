#include "piro/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace piro {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument("shape mismatch in '" + op + "': " + detail);
}

void require_same_shape(const std::string& op, const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value())) {
        shape_error(op, "operand shapes differ");
    }
}

void require_2d(const std::string& op, const Var& a) {
    if (a.value().shape.size() != 2) {
        shape_error(op, "operand must be 2-D");
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_product(shape) != data.size()) {
        throw std::invalid_argument("Tensor: shape/data size mismatch");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return node_->value; }
const Tensor& Var::grad() const { return node_->grad; }
bool Var::requires_grad() const { return node_ != nullptr && node_->requires_grad; }

Var Graph::input(Tensor value, bool requires_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = "input";
    if (requires_grad) {
        n.grad = Tensor::zeros(n.value.shape);
    }
    return Var(&n);
}

Var Graph::make(std::string op, Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.op = std::move(op);
    for (const Var& v : inputs) {
        n.inputs.push_back(v.node_);
        n.requires_grad = n.requires_grad || v.node_->requires_grad;
    }
    if (n.requires_grad) {
        n.grad = Tensor::zeros(n.value.shape);
        n.backward_fn = std::move(backward_fn);
    }
    return Var(&n);
}

bool Graph::owns(const Node* n) const {
    for (const Node& candidate : nodes_) {
        if (&candidate == n) return true;
    }
    return false;
}

void Graph::backward(Var root) {
    if (nodes_.empty() || root.node_ == nullptr || !owns(root.node_)) {
        throw std::logic_error("backward: root is not a node of this graph");
    }
    if (!root.node_->value.is_scalar()) {
        throw std::logic_error("backward: root must be scalar");
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) {
            std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
        }
    }
    if (!root.node_->requires_grad) {
        return;  // no differentiable leaves reach the root
    }
    root.node_->grad.data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->requires_grad && it->backward_fn) {
            it->backward_fn(*it);
        }
    }
}

namespace {

// Accumulates src into the grad of input slot `slot` if it requires grad.
void accumulate(Node& n, std::size_t slot, const std::vector<double>& src) {
    Node* in = n.inputs[slot];
    if (!in->requires_grad) return;
    for (std::size_t i = 0; i < src.size(); ++i) {
        in->grad.data[i] += src[i];
    }
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
    require_same_shape("add", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
    return g.make("add", std::move(out), {a, b}, [](Node& n) {
        accumulate(n, 0, n.grad.data);
        accumulate(n, 1, n.grad.data);
    });
}

Var sub(Graph& g, Var a, Var b) {
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
    return g.make("sub", std::move(out), {a, b}, [](Node& n) {
        accumulate(n, 0, n.grad.data);
        std::vector<double> neg(n.grad.data);
        for (double& v : neg) v = -v;
        accumulate(n, 1, neg);
    });
}

Var mul(Graph& g, Var a, Var b) {
    require_same_shape("mul", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
    return g.make("mul", std::move(out), {a, b}, [](Node& n) {
        std::vector<double> da(n.grad.size()), db(n.grad.size());
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            da[i] = n.grad.data[i] * n.inputs[1]->value.data[i];
            db[i] = n.grad.data[i] * n.inputs[0]->value.data[i];
        }
        accumulate(n, 0, da);
        accumulate(n, 1, db);
    });
}

Var div(Graph& g, Var a, Var b) {
    require_same_shape("div", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= b.value().data[i];
    return g.make("div", std::move(out), {a, b}, [](Node& n) {
        std::vector<double> da(n.grad.size()), db(n.grad.size());
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double bi = n.inputs[1]->value.data[i];
            da[i] = n.grad.data[i] / bi;
            db[i] = -n.grad.data[i] * n.inputs[0]->value.data[i] / (bi * bi);
        }
        accumulate(n, 0, da);
        accumulate(n, 1, db);
    });
}

Var scale(Graph& g, Var a, double s) {
    Tensor out = a.value();
    for (double& v : out.data) v *= s;
    return g.make("scale", std::move(out), {a}, [s](Node& n) {
        std::vector<double> da(n.grad.data);
        for (double& v : da) v *= s;
        accumulate(n, 0, da);
    });
}

Var add_scalar(Graph& g, Var a, double s) {
    Tensor out = a.value();
    for (double& v : out.data) v += s;
    return g.make("add_scalar", std::move(out), {a}, [](Node& n) {
        accumulate(n, 0, n.grad.data);
    });
}

Var matmul(Graph& g, Var a, Var b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.cols() != B.rows()) {
        shape_error("matmul", "inner dimensions differ");
    }
    std::size_t m = A.rows(), k = A.cols(), p = B.cols();
    Tensor out = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            double av = A.at(i, l);
            for (std::size_t j = 0; j < p; ++j) {
                out.at(i, j) += av * B.at(l, j);
            }
        }
    }
    return g.make("matmul", std::move(out), {a, b}, [m, k, p](Node& n) {
        const Tensor& A = n.inputs[0]->value;
        const Tensor& B = n.inputs[1]->value;
        // dA = dC * B^T ; dB = A^T * dC
        std::vector<double> da(m * k, 0.0), db(k * p, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
                double gij = n.grad.data[i * p + j];
                if (gij == 0.0) continue;
                for (std::size_t l = 0; l < k; ++l) {
                    da[i * k + l] += gij * B.data[l * p + j];
                    db[l * p + j] += A.data[i * k + l] * gij;
                }
            }
        }
        accumulate(n, 0, da);
        accumulate(n, 1, db);
    });
}

Var transpose(Graph& g, Var a) {
    require_2d("transpose", a);
    const Tensor& A = a.value();
    std::size_t m = A.rows(), k = A.cols();
    Tensor out = Tensor::zeros({k, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) out.at(j, i) = A.at(i, j);
    return g.make("transpose", std::move(out), {a}, [m, k](Node& n) {
        std::vector<double> da(m * k);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j)
                da[i * k + j] = n.grad.data[j * m + i];
        accumulate(n, 0, da);
    });
}

Var reshape(Graph& g, Var a, std::vector<std::size_t> shape) {
    if (shape_product(shape) != a.value().size()) {
        shape_error("reshape", "element count differs");
    }
    Tensor out(std::move(shape), a.value().data);
    return g.make("reshape", std::move(out), {a}, [](Node& n) {
        accumulate(n, 0, n.grad.data);
    });
}

namespace {

Var unary(Graph& g, std::string op, Var a, double (*f)(double),
          double (*df)(double)) {
    Tensor out = a.value();
    for (double& v : out.data) v = f(v);
    return g.make(std::move(op), std::move(out), {a}, [df](Node& n) {
        std::vector<double> da(n.grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) {
            da[i] = n.grad.data[i] * df(n.inputs[0]->value.data[i]);
        }
        accumulate(n, 0, da);
    });
}

}  // namespace

Var relu(Graph& g, Var a) {
    return unary(g, "relu", a, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var hinge(Graph& g, Var a) {
    // Same forward as relu; the z = 0 subgradient is 0 so a loss exactly at
    // its margin boundary stays inactive.
    return unary(g, "hinge", a, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log_op(Graph& g, Var a) {
    return unary(g, "log", a, [](double v) { return std::log(v); },
                 [](double v) { return 1.0 / v; });
}

Var exp_op(Graph& g, Var a) {
    return unary(g, "exp", a, [](double v) { return std::exp(v); },
                 [](double v) { return std::exp(v); });
}

Var cos_op(Graph& g, Var a) {
    return unary(g, "cos", a, [](double v) { return std::cos(v); },
                 [](double v) { return -std::sin(v); });
}

Var acos_op(Graph& g, Var a) {
    return unary(
        g, "acos", a,
        [](double v) { return std::acos(std::clamp(v, -1.0, 1.0)); },
        [](double v) {
            // The floor caps the derivative near |v| = 1, where an exact
            // embedding/weight alignment would otherwise blow up the step.
            double c = std::clamp(v, -1.0, 1.0);
            return -1.0 / std::sqrt(std::max(1.0 - c * c, 1e-6));
        });
}

Var sum(Graph& g, Var a) {
    double total = std::accumulate(a.value().data.begin(), a.value().data.end(), 0.0);
    return g.make("sum", Tensor::scalar(total), {a}, [](Node& n) {
        std::vector<double> da(n.inputs[0]->value.size(), n.grad.data[0]);
        accumulate(n, 0, da);
    });
}

Var mean_rows(Graph& g, Var a) {
    require_2d("mean_rows", a);
    const Tensor& A = a.value();
    std::size_t m = A.rows(), k = A.cols();
    Tensor out = Tensor::zeros({k});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) out.data[j] += A.at(i, j);
    for (double& v : out.data) v /= static_cast<double>(m);
    return g.make("mean_rows", std::move(out), {a}, [m, k](Node& n) {
        std::vector<double> da(m * k);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j)
                da[i * k + j] = n.grad.data[j] / static_cast<double>(m);
        accumulate(n, 0, da);
    });
}

Var softmax_rows(Graph& g, Var a) {
    require_2d("softmax_rows", a);
    const Tensor& A = a.value();
    std::size_t m = A.rows(), k = A.cols();
    Tensor out = Tensor::zeros({m, k});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = A.at(i, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, A.at(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            out.at(i, j) = std::exp(A.at(i, j) - mx);
            total += out.at(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) out.at(i, j) /= total;
    }
    Tensor cached = out;
    return g.make("softmax_rows", std::move(out), {a}, [m, k, cached](Node& n) {
        std::vector<double> da(m * k);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                dot += n.grad.data[i * k + j] * cached.data[i * k + j];
            for (std::size_t j = 0; j < k; ++j)
                da[i * k + j] = cached.data[i * k + j] * (n.grad.data[i * k + j] - dot);
        }
        accumulate(n, 0, da);
    });
}

Var add_rowvec(Graph& g, Var a, Var b) {
    require_2d("add_rowvec", a);
    if (b.value().shape.size() != 1 || b.value().size() != a.value().cols()) {
        shape_error("add_rowvec", "row vector length differs from column count");
    }
    const Tensor& A = a.value();
    std::size_t m = A.rows(), k = A.cols();
    Tensor out = A;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) out.at(i, j) += b.value().data[j];
    return g.make("add_rowvec", std::move(out), {a, b}, [m, k](Node& n) {
        accumulate(n, 0, n.grad.data);
        std::vector<double> db(k, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) db[j] += n.grad.data[i * k + j];
        accumulate(n, 1, db);
    });
}

Var row(Graph& g, Var a, std::size_t i) {
    require_2d("row", a);
    const Tensor& A = a.value();
    if (i >= A.rows()) shape_error("row", "row index out of range");
    std::size_t k = A.cols();
    Tensor out = Tensor::zeros({k});
    for (std::size_t j = 0; j < k; ++j) out.data[j] = A.at(i, j);
    return g.make("row", std::move(out), {a}, [i, k](Node& n) {
        std::vector<double> da(n.inputs[0]->value.size(), 0.0);
        for (std::size_t j = 0; j < k; ++j) da[i * k + j] = n.grad.data[j];
        accumulate(n, 0, da);
    });
}

Var element(Graph& g, Var a, std::size_t i) {
    if (i >= a.value().size()) shape_error("element", "flat index out of range");
    return g.make("element", Tensor::scalar(a.value().data[i]), {a}, [i](Node& n) {
        std::vector<double> da(n.inputs[0]->value.size(), 0.0);
        da[i] = n.grad.data[0];
        accumulate(n, 0, da);
    });
}

Var norm(Graph& g, Var a) {
    double sq = 0.0;
    for (double v : a.value().data) sq += v * v;
    double nv = std::sqrt(sq);
    return g.make("norm", Tensor::scalar(nv), {a}, [nv](Node& n) {
        std::vector<double> da(n.inputs[0]->value.size(), 0.0);
        if (nv > 0.0) {
            for (std::size_t i = 0; i < da.size(); ++i)
                da[i] = n.grad.data[0] * n.inputs[0]->value.data[i] / nv;
        }
        accumulate(n, 0, da);
    });
}

Var distance(Graph& g, Var a, Var b) { return norm(g, sub(g, a, b)); }

Var dropout(Graph& g, Var a, double rate, std::mt19937_64& rng, bool train) {
    if (!train || rate <= 0.0) {
        return g.make("dropout", a.value(), {a},
                      [](Node& n) { accumulate(n, 0, n.grad.data); });
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double keep = 1.0 - rate;
    std::vector<double> mask(a.value().size());
    for (double& m : mask) m = unif(rng) < keep ? 1.0 / keep : 0.0;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
    return g.make("dropout", std::move(out), {a}, [mask](Node& n) {
        std::vector<double> da(n.grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] = n.grad.data[i] * mask[i];
        accumulate(n, 0, da);
    });
}

}  // namespace piro
