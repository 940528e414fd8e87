#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace piro {

// Dense row-major tensor of 64-bit floats. Desk-scale sizes, so no views
// or broadcasting machinery beyond what the encoder needs.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

class Graph;
struct Node;

// Lightweight handle into a Graph-owned node.
class Var {
public:
    Var() = default;
    const Tensor& value() const;
    const Tensor& grad() const;
    bool requires_grad() const;

private:
    friend class Graph;
    explicit Var(Node* n) : node_(n) {}
    Node* node_ = nullptr;
};

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Node*> inputs;
    std::function<void(Node&)> backward_fn;
    std::string op;
};

// Tape of operation records in creation order. Creation order is a valid
// topological order, so backward is a single reverse sweep. A graph instance
// is confined to one thread during forward/backward.
class Graph {
public:
    Var input(Tensor value, bool requires_grad = false);
    Var constant(double v) { return input(Tensor::scalar(v)); }

    // Gradient of a scalar root w.r.t. every requires_grad leaf. Grads are
    // zeroed first, so repeated calls do not accumulate.
    void backward(Var root);

    std::size_t num_nodes() const { return nodes_.size(); }

    Var make(std::string op, Tensor value, std::vector<Var> inputs,
             std::function<void(Node&)> backward_fn);

private:
    bool owns(const Node* n) const;
    std::deque<Node> nodes_;
};

// Primitive operations. Each throws std::invalid_argument naming the op on a
// shape mismatch.
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);  // elementwise
Var div(Graph& g, Var a, Var b);  // elementwise
Var scale(Graph& g, Var a, double s);
Var add_scalar(Graph& g, Var a, double s);
Var matmul(Graph& g, Var a, Var b);
Var transpose(Graph& g, Var a);
Var reshape(Graph& g, Var a, std::vector<std::size_t> shape);
Var relu(Graph& g, Var a);
// max(z, 0) with subgradient 0 at exactly z = 0.
Var hinge(Graph& g, Var a);
Var log_op(Graph& g, Var a);
Var exp_op(Graph& g, Var a);
Var cos_op(Graph& g, Var a);
// Input clamped to [-1, 1]; derivative uses a clamped denominator so the
// boundary stays finite.
Var acos_op(Graph& g, Var a);
Var sum(Graph& g, Var a);                       // all elements -> scalar
Var mean_rows(Graph& g, Var a);                 // (m,n) -> (n)
Var softmax_rows(Graph& g, Var a);              // row-wise softmax of (m,n)
Var add_rowvec(Graph& g, Var a, Var b);         // (m,n) + (n) per row
Var row(Graph& g, Var a, std::size_t i);        // (m,n) -> (n)
Var element(Graph& g, Var a, std::size_t i);    // flat index -> scalar
Var norm(Graph& g, Var a);                      // Euclidean norm -> scalar
Var distance(Graph& g, Var a, Var b);           // ||a - b||_2
// Inverted dropout on elements; identity in eval mode. Draws from the given
// RNG handle, never global state.
Var dropout(Graph& g, Var a, double rate, std::mt19937_64& rng, bool train);

}  // namespace piro
