#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace socmpc::ad {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline int64_t numel(const std::vector<int>& shape) {
    int64_t p = 1;
    for (int d : shape) p *= d;
    return p;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline std::atomic<uint64_t>& seq_counter() {
    static std::atomic<uint64_t> c{0};
    return c;
}

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables graph recording in scope; values still compute.
struct NoGradGuard {
    bool saved;
    NoGradGuard() : saved(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = saved; }
};

struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized on demand; persists across passes for params
    bool requires_grad = false;
    bool is_param = false;
    bool visited = false;  // scratch flag for the reverse pass
    uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    int64_t numel() const { return detail::numel(shape); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// Dense float64 tensor with reverse-mode autodiff. Value semantics over a
/// shared node; tensors without graph links are immutable and shareable.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        return make(std::move(shape), {}, /*fill*/ 0.0);
    }

    static Tensor full(std::vector<int> shape, double v) { return make(std::move(shape), {}, v); }

    static Tensor from(std::vector<int> shape, std::vector<double> data) {
        if (detail::numel(shape) != static_cast<int64_t>(data.size()))
            throw TensorError("Tensor::from: data length does not match shape " + detail::shape_str(shape));
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        t.n_->seq = detail::seq_counter()++;
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    /// Learnable tensor: participates in backward and keeps its grad buffer
    /// across passes so batch items can accumulate.
    static Tensor param(std::vector<int> shape, std::vector<double> data) {
        Tensor t = from(std::move(shape), std::move(data));
        t.n_->requires_grad = true;
        t.n_->is_param = true;
        t.n_->ensure_grad();
        return t;
    }

    static Tensor from_eigen(const Eigen::MatrixXd& m) {
        std::vector<double> d(static_cast<size_t>(m.rows() * m.cols()));
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) d[static_cast<size_t>(r) * m.cols() + c] = m(r, c);
        return from({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(d));
    }

    Eigen::MatrixXd to_eigen() const {
        if (rank() != 2) throw TensorError("to_eigen: tensor is not rank 2, shape " + detail::shape_str(shape()));
        Eigen::MatrixXd m(shape()[0], shape()[1]);
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) m(r, c) = n_->value[static_cast<size_t>(r) * m.cols() + c];
        return m;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const std::vector<int>& shape() const { return node().shape; }
    int rank() const { return static_cast<int>(node().shape.size()); }
    int64_t size() const { return node().numel(); }
    const std::vector<double>& values() const { return node().value; }
    std::vector<double>& values_mut() { return node().value; }
    double item() const {
        if (size() != 1) throw TensorError("item: tensor is not scalar");
        return node().value[0];
    }
    double value_at(int64_t i) const { return node().value[static_cast<size_t>(i)]; }
    bool requires_grad() const { return node().requires_grad; }
    bool is_param() const { return node().is_param; }
    const std::vector<double>& grad() const { return node().grad; }
    std::vector<double>& grad_mut() { return node().grad; }
    void zero_grad() { node().grad.assign(node().value.size(), 0.0); }
    uint64_t seq() const { return node().seq; }

    Node& node() const {
        if (!n_) throw TensorError("operation on undefined tensor");
        return *n_;
    }
    const std::shared_ptr<Node>& handle() const { return n_; }

    /// Reverse pass from a scalar. Populates grads of every reachable
    /// requires-grad tensor, then frees the recorded graph.
    void backward() const;

private:
    static Tensor make(std::vector<int> shape, std::vector<double> data, double fill) {
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->value.assign(static_cast<size_t>(detail::numel(shape)), fill);
        if (!data.empty()) t.n_->value = std::move(data);
        t.n_->shape = std::move(shape);
        t.n_->seq = detail::seq_counter()++;
        return t;
    }

    std::shared_ptr<Node> n_;
};

namespace detail {

inline Tensor result_like(std::vector<int> shape, std::vector<double> value,
                          std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> backprop) {
    Tensor out = Tensor::from(std::move(shape), std::move(value));
    bool need = false;
    if (grad_mode())
        for (const auto& p : parents)
            if (p->requires_grad) need = true;
    if (need) {
        Node& n = out.node();
        n.requires_grad = true;
        n.parents = std::move(parents);
        n.backprop = std::move(backprop);
    }
    return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

/// Splits a shape at `axis` into (outer, extent, inner) strides.
inline void axis_split(const std::vector<int>& shape, int axis, int64_t& outer, int64_t& extent, int64_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw TensorError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    outer = 1;
    inner = 1;
    extent = shape[axis];
    for (int i = 0; i < axis; ++i) outer *= shape[i];
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[i];
}

}  // namespace detail

inline void Tensor::backward() const {
    if (size() != 1) throw TensorError("backward: loss must be scalar, shape " + detail::shape_str(shape()));
    // Collect the reachable recorded subgraph; `hold` keeps everything alive
    // until the graph is released at the end.
    std::vector<Node*> order;
    std::vector<std::shared_ptr<Node>> hold;
    std::vector<std::shared_ptr<Node>> stack{n_};
    while (!stack.empty()) {
        std::shared_ptr<Node> cur = stack.back();
        stack.pop_back();
        if (!cur || !cur->requires_grad || cur->visited) continue;
        cur->visited = true;
        order.push_back(cur.get());
        hold.push_back(cur);
        for (const auto& p : cur->parents) stack.push_back(p);
    }
    // Creation order is a topological order (every op is created after its
    // inputs), so descending seq is a valid reverse sweep and deterministic.
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });
    for (Node* nd : order) {
        nd->ensure_grad();
        if (!nd->is_param) std::fill(nd->grad.begin(), nd->grad.end(), 0.0);
        nd->visited = false;
    }
    node().ensure_grad();
    node().grad[0] = 1.0;
    for (Node* nd : order)
        if (nd->backprop) nd->backprop(*nd);
    // Free the graph; parameter leaves keep their grads.
    for (Node* nd : order) {
        nd->parents.clear();
        nd->backprop = nullptr;
    }
}

}  // namespace socmpc::ad
