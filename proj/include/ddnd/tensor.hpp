#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "ddnd/common.hpp"

namespace ddnd {

// Reverse-mode autodiff over an eagerly recorded graph. A Tensor is a shared
// handle to a node holding a float64 value buffer, an optional gradient buffer
// of the same shape, and (for non-leaves) the parents plus a backward closure
// that scatters the node's gradient into them. Copying a Tensor shares the
// node; use clone() for a deep copy.

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    long long numel() const { return static_cast<long long>(data.size()); }
};

inline std::vector<double>& ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor from_vec(Shape shape, std::vector<double> data, bool requires_grad = false) {
        check(numel_of(shape) == static_cast<long long>(data.size()),
              "Tensor: data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
        auto impl = std::make_shared<TensorImpl>();
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->requires_grad = requires_grad;
        return Tensor(impl);
    }

    static Tensor zeros(const Shape& shape) {
        return from_vec(shape, std::vector<double>(numel_of(shape), 0.0));
    }

    static Tensor full(const Shape& shape, double v) {
        return from_vec(shape, std::vector<double>(numel_of(shape), v));
    }

    static Tensor scalar(double v) { return from_vec({1}, {v}); }

    static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0) {
        std::vector<double> d(numel_of(shape));
        for (auto& v : d) v = rand_normal(rng, 0.0, stddev);
        return from_vec(shape, std::move(d));
    }

    static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi) {
        std::vector<double> d(numel_of(shape));
        for (auto& v : d) v = rand_uniform(rng, lo, hi);
        return from_vec(shape, std::move(d));
    }

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    long long numel() const { return impl_->numel(); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double operator[](long long i) const { return impl_->data[static_cast<size_t>(i)]; }

    double item() const {
        check(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }

    Tensor& set_requires_grad(bool v) {
        check(impl_->leaf, "set_requires_grad: only valid on leaf tensors");
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const { return impl_->grad; }

    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    Tensor clone() const {
        auto t = from_vec(impl_->shape, impl_->data);
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

    // Value copy detached from the graph.
    Tensor detach() const { return from_vec(impl_->shape, impl_->data); }

    // Reverse pass from a scalar root. Releases the recorded graph as it goes
    // (leaves keep their accumulated gradients) unless retain_graph is set.
    void backward(bool retain_graph = false) const {
        check(numel() == 1, "backward: root must be scalar, got " + shape_str(shape()));
        check(impl_->requires_grad, "backward: root does not require grad");

        // The walk holds shared ownership of every visited node: releasing a
        // node's parent list mid-pass may drop the last other reference to an
        // intermediate that is still queued.
        std::vector<std::shared_ptr<TensorImpl>> order;
        std::unordered_set<TensorImpl*> seen;
        std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
        stack.emplace_back(impl_, 0);
        seen.insert(impl_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                const std::shared_ptr<TensorImpl>& p = node->parents[next++];
                if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }

        ensure_grad(*impl_)[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorImpl* n = it->get();
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
            if (!retain_graph && !n->leaf) {
                n->backward_fn = nullptr;
                n->parents.clear();
            }
        }
    }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    TensorImpl* raw() const { return impl_.get(); }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Graph node constructor used by every op: the node requires grad iff any
// parent does; constant subgraphs record neither parents nor a backward.
inline Tensor make_node(Shape shape, std::vector<double> data,
                        const std::vector<Tensor>& parents,
                        std::function<void(TensorImpl&)> backward_fn) {
    Tensor out = Tensor::from_vec(std::move(shape), std::move(data));
    bool req = false;
    for (const auto& p : parents) req = req || p.requires_grad();
    if (req) {
        out.raw()->requires_grad = true;
        out.raw()->leaf = false;
        for (const auto& p : parents) out.raw()->parents.push_back(p.impl());
        out.raw()->backward_fn = std::move(backward_fn);
    }
    return out;
}

inline void assert_all_finite(const Tensor& t, const std::string& who) {
    for (double v : t.data())
        if (!std::isfinite(v)) fail(who + ": non-finite value encountered");
}

}  // namespace ddnd
