#include "seedlab/numerics/graph.hpp"

#include "seedlab/error.hpp"

namespace seedlab::num {

NodeId Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

void Graph::check(NodeId id) const {
    if (id >= nodes_.size()) throw ContractError("graph node id out of range");
}

NodeId Graph::constant(Tensor value) { return push(Node{Op::constant, {}, std::move(value)}); }

NodeId Graph::param(ParamId id) {
    if (!params_ || id >= params_->size()) throw ContractError("graph parameter id out of range");
    Node n{Op::param, {}, params_->value(id)};
    n.param = id;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check(a), check(b);
    return push(Node{Op::matmul, {a, b}, num::matmul(value(a), value(b))});
}

NodeId Graph::add(NodeId a, NodeId b) {
    check(a), check(b);
    return push(Node{Op::add, {a, b}, num::add(value(a), value(b))});
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check(a), check(b);
    return push(Node{Op::sub, {a, b}, num::sub(value(a), value(b))});
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check(a), check(b);
    return push(Node{Op::mul, {a, b}, num::mul(value(a), value(b))});
}

NodeId Graph::scale(NodeId a, double s) {
    check(a);
    Node n{Op::scale, {a}, num::scale(value(a), s)};
    n.scalar = s;
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    check(x);
    return push(Node{Op::relu, {x}, num::relu(value(x))});
}

NodeId Graph::gelu(NodeId x) {
    check(x);
    return push(Node{Op::gelu, {x}, num::gelu_tanh(value(x))});
}

NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias) {
    check(x), check(gain), check(bias);
    Node n{Op::layer_norm, {x, gain, bias}, Tensor{}};
    n.value = num::layer_norm(value(x), value(gain), value(bias), &n.ln);
    return push(std::move(n));
}

NodeId Graph::embedding(NodeId table, std::vector<std::size_t> indices) {
    check(table);
    Node n{Op::embedding, {table}, num::embedding(value(table), indices)};
    n.indices = std::move(indices);
    return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> parts) {
    std::vector<const Tensor*> vals;
    vals.reserve(parts.size());
    for (NodeId p : parts) {
        check(p);
        vals.push_back(&value(p));
    }
    return push(Node{Op::concat, std::vector<NodeId>(parts.begin(), parts.end()), num::concat_cols(vals)});
}

NodeId Graph::sum(NodeId x) {
    check(x);
    return push(Node{Op::sum, {x}, num::sum_all(value(x))});
}

NodeId Graph::mean(NodeId x) {
    check(x);
    return push(Node{Op::mean, {x}, num::mean_all(value(x))});
}

NodeId Graph::squared_error(NodeId a, NodeId b) {
    check(a), check(b);
    return push(Node{Op::squared_error, {a, b}, num::squared_error(value(a), value(b))});
}

namespace {

void accumulate(std::optional<Tensor>& slot, Tensor g) {
    if (!slot) {
        slot = std::move(g);
        return;
    }
    for (std::size_t i = 0; i < g.numel(); ++i) (*slot)[i] += g[i];
}

}  // namespace

Graph::Backward Graph::backward(NodeId loss, std::span<const NodeId> watch) const {
    check(loss);
    if (value(loss).numel() != 1) throw ContractError("backward requires a scalar loss node");

    std::vector<std::optional<Tensor>> grads(loss + 1);
    grads[loss] = Tensor(value(loss).shape(), 1.0);

    Backward out;
    if (params_) out.params = zero_gradients(*params_);

    for (NodeId id = loss + 1; id-- > 0;) {
        if (!grads[id]) continue;
        const Node& n = nodes_[id];
        const Tensor& g = *grads[id];
        switch (n.op) {
            case Op::constant:
                break;
            case Op::param: {
                Tensor& pg = out.params.by_param[n.param];
                for (std::size_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
                break;
            }
            case Op::matmul: {
                const Tensor& a = value(n.inputs[0]);
                const Tensor& b = value(n.inputs[1]);
                accumulate(grads[n.inputs[0]], num::matmul(g, transpose(b)).reshaped(a.shape()));
                accumulate(grads[n.inputs[1]], num::matmul(transpose(a), g).reshaped(b.shape()));
                break;
            }
            case Op::add:
                accumulate(grads[n.inputs[0]], reduce_to_shape(g, value(n.inputs[0]).shape()));
                accumulate(grads[n.inputs[1]], reduce_to_shape(g, value(n.inputs[1]).shape()));
                break;
            case Op::sub:
                accumulate(grads[n.inputs[0]], reduce_to_shape(g, value(n.inputs[0]).shape()));
                accumulate(grads[n.inputs[1]], reduce_to_shape(num::scale(g, -1.0), value(n.inputs[1]).shape()));
                break;
            case Op::mul: {
                const Tensor& a = value(n.inputs[0]);
                const Tensor& b = value(n.inputs[1]);
                accumulate(grads[n.inputs[0]], reduce_to_shape(num::mul(g, b), a.shape()));
                accumulate(grads[n.inputs[1]], reduce_to_shape(num::mul(g, a), b.shape()));
                break;
            }
            case Op::scale:
                accumulate(grads[n.inputs[0]], num::scale(g, n.scalar));
                break;
            case Op::relu: {
                const Tensor& x = value(n.inputs[0]);
                Tensor dx(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
                accumulate(grads[n.inputs[0]], std::move(dx));
                break;
            }
            case Op::gelu:
                accumulate(grads[n.inputs[0]], num::mul(g, gelu_tanh_grad(value(n.inputs[0]))));
                break;
            case Op::layer_norm: {
                const Tensor& gain = value(n.inputs[1]);
                const std::size_t m = g.rows(), c = g.cols();
                Tensor dx({m, c});
                Tensor dgain(gain.shape());
                Tensor dbias(gain.shape());
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gij = g[i * c + j];
                        const double h = n.ln.xhat[i * c + j];
                        const double dh = gij * gain[j];
                        dgain[j] += gij * h;
                        dbias[j] += gij;
                        mean_dh += dh;
                        mean_dh_h += dh * h;
                    }
                    mean_dh /= static_cast<double>(c);
                    mean_dh_h /= static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double h = n.ln.xhat[i * c + j];
                        const double dh = g[i * c + j] * gain[j];
                        dx[i * c + j] = n.ln.rstd[i] * (dh - mean_dh - h * mean_dh_h);
                    }
                }
                accumulate(grads[n.inputs[0]], dx.reshaped(value(n.inputs[0]).shape()));
                accumulate(grads[n.inputs[1]], std::move(dgain));
                accumulate(grads[n.inputs[2]], std::move(dbias));
                break;
            }
            case Op::embedding: {
                const Tensor& table = value(n.inputs[0]);
                const std::size_t d = table.cols();
                Tensor dt(table.shape());
                for (std::size_t i = 0; i < n.indices.size(); ++i)
                    for (std::size_t j = 0; j < d; ++j) dt[n.indices[i] * d + j] += g[i * d + j];
                accumulate(grads[n.inputs[0]], std::move(dt));
                break;
            }
            case Op::concat: {
                const std::size_t m = g.rows(), total = g.cols();
                std::size_t off = 0;
                for (NodeId in : n.inputs) {
                    const Tensor& part = value(in);
                    const std::size_t c = part.cols();
                    Tensor dp(part.shape());
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < c; ++j) dp[i * c + j] = g[i * total + off + j];
                    accumulate(grads[in], std::move(dp));
                    off += c;
                }
                break;
            }
            case Op::sum:
                accumulate(grads[n.inputs[0]], Tensor(value(n.inputs[0]).shape(), g.item()));
                break;
            case Op::mean: {
                const Tensor& x = value(n.inputs[0]);
                accumulate(grads[n.inputs[0]], Tensor(x.shape(), g.item() / static_cast<double>(x.numel())));
                break;
            }
            case Op::squared_error: {
                const Tensor& a = value(n.inputs[0]);
                const Tensor& b = value(n.inputs[1]);
                const double k = 2.0 * g.item() / static_cast<double>(a.numel());
                Tensor da(a.shape());
                Tensor db(b.shape());
                for (std::size_t i = 0; i < a.numel(); ++i) {
                    const double d = k * (a[i] - b[i]);
                    da[i] = d;
                    db[i] = -d;
                }
                accumulate(grads[n.inputs[0]], std::move(da));
                accumulate(grads[n.inputs[1]], std::move(db));
                break;
            }
        }
    }

    out.watched.reserve(watch.size());
    for (NodeId w : watch) {
        check(w);
        if (w <= loss && grads[w]) {
            out.watched.push_back(*grads[w]);
        } else {
            out.watched.emplace_back(value(w).shape());
        }
    }
    return out;
}

}  // namespace seedlab::num
