#include "ad/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace tcdiv::ad {

namespace {

constexpr double kL2Eps = 1e-12;

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EigenMat>;
using ConstMap = Eigen::Map<const EigenMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
Map as_matrix(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

std::string shapes2(const Tensor& a, const Tensor& b) {
    return a.shape_string() + " and " + b.shape_string();
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::AddBias: return "add_bias";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Relu: return "relu";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::L2NormalizeRows: return "l2_normalize_rows";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::GatherRows: return "gather_rows";
        case OpKind::LogSumExpLast: return "logsumexp_last";
        case OpKind::MeanLast: return "mean_last";
        case OpKind::Reshape: return "reshape";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "unknown";
}

const Tensor& GradientMap::at(NodeId id) const {
    auto it = grads_.find(id);
    if (it == grads_.end())
        throw InvalidArgument("gradient map has no entry for node " + std::to_string(id));
    return it->second;
}

void Tape::check_id(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw InvalidArgument("tape node id " + std::to_string(id) + " out of range");
}

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor t) {
    return push(Node{OpKind::Leaf, {}, std::move(t), true, 0.0, {}, {}});
}

NodeId Tape::constant(Tensor t) {
    return push(Node{OpKind::Constant, {}, std::move(t), false, 0.0, {}, {}});
}

NodeId Tape::unary(OpKind kind, NodeId a, Tensor value, double scalar) {
    check_id(a);
    return push(Node{kind, {a}, std::move(value), node(a).requires_grad, scalar, {}, {}});
}

NodeId Tape::binary(OpKind kind, NodeId a, NodeId b, Tensor value) {
    check_id(a);
    check_id(b);
    return push(Node{kind, {a, b}, std::move(value),
                     node(a).requires_grad || node(b).requires_grad, 0.0, {}, {}});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
        throw ShapeError(std::string("matmul: incompatible shapes ") + shapes2(ta, tb));
    Tensor out({ta.rows(), tb.cols()});
    as_matrix(out).noalias() = as_matrix(ta) * as_matrix(tb);
    return binary(OpKind::MatMul, a, b, std::move(out));
}

NodeId Tape::add_bias(NodeId a, NodeId bias) {
    check_id(a);
    check_id(bias);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(bias).value;
    if (ta.rank() != 2 || tb.rank() != 1 || tb.dim(0) != ta.cols())
        throw ShapeError(std::string("add_bias: incompatible shapes ") + shapes2(ta, tb));
    Tensor out = ta;
    double* o = out.data();
    const double* bv = tb.data();
    int64_t r = ta.rows(), c = ta.cols();
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) o[i * c + j] += bv[j];
    return binary(OpKind::AddBias, a, bias, std::move(out));
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (!ta.same_shape(tb)) throw ShapeError(std::string("add: shape mismatch ") + shapes2(ta, tb));
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
    return binary(OpKind::Add, a, b, std::move(out));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (!ta.same_shape(tb)) throw ShapeError(std::string("sub: shape mismatch ") + shapes2(ta, tb));
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
    return binary(OpKind::Sub, a, b, std::move(out));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (!ta.same_shape(tb)) throw ShapeError(std::string("mul: shape mismatch ") + shapes2(ta, tb));
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
    return binary(OpKind::Mul, a, b, std::move(out));
}

NodeId Tape::scale(NodeId a, double factor) {
    check_id(a);
    Tensor out = node(a).value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= factor;
    return unary(OpKind::Scale, a, std::move(out), factor);
}

NodeId Tape::add_scalar(NodeId a, double constant) {
    check_id(a);
    Tensor out = node(a).value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += constant;
    return unary(OpKind::AddScalar, a, std::move(out), constant);
}

NodeId Tape::relu(NodeId a) {
    check_id(a);
    Tensor out = node(a).value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return unary(OpKind::Relu, a, std::move(out));
}

NodeId Tape::leaky_relu(NodeId a, double slope) {
    check_id(a);
    Tensor out = node(a).value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : slope * out[i];
    return unary(OpKind::LeakyRelu, a, std::move(out), slope);
}

NodeId Tape::l2_normalize_rows(NodeId a) {
    check_id(a);
    const Tensor& ta = node(a).value;
    if (ta.rank() != 2)
        throw ShapeError("l2_normalize_rows: expected rank-2 input, got " + ta.shape_string());
    int64_t r = ta.rows(), c = ta.cols();
    Tensor out = ta;
    std::vector<double> denoms(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        double sq = 0.0;
        for (int64_t j = 0; j < c; ++j) sq += ta.at(i, j) * ta.at(i, j);
        double d = std::max(std::sqrt(sq), kL2Eps);
        denoms[static_cast<size_t>(i)] = d;
        for (int64_t j = 0; j < c; ++j) out.at(i, j) /= d;
    }
    NodeId id = unary(OpKind::L2NormalizeRows, a, std::move(out));
    node(id).saved = std::move(denoms);
    return id;
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
    int64_t rows = -1, total = 0;
    bool grad = false;
    for (NodeId p : parts) {
        check_id(p);
        const Tensor& t = node(p).value;
        if (t.rank() != 2)
            throw ShapeError("concat_cols: expected rank-2 input, got " + t.shape_string());
        if (rows < 0) rows = t.rows();
        if (t.rows() != rows)
            throw ShapeError("concat_cols: row count mismatch, " + std::to_string(t.rows()) +
                             " vs " + std::to_string(rows));
        total += t.cols();
        grad = grad || node(p).requires_grad;
    }
    Tensor out({rows, total});
    int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = node(p).value;
        for (int64_t i = 0; i < rows; ++i)
            std::copy_n(t.data() + i * t.cols(), t.cols(), out.data() + i * total + off);
        off += t.cols();
    }
    return push(Node{OpKind::ConcatCols, {parts.begin(), parts.end()}, std::move(out), grad, 0.0,
                     {}, {}});
}

NodeId Tape::gather_rows(NodeId a, std::vector<int32_t> indices) {
    check_id(a);
    const Tensor& ta = node(a).value;
    if (ta.rank() != 2)
        throw ShapeError("gather_rows: expected rank-2 input, got " + ta.shape_string());
    if (indices.empty()) throw InvalidArgument("gather_rows: empty index vector");
    int64_t r = ta.rows(), c = ta.cols();
    for (int32_t idx : indices)
        if (idx < 0 || idx >= r)
            throw InvalidArgument("gather_rows: index " + std::to_string(idx) +
                                  " out of range for " + std::to_string(r) + " rows");
    Tensor out({static_cast<int64_t>(indices.size()), c});
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(ta.data() + static_cast<int64_t>(indices[i]) * c, c,
                    out.data() + static_cast<int64_t>(i) * c);
    NodeId id = unary(OpKind::GatherRows, a, std::move(out));
    node(id).indices = std::move(indices);
    return id;
}

namespace {
std::vector<int64_t> drop_last_dim(const Tensor& t, const char* op) {
    if (t.rank() < 1) throw ShapeError(std::string(op) + ": expected rank >= 1 input");
    return {t.shape().begin(), t.shape().end() - 1};
}
}  // namespace

NodeId Tape::logsumexp_last(NodeId a) {
    check_id(a);
    const Tensor& ta = node(a).value;
    Tensor out(drop_last_dim(ta, "logsumexp_last"));
    int64_t last = ta.dim(ta.rank() - 1);
    int64_t rows = ta.numel() / last;
    // Max-shifted so the result stays finite for any finite input.
    for (int64_t i = 0; i < rows; ++i) {
        const double* row = ta.data() + i * last;
        double m = row[0];
        for (int64_t j = 1; j < last; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < last; ++j) s += std::exp(row[j] - m);
        out[i] = m + std::log(s);
    }
    return unary(OpKind::LogSumExpLast, a, std::move(out));
}

NodeId Tape::mean_last(NodeId a) {
    check_id(a);
    const Tensor& ta = node(a).value;
    Tensor out(drop_last_dim(ta, "mean_last"));
    int64_t last = ta.dim(ta.rank() - 1);
    int64_t rows = ta.numel() / last;
    for (int64_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < last; ++j) s += ta[i * last + j];
        out[i] = s / static_cast<double>(last);
    }
    return unary(OpKind::MeanLast, a, std::move(out));
}

NodeId Tape::reshape(NodeId a, std::vector<int64_t> shape) {
    check_id(a);
    const Tensor& ta = node(a).value;
    Tensor out(std::move(shape));
    if (out.numel() != ta.numel())
        throw ShapeError("reshape: element count mismatch, " + ta.shape_string() + " to " +
                         out.shape_string());
    std::copy_n(ta.data(), ta.numel(), out.data());
    return unary(OpKind::Reshape, a, std::move(out));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int32_t> targets) {
    check_id(logits);
    const Tensor& tl = node(logits).value;
    if (tl.rank() != 2)
        throw ShapeError("softmax_cross_entropy: expected rank-2 logits, got " + tl.shape_string());
    int64_t r = tl.rows(), c = tl.cols();
    if (static_cast<int64_t>(targets.size()) != r)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(r) + " rows");
    for (int32_t t : targets)
        if (t < 0 || t >= c)
            throw InvalidArgument("softmax_cross_entropy: target " + std::to_string(t) +
                                  " out of range for " + std::to_string(c) + " classes");
    Tensor out({r});
    std::vector<double> lses(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        const double* row = tl.data() + i * c;
        double m = row[0];
        for (int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        double lse = m + std::log(s);
        lses[static_cast<size_t>(i)] = lse;
        out[i] = lse - row[targets[static_cast<size_t>(i)]];
    }
    NodeId id = unary(OpKind::SoftmaxCrossEntropy, logits, std::move(out));
    node(id).indices = std::move(targets);
    node(id).saved = std::move(lses);
    return id;
}

namespace {

Tensor& ensure_grad(std::vector<Tensor>& grads, NodeId id, const Tensor& like) {
    Tensor& g = grads[static_cast<size_t>(id)];
    if (g.numel() == 0) g = Tensor::zeros(like.shape());
    return g;
}

}  // namespace

void Tape::backward_into(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                         const std::vector<char>& active) const {
    auto want = [&](int k) {
        return active[static_cast<size_t>(n.inputs[static_cast<size_t>(k)])] != 0;
    };
    auto in_val = [&](int k) -> const Tensor& {
        return node(n.inputs[static_cast<size_t>(k)]).value;
    };
    auto in_grad = [&](int k) -> Tensor& {
        NodeId id = n.inputs[static_cast<size_t>(k)];
        return ensure_grad(grads, id, node(id).value);
    };

    switch (n.kind) {
        case OpKind::Leaf:
        case OpKind::Constant:
            break;
        case OpKind::MatMul: {
            if (want(0)) as_matrix(in_grad(0)).noalias() += as_matrix(g) * as_matrix(in_val(1)).transpose();
            if (want(1)) as_matrix(in_grad(1)).noalias() += as_matrix(in_val(0)).transpose() * as_matrix(g);
            break;
        }
        case OpKind::AddBias: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (want(1)) {
                Tensor& gb = in_grad(1);
                int64_t r = g.rows(), c = g.cols();
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) gb[j] += g.at(i, j);
            }
            break;
        }
        case OpKind::Add: {
            for (int k = 0; k < 2; ++k)
                if (want(k)) {
                    Tensor& gi = in_grad(k);
                    for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
                }
            break;
        }
        case OpKind::Sub: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (want(1)) {
                Tensor& gb = in_grad(1);
                for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
            }
            break;
        }
        case OpKind::Mul: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& b = in_val(1);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b[i];
            }
            if (want(1)) {
                Tensor& gb = in_grad(1);
                const Tensor& a = in_val(0);
                for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a[i];
            }
            break;
        }
        case OpKind::Scale: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.scalar;
            }
            break;
        }
        case OpKind::AddScalar: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            break;
        }
        case OpKind::Relu: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& x = in_val(0);
                for (int64_t i = 0; i < g.numel(); ++i)
                    if (x[i] > 0.0) ga[i] += g[i];
            }
            break;
        }
        case OpKind::LeakyRelu: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& x = in_val(0);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : n.scalar);
            }
            break;
        }
        case OpKind::L2NormalizeRows: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& y = n.value;
                int64_t r = y.rows(), c = y.cols();
                for (int64_t i = 0; i < r; ++i) {
                    double d = n.saved[static_cast<size_t>(i)];
                    if (d <= kL2Eps) {
                        // Guarded row: the forward pass was x / eps, a linear map.
                        for (int64_t j = 0; j < c; ++j) ga.at(i, j) += g.at(i, j) / d;
                        continue;
                    }
                    double dot = 0.0;
                    for (int64_t j = 0; j < c; ++j) dot += y.at(i, j) * g.at(i, j);
                    for (int64_t j = 0; j < c; ++j)
                        ga.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / d;
                }
            }
            break;
        }
        case OpKind::ConcatCols: {
            int64_t off = 0;
            int64_t total = n.value.cols();
            for (size_t k = 0; k < n.inputs.size(); ++k) {
                const Tensor& part = node(n.inputs[k]).value;
                if (active[static_cast<size_t>(n.inputs[k])]) {
                    Tensor& gi = ensure_grad(grads, n.inputs[k], part);
                    for (int64_t i = 0; i < part.rows(); ++i)
                        for (int64_t j = 0; j < part.cols(); ++j)
                            gi.at(i, j) += g[i * total + off + j];
                }
                off += part.cols();
            }
            break;
        }
        case OpKind::GatherRows: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                int64_t c = n.value.cols();
                for (size_t i = 0; i < n.indices.size(); ++i) {
                    double* dst = ga.data() + static_cast<int64_t>(n.indices[i]) * c;
                    const double* src = g.data() + static_cast<int64_t>(i) * c;
                    for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case OpKind::LogSumExpLast: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& x = in_val(0);
                int64_t last = x.dim(x.rank() - 1);
                int64_t rows = x.numel() / last;
                for (int64_t i = 0; i < rows; ++i) {
                    double lse = n.value[i];
                    double gi = g[i];
                    for (int64_t j = 0; j < last; ++j)
                        ga[i * last + j] += gi * std::exp(x[i * last + j] - lse);
                }
            }
            break;
        }
        case OpKind::MeanLast: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& x = in_val(0);
                int64_t last = x.dim(x.rank() - 1);
                int64_t rows = x.numel() / last;
                for (int64_t i = 0; i < rows; ++i) {
                    double gi = g[i] / static_cast<double>(last);
                    for (int64_t j = 0; j < last; ++j) ga[i * last + j] += gi;
                }
            }
            break;
        }
        case OpKind::Reshape: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            if (want(0)) {
                Tensor& ga = in_grad(0);
                const Tensor& x = in_val(0);
                int64_t r = x.rows(), c = x.cols();
                for (int64_t i = 0; i < r; ++i) {
                    double lse = n.saved[static_cast<size_t>(i)];
                    double gi = g[i];
                    int32_t t = n.indices[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < c; ++j) {
                        double p = std::exp(x.at(i, j) - lse);
                        ga.at(i, j) += gi * (p - (j == t ? 1.0 : 0.0));
                    }
                }
            }
            break;
        }
    }
}

GradientMap Tape::backward(NodeId seed) const {
    check_id(seed);
    const Node& s = node(seed);
    if (s.value.numel() != 1)
        throw InvalidArgument("backward: seed node must be scalar, got shape " +
                              s.value.shape_string());

    // Mark the nodes that both influence the seed and require gradients.
    std::vector<char> active(nodes_.size(), 0);
    active[static_cast<size_t>(seed)] = s.requires_grad ? 1 : 0;
    for (NodeId id = seed; id >= 0; --id) {
        if (!active[static_cast<size_t>(id)]) continue;
        for (NodeId in : node(id).inputs)
            if (node(in).requires_grad) active[static_cast<size_t>(in)] = 1;
    }

    std::vector<Tensor> grads(nodes_.size());
    GradientMap result;
    if (!s.requires_grad) return result;

    grads[static_cast<size_t>(seed)] = Tensor::full(s.value.shape(), 1.0);
    for (NodeId id = seed; id >= 0; --id) {
        if (!active[static_cast<size_t>(id)]) continue;
        const Node& n = node(id);
        const Tensor& g = grads[static_cast<size_t>(id)];
        if (g.numel() == 0) continue;
        if (n.kind == OpKind::Leaf) {
            result.insert(id, std::move(grads[static_cast<size_t>(id)]));
            continue;
        }
        backward_into(n, g, grads, active);
        grads[static_cast<size_t>(id)] = Tensor();  // release as soon as consumed
    }
    return result;
}

}  // namespace tcdiv::ad
