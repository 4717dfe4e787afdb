#include "seedlab/numerics/ops.hpp"

#include <cmath>
#include <numbers>

#include "seedlab/error.hpp"
#include "seedlab/numerics/kernels.hpp"

namespace seedlab::num {

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor c({m, n});
    kernels::gemm_f64(m, n, k, a.ptr(), k, b.ptr(), n, c.ptr(), n);
    return c;
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
    return t;
}

namespace {

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f, const char* name) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    const bool rows_ok = ar == br || ar == 1 || br == 1;
    const bool cols_ok = ac == bc || ac == 1 || bc == 1;
    if (!rows_ok || !cols_ok) {
        throw ShapeError(std::string(name) + " cannot broadcast " + shape_str(a.shape()) + " with " +
                         shape_str(b.shape()));
    }
    const std::size_t r = std::max(ar, br), c = std::max(ac, bc);
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t ia = ar == 1 ? 0 : i, ib = br == 1 ? 0 : i;
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t ja = ac == 1 ? 0 : j, jb = bc == 1 ? 0 : j;
            out[i * c + j] = f(a[ia * ac + ja], b[ib * bc + jb]);
        }
    }
    return out;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor gelu_tanh(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return out;
}

Tensor gelu_tanh_grad(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        out[i] = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner;
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache) {
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.numel() != n || bias.numel() != n) throw ShapeError("layer_norm gain/bias width");
    Tensor y({m, n});
    Tensor xhat({m, n});
    std::vector<double> rstd(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.ptr() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        const double r = 1.0 / std::sqrt(var + kLayerNormEps);
        rstd[i] = r;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mean) * r;
            xhat[i * n + j] = h;
            y[i * n + j] = h * gain[j] + bias[j];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices) {
    const std::size_t vocab = table.rows(), d = table.cols();
    if (indices.empty()) throw ShapeError("embedding with no indices");
    Tensor out({indices.size(), d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= vocab) throw ShapeError("embedding index out of range");
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = table[indices[i] * d + j];
    }
    return out;
}

Tensor concat_cols(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const std::size_t m = parts[0]->rows();
    std::size_t total = 0;
    for (const Tensor* p : parts) {
        if (p->rows() != m) throw ShapeError("concat row mismatch");
        total += p->cols();
    }
    Tensor out({m, total});
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t off = 0;
        for (const Tensor* p : parts) {
            const std::size_t c = p->cols();
            for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = (*p)[i * c + j];
            off += c;
        }
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return Tensor::scalar(s);
}

Tensor mean_all(const Tensor& x) { return Tensor::scalar(sum_all(x).item() / static_cast<double>(x.numel())); }

Tensor squared_error(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("squared_error size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return Tensor::scalar(s / static_cast<double>(a.numel()));
}

Tensor reduce_to_shape(const Tensor& grad, const Shape& shape) {
    if (grad.shape() == shape) return grad;
    Tensor target(shape);
    const std::size_t tr = target.rows(), tc = target.cols();
    const std::size_t gr = grad.rows(), gc = grad.cols();
    for (std::size_t i = 0; i < gr; ++i) {
        const std::size_t it = tr == 1 ? 0 : i;
        for (std::size_t j = 0; j < gc; ++j) {
            const std::size_t jt = tc == 1 ? 0 : j;
            target[it * tc + jt] += grad[i * gc + j];
        }
    }
    return target;
}

}  // namespace seedlab::num
