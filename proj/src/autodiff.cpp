#include "semformer/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace semformer::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using CMapMat = Eigen::Map<const EMat>;

CMapMat as_mat(const Tensor& t, std::int64_t r, std::int64_t c) {
    return CMapMat(t.data(), r, c);
}
MapMat as_mat(Tensor& t, std::int64_t r, std::int64_t c) {
    return MapMat(t.data(), r, c);
}

Var make_node(Tensor value, std::vector<Var> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    for (const auto& p : parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) n->parents = std::move(parents);
    return n;
}

bool needs(const Var& v) { return v->requires_grad; }

}  // namespace

void Node::accumulate(const Tensor& g) {
    if (!grad_ready) {
        grad = Tensor::zeros(value.shape());
        grad_ready = true;
    }
    grad.add_scaled(g, 1.0);
}

const Tensor& Node::grad_or_zero() {
    if (!grad_ready) {
        grad = Tensor::zeros(value.shape());
        grad_ready = true;
    }
    return grad;
}

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "ad::add");
    Tensor out = a->value;
    out.add_scaled(b->value, 1.0);
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad) {
        n->backward_fn = [a, b](Node& self) {
            if (needs(a)) a->accumulate(self.grad);
            if (needs(b)) b->accumulate(self.grad);
        };
    }
    return n;
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "ad::sub");
    Tensor out = a->value;
    out.add_scaled(b->value, -1.0);
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad) {
        n->backward_fn = [a, b](Node& self) {
            if (needs(a)) a->accumulate(self.grad);
            if (needs(b)) {
                Tensor g = self.grad;
                for (double& v : g.vec()) v = -v;
                b->accumulate(g);
            }
        };
    }
    return n;
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "ad::mul");
    Tensor out = a->value;
    const std::int64_t count = out.numel();
    for (std::int64_t i = 0; i < count; ++i) out[i] *= b->value[i];
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad) {
        n->backward_fn = [a, b](Node& self) {
            const std::int64_t m = self.grad.numel();
            if (needs(a)) {
                Tensor g = self.grad;
                for (std::int64_t i = 0; i < m; ++i) g[i] *= b->value[i];
                a->accumulate(g);
            }
            if (needs(b)) {
                Tensor g = self.grad;
                for (std::int64_t i = 0; i < m; ++i) g[i] *= a->value[i];
                b->accumulate(g);
            }
        };
    }
    return n;
}

Var add_row_broadcast(const Var& a, const Var& b) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    if (b->value.numel() != c) {
        throw std::invalid_argument("ad::add_row_broadcast: bias length mismatch");
    }
    Tensor out = a->value;
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out(i, j) += b->value[j];
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad) {
        n->backward_fn = [a, b, r, c](Node& self) {
            if (needs(a)) a->accumulate(self.grad);
            if (needs(b)) {
                Tensor g = Tensor::zeros(b->value.shape());
                for (std::int64_t i = 0; i < r; ++i)
                    for (std::int64_t j = 0; j < c; ++j) g[j] += self.grad(i, j);
                b->accumulate(g);
            }
        };
    }
    return n;
}

Var mul_col_broadcast(const Var& a, const Var& m) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    if (m->value.numel() != r) {
        throw std::invalid_argument("ad::mul_col_broadcast: multiplier length mismatch");
    }
    Tensor out = a->value;
    for (std::int64_t i = 0; i < r; ++i) {
        const double s = m->value[i];
        for (std::int64_t j = 0; j < c; ++j) out(i, j) *= s;
    }
    Var n = make_node(std::move(out), {a, m});
    if (n->requires_grad) {
        n->backward_fn = [a, m, r, c](Node& self) {
            if (needs(a)) {
                Tensor g = self.grad;
                for (std::int64_t i = 0; i < r; ++i) {
                    const double s = m->value[i];
                    for (std::int64_t j = 0; j < c; ++j) g(i, j) *= s;
                }
                a->accumulate(g);
            }
            if (needs(m)) {
                Tensor g = Tensor::zeros(m->value.shape());
                for (std::int64_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) acc += self.grad(i, j) * a->value(i, j);
                    g[i] = acc;
                }
                m->accumulate(g);
            }
        };
    }
    return n;
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.vec()) v *= s;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, s](Node& self) {
            Tensor g = self.grad;
            for (double& v : g.vec()) v *= s;
            a->accumulate(g);
        };
    }
    return n;
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.vec()) v += s;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) { a->accumulate(self.grad); };
    }
    return n;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = v > 0.0 ? v : 0.0;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i)
                if (a->value[i] <= 0.0) g[i] = 0.0;
            a->accumulate(g);
        };
    }
    return n;
}

Var gelu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) {
                const double x = a->value[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
                const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
                g[i] *= cdf + x * pdf;
            }
            a->accumulate(g);
        };
    }
    return n;
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backward_fn = [a, raw](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) {
                const double s = raw->value[i];
                g[i] *= s * (1.0 - s);
            }
            a->accumulate(g);
        };
    }
    return n;
}

Var log_op(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = std::log(v);
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) g[i] /= a->value[i];
            a->accumulate(g);
        };
    }
    return n;
}

Var sqrt_op(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = std::sqrt(v + 1e-30);
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backward_fn = [a, raw](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) g[i] *= 0.5 / raw->value[i];
            a->accumulate(g);
        };
    }
    return n;
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v *= v;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) g[i] *= 2.0 * a->value[i];
            a->accumulate(g);
        };
    }
    return n;
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = std::min(hi, std::max(lo, v));
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, lo, hi](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) {
                const double x = a->value[i];
                if (x <= lo || x >= hi) g[i] = 0.0;
            }
            a->accumulate(g);
        };
    }
    return n;
}

Var reciprocal(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.vec()) v = 1.0 / v;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backward_fn = [a, raw](Node& self) {
            Tensor g = self.grad;
            const std::int64_t m = g.numel();
            for (std::int64_t i = 0; i < m; ++i) {
                const double inv = raw->value[i];
                g[i] *= -inv * inv;
            }
            a->accumulate(g);
        };
    }
    return n;
}

Var matmul(const Var& a, const Var& b) {
    const std::int64_t r = a->value.rows();
    const std::int64_t k = a->value.cols();
    if (b->value.rows() != k) {
        throw std::invalid_argument("ad::matmul: inner dimension mismatch " + a->value.shape_str() +
                                    " x " + b->value.shape_str());
    }
    const std::int64_t c = b->value.cols();
    Tensor out({r, c});
    as_mat(out, r, c).noalias() = as_mat(a->value, r, k) * as_mat(b->value, k, c);
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad) {
        n->backward_fn = [a, b, r, k, c](Node& self) {
            if (needs(a)) {
                Tensor g({r, k});
                as_mat(g, r, k).noalias() =
                    as_mat(self.grad, r, c) * as_mat(b->value, k, c).transpose();
                a->accumulate(g);
            }
            if (needs(b)) {
                Tensor g({k, c});
                as_mat(g, k, c).noalias() =
                    as_mat(a->value, r, k).transpose() * as_mat(self.grad, r, c);
                b->accumulate(g);
            }
        };
    }
    return n;
}

Var transpose(const Var& a) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    Tensor out({c, r});
    as_mat(out, c, r).noalias() = as_mat(a->value, r, c).transpose();
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, r, c](Node& self) {
            Tensor g({r, c});
            as_mat(g, r, c).noalias() = as_mat(self.grad, c, r).transpose();
            a->accumulate(g);
        };
    }
    return n;
}

Var reshape(const Var& a, std::vector<std::int64_t> shape) {
    Tensor out = a->value.reshaped(shape);
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) {
            a->accumulate(self.grad.reshaped(a->value.shape()));
        };
    }
    return n;
}

Var slice_rows(const Var& a, std::int64_t r0, std::int64_t r1) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    if (r0 < 0 || r1 > r || r0 > r1) throw std::invalid_argument("ad::slice_rows: bad range");
    Tensor out({r1 - r0, c});
    std::copy(a->value.data() + r0 * c, a->value.data() + r1 * c, out.data());
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, r0, r1, c](Node& self) {
            Tensor g = Tensor::zeros(a->value.shape());
            std::copy(self.grad.data(), self.grad.data() + (r1 - r0) * c, g.data() + r0 * c);
            a->accumulate(g);
        };
    }
    return n;
}

Var slice_cols(const Var& a, std::int64_t c0, std::int64_t c1) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    if (c0 < 0 || c1 > c || c0 > c1) throw std::invalid_argument("ad::slice_cols: bad range");
    const std::int64_t w = c1 - c0;
    Tensor out({r, w});
    for (std::int64_t i = 0; i < r; ++i)
        std::copy(a->value.data() + i * c + c0, a->value.data() + i * c + c1, out.data() + i * w);
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, c0, c, r, w](Node& self) {
            Tensor g = Tensor::zeros(a->value.shape());
            for (std::int64_t i = 0; i < r; ++i)
                std::copy(self.grad.data() + i * w, self.grad.data() + (i + 1) * w,
                          g.data() + i * c + c0);
            a->accumulate(g);
        };
    }
    return n;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("ad::concat_rows: empty");
    const std::int64_t c = parts[0]->value.cols();
    std::int64_t r = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != c) throw std::invalid_argument("ad::concat_rows: column mismatch");
        r += p->value.rows();
    }
    Tensor out({r, c});
    std::int64_t row = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.numel(), out.data() + row * c);
        row += p->value.rows();
    }
    Var n = make_node(std::move(out), parts);
    if (n->requires_grad) {
        n->backward_fn = [parts, c](Node& self) {
            std::int64_t row = 0;
            for (const auto& p : parts) {
                const std::int64_t pr = p->value.rows();
                if (needs(p)) {
                    Tensor g({pr, c});
                    std::copy(self.grad.data() + row * c, self.grad.data() + (row + pr) * c,
                              g.data());
                    p->accumulate(g);
                }
                row += pr;
            }
        };
    }
    return n;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("ad::concat_cols: empty");
    const std::int64_t r = parts[0]->value.rows();
    std::int64_t c = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != r) throw std::invalid_argument("ad::concat_cols: row mismatch");
        c += p->value.cols();
    }
    Tensor out({r, c});
    std::int64_t col = 0;
    for (const auto& p : parts) {
        const std::int64_t pc = p->value.cols();
        for (std::int64_t i = 0; i < r; ++i)
            std::copy(p->value.data() + i * pc, p->value.data() + (i + 1) * pc,
                      out.data() + i * c + col);
        col += pc;
    }
    Var n = make_node(std::move(out), parts);
    if (n->requires_grad) {
        n->backward_fn = [parts, r, c](Node& self) {
            std::int64_t col = 0;
            for (const auto& p : parts) {
                const std::int64_t pc = p->value.cols();
                if (needs(p)) {
                    Tensor g({r, pc});
                    for (std::int64_t i = 0; i < r; ++i)
                        std::copy(self.grad.data() + i * c + col,
                                  self.grad.data() + i * c + col + pc, g.data() + i * pc);
                    p->accumulate(g);
                }
                col += pc;
            }
        };
    }
    return n;
}

Var softmax_rows(const Var& a) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    Tensor out = a->value;
    for (std::int64_t i = 0; i < r; ++i) {
        double mx = out(i, 0);
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, out(i, j));
        double denom = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double e = std::exp(out(i, j) - mx);
            out(i, j) = e;
            denom += e;
        }
        for (std::int64_t j = 0; j < c; ++j) out(i, j) /= denom;
    }
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backward_fn = [a, raw, r, c](Node& self) {
            Tensor g({r, c});
            for (std::int64_t i = 0; i < r; ++i) {
                double dotp = 0.0;
                for (std::int64_t j = 0; j < c; ++j) dotp += self.grad(i, j) * raw->value(i, j);
                for (std::int64_t j = 0; j < c; ++j)
                    g(i, j) = raw->value(i, j) * (self.grad(i, j) - dotp);
            }
            a->accumulate(g);
        };
    }
    return n;
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    if (gamma->value.numel() != c || beta->value.numel() != c) {
        throw std::invalid_argument("ad::layer_norm: affine parameter length mismatch");
    }
    Tensor out({r, c});
    Tensor xhat({r, c});
    Tensor inv_std({r});
    for (std::int64_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::int64_t j = 0; j < c; ++j) mean += a->value(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double d = a->value(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = istd;
        for (std::int64_t j = 0; j < c; ++j) {
            const double xh = (a->value(i, j) - mean) * istd;
            xhat(i, j) = xh;
            out(i, j) = xh * gamma->value[j] + beta->value[j];
        }
    }
    Var n = make_node(std::move(out), {a, gamma, beta});
    if (n->requires_grad) {
        auto xhat_p = std::make_shared<Tensor>(std::move(xhat));
        auto istd_p = std::make_shared<Tensor>(std::move(inv_std));
        n->backward_fn = [a, gamma, beta, xhat_p, istd_p, r, c](Node& self) {
            if (needs(gamma)) {
                Tensor g = Tensor::zeros(gamma->value.shape());
                for (std::int64_t i = 0; i < r; ++i)
                    for (std::int64_t j = 0; j < c; ++j) g[j] += self.grad(i, j) * (*xhat_p)(i, j);
                gamma->accumulate(g);
            }
            if (needs(beta)) {
                Tensor g = Tensor::zeros(beta->value.shape());
                for (std::int64_t i = 0; i < r; ++i)
                    for (std::int64_t j = 0; j < c; ++j) g[j] += self.grad(i, j);
                beta->accumulate(g);
            }
            if (needs(a)) {
                Tensor g({r, c});
                for (std::int64_t i = 0; i < r; ++i) {
                    double sum_dy = 0.0;
                    double sum_dy_xhat = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double dy = self.grad(i, j) * gamma->value[j];
                        sum_dy += dy;
                        sum_dy_xhat += dy * (*xhat_p)(i, j);
                    }
                    const double inv_c = 1.0 / static_cast<double>(c);
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double dy = self.grad(i, j) * gamma->value[j];
                        g(i, j) = (*istd_p)[i] *
                                  (dy - inv_c * sum_dy - (*xhat_p)(i, j) * inv_c * sum_dy_xhat);
                    }
                }
                a->accumulate(g);
            }
        };
    }
    return n;
}

Var sum_all(const Var& a) {
    Var n = make_node(Tensor::scalar(a->value.sum()), {a});
    if (n->requires_grad) {
        n->backward_fn = [a](Node& self) {
            a->accumulate(Tensor::full(a->value.shape(), self.grad[0]));
        };
    }
    return n;
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    Var n = make_node(Tensor::scalar(a->value.sum() * inv), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, inv](Node& self) {
            a->accumulate(Tensor::full(a->value.shape(), self.grad[0] * inv));
        };
    }
    return n;
}

Var sum_rows(const Var& a) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    Tensor out({c});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[j] += a->value(i, j);
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, r, c](Node& self) {
            Tensor g({r, c});
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g(i, j) = self.grad[j];
            a->accumulate(g);
        };
    }
    return n;
}

Var mean_rows(const Var& a) {
    return scale(sum_rows(a), 1.0 / static_cast<double>(a->value.rows()));
}

Var max_rows(const Var& a) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    Tensor out({c});
    std::vector<std::int64_t> arg(static_cast<std::size_t>(c), 0);
    for (std::int64_t j = 0; j < c; ++j) {
        double best = a->value(0, j);
        std::int64_t bi = 0;
        for (std::int64_t i = 1; i < r; ++i) {
            if (a->value(i, j) > best) {
                best = a->value(i, j);
                bi = i;
            }
        }
        out[j] = best;
        arg[static_cast<std::size_t>(j)] = bi;
    }
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, arg, c](Node& self) {
            Tensor g = Tensor::zeros(a->value.shape());
            for (std::int64_t j = 0; j < c; ++j) g(arg[static_cast<std::size_t>(j)], j) += self.grad[j];
            a->accumulate(g);
        };
    }
    return n;
}

Var rowwise_max_excluding(const Var& a) {
    const std::int64_t r = a->value.rows();
    const std::int64_t c = a->value.cols();
    Tensor out({r, c});
    std::vector<std::int64_t> arg(static_cast<std::size_t>(r * c), -1);
    for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
            double best = 0.0;  // empty max convention: 0
            std::int64_t bi = -1;
            for (std::int64_t k = 0; k < r; ++k) {
                if (k == i) continue;
                if (bi < 0 || a->value(k, j) > best) {
                    best = a->value(k, j);
                    bi = k;
                }
            }
            out(i, j) = bi < 0 ? 0.0 : best;
            arg[static_cast<std::size_t>(i * c + j)] = bi;
        }
    }
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, arg, r, c](Node& self) {
            Tensor g = Tensor::zeros(a->value.shape());
            for (std::int64_t i = 0; i < r; ++i) {
                for (std::int64_t j = 0; j < c; ++j) {
                    const std::int64_t src = arg[static_cast<std::size_t>(i * c + j)];
                    if (src >= 0) g(src, j) += self.grad(i, j);
                }
            }
            a->accumulate(g);
        };
    }
    return n;
}

namespace {
struct BilinearTap {
    std::int64_t i0, i1, j0, j1;
    double w00, w01, w10, w11;
};

std::vector<BilinearTap> bilinear_taps(std::int64_t h, std::int64_t w, std::int64_t out_h,
                                       std::int64_t out_w) {
    std::vector<BilinearTap> taps;
    taps.reserve(static_cast<std::size_t>(out_h * out_w));
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::int64_t oi = 0; oi < out_h; ++oi) {
        double fy = (static_cast<double>(oi) + 0.5) * sy - 0.5;
        fy = std::max(0.0, std::min(fy, static_cast<double>(h - 1)));
        const std::int64_t i0 = static_cast<std::int64_t>(std::floor(fy));
        const std::int64_t i1 = std::min(i0 + 1, h - 1);
        const double dy = fy - static_cast<double>(i0);
        for (std::int64_t oj = 0; oj < out_w; ++oj) {
            double fx = (static_cast<double>(oj) + 0.5) * sx - 0.5;
            fx = std::max(0.0, std::min(fx, static_cast<double>(w - 1)));
            const std::int64_t j0 = static_cast<std::int64_t>(std::floor(fx));
            const std::int64_t j1 = std::min(j0 + 1, w - 1);
            const double dx = fx - static_cast<double>(j0);
            taps.push_back({i0, i1, j0, j1, (1 - dy) * (1 - dx), (1 - dy) * dx, dy * (1 - dx),
                            dy * dx});
        }
    }
    return taps;
}
}  // namespace

Var bilinear_upsample(const Var& a, std::int64_t out_h, std::int64_t out_w) {
    if (a->value.rank() != 2) throw std::invalid_argument("ad::bilinear_upsample: rank != 2");
    const std::int64_t h = a->value.dim(0);
    const std::int64_t w = a->value.dim(1);
    auto taps = std::make_shared<std::vector<BilinearTap>>(bilinear_taps(h, w, out_h, out_w));
    Tensor out({out_h, out_w});
    {
        std::size_t t = 0;
        for (std::int64_t oi = 0; oi < out_h; ++oi) {
            for (std::int64_t oj = 0; oj < out_w; ++oj, ++t) {
                const BilinearTap& tp = (*taps)[t];
                out(oi, oj) = tp.w00 * a->value(tp.i0, tp.j0) + tp.w01 * a->value(tp.i0, tp.j1) +
                              tp.w10 * a->value(tp.i1, tp.j0) + tp.w11 * a->value(tp.i1, tp.j1);
            }
        }
    }
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad) {
        n->backward_fn = [a, taps, out_h, out_w](Node& self) {
            Tensor g = Tensor::zeros(a->value.shape());
            std::size_t t = 0;
            for (std::int64_t oi = 0; oi < out_h; ++oi) {
                for (std::int64_t oj = 0; oj < out_w; ++oj, ++t) {
                    const BilinearTap& tp = (*taps)[t];
                    const double d = self.grad(oi, oj);
                    g(tp.i0, tp.j0) += tp.w00 * d;
                    g(tp.i0, tp.j1) += tp.w01 * d;
                    g(tp.i1, tp.j0) += tp.w10 * d;
                    g(tp.i1, tp.j1) += tp.w11 * d;
                }
            }
            a->accumulate(g);
        };
    }
    return n;
}

namespace {
// index map: patch-major destination <- pixel-major source, one entry per value
std::vector<std::int64_t> patch_index_map(std::int64_t h, std::int64_t w, std::int64_t patch,
                                          std::int64_t channels) {
    const std::int64_t ph = h / patch;
    const std::int64_t pw = w / patch;
    std::vector<std::int64_t> map;
    map.resize(static_cast<std::size_t>(h * w * channels));
    std::int64_t dst = 0;
    for (std::int64_t pi = 0; pi < ph; ++pi) {
        for (std::int64_t pj = 0; pj < pw; ++pj) {
            for (std::int64_t di = 0; di < patch; ++di) {
                for (std::int64_t dj = 0; dj < patch; ++dj) {
                    const std::int64_t pixel = (pi * patch + di) * w + (pj * patch + dj);
                    for (std::int64_t ch = 0; ch < channels; ++ch) {
                        map[static_cast<std::size_t>(dst++)] = pixel * channels + ch;
                    }
                }
            }
        }
    }
    return map;
}
}  // namespace

Var extract_patches(const Var& img, std::int64_t h, std::int64_t w, std::int64_t patch) {
    if (h % patch != 0 || w % patch != 0) {
        throw std::invalid_argument("ad::extract_patches: image dims not divisible by patch size");
    }
    const std::int64_t channels = img->value.cols();
    if (img->value.rows() != h * w) {
        throw std::invalid_argument("ad::extract_patches: pixel count mismatch");
    }
    const std::int64_t np = (h / patch) * (w / patch);
    const std::int64_t pd = patch * patch * channels;
    auto map = std::make_shared<std::vector<std::int64_t>>(patch_index_map(h, w, patch, channels));
    Tensor out({np, pd});
    for (std::int64_t i = 0; i < np * pd; ++i) out[i] = img->value[(*map)[static_cast<std::size_t>(i)]];
    Var n = make_node(std::move(out), {img});
    if (n->requires_grad) {
        n->backward_fn = [img, map, np, pd](Node& self) {
            Tensor g = Tensor::zeros(img->value.shape());
            for (std::int64_t i = 0; i < np * pd; ++i)
                g[(*map)[static_cast<std::size_t>(i)]] += self.grad[i];
            img->accumulate(g);
        };
    }
    return n;
}

Var tile_patches(const Var& patches, std::int64_t h, std::int64_t w, std::int64_t patch) {
    if (h % patch != 0 || w % patch != 0) {
        throw std::invalid_argument("ad::tile_patches: image dims not divisible by patch size");
    }
    const std::int64_t np = (h / patch) * (w / patch);
    if (patches->value.rows() != np) {
        throw std::invalid_argument("ad::tile_patches: patch count mismatch");
    }
    const std::int64_t pd = patches->value.cols();
    const std::int64_t channels = pd / (patch * patch);
    auto map = std::make_shared<std::vector<std::int64_t>>(patch_index_map(h, w, patch, channels));
    Tensor out({h * w, channels});
    for (std::int64_t i = 0; i < np * pd; ++i)
        out[(*map)[static_cast<std::size_t>(i)]] = patches->value[i];
    Var n = make_node(std::move(out), {patches});
    if (n->requires_grad) {
        n->backward_fn = [patches, map, np, pd](Node& self) {
            Tensor g = Tensor::zeros(patches->value.shape());
            for (std::int64_t i = 0; i < np * pd; ++i)
                g[i] = self.grad[(*map)[static_cast<std::size_t>(i)]];
            patches->accumulate(g);
        };
    }
    return n;
}

Var add_scalars(const std::vector<Var>& terms) {
    if (terms.empty()) return constant(Tensor::scalar(0.0));
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

Var div_scalar(const Var& a, const Var& b, double eps) {
    return mul(a, reciprocal(add_scalar(b, eps)));
}

Var dot(const Var& a, const Var& b) {
    if (a->value.numel() != b->value.numel()) {
        throw std::invalid_argument("ad::dot: length mismatch");
    }
    const std::int64_t m = a->value.numel();
    Var af = reshape(a, {1, m});
    Var bf = reshape(b, {1, m});
    return sum_all(mul(af, bf));
}

void backward(const Var& root) {
    if (root->value.numel() != 1) {
        throw std::invalid_argument("ad::backward: root must be scalar");
    }
    if (!root->requires_grad) return;

    // Nodes are created in topological order; ids are strictly increasing.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const Node* x, const Node* y) { return x->id > y->id; });

    root->accumulate(Tensor::scalar(1.0));
    for (Node* n : order) {
        if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
    }
}

}  // namespace semformer::ad
