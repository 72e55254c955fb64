#include "skicl/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "skicl/errors.hpp"

namespace skicl {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using BackwardFn = std::function<void(std::span<const double>)>;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b, const std::string& detail = {}) {
    std::string msg = std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                      shape_to_string(b.shape());
    if (!detail.empty()) msg += " (" + detail + ")";
    throw std::invalid_argument(msg);
}

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined input tensor");
}

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
    if (!GradMode::enabled()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

Tensor finish(Shape shape, Buffer values, const char* name, std::initializer_list<const Tensor*> inputs,
              BackwardFn fn) {
    Tensor out = Tensor::from_buffer(std::move(shape), std::move(values));
    if (needs_tape(inputs)) {
        auto record = std::make_shared<detail::OpRecord>();
        record->name = name;
        for (const Tensor* t : inputs) {
            if (t->defined()) record->inputs.push_back(t->impl());
        }
        record->backward = std::move(fn);
        out.impl()->requires_grad = true;
        out.impl()->producer = std::move(record);
    }
    return out;
}

// Gradient sink for an input; null when the input does not track gradients.
double* grad_of(const ImplPtr& impl) {
    if (!impl || !impl->requires_grad) return nullptr;
    return impl->grad_buffer().data();
}

enum class Broadcast { same, suffix, scalar };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa == sb) return Broadcast::same;
    if (b.numel() == 1) return Broadcast::scalar;
    if (sb.size() < sa.size() && std::equal(sb.begin(), sb.end(), sa.end() - static_cast<long>(sb.size()))) {
        return Broadcast::suffix;
    }
    shape_error(op, a, b, "right operand must match, be a trailing suffix, or hold one element");
}

template <typename Forward, typename GradA, typename GradB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Forward fwd, GradA ga_fn, GradB gb_fn) {
    require_defined(name, a);
    require_defined(name, b);
    classify(name, a, b);
    const std::size_t n = a.numel();
    const std::size_t m = b.numel();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    Buffer out(n);
    // b repeats every m entries of a (m == n, a trailing suffix, or a scalar)
    for (std::size_t o = 0; o < n; o += m) {
        double* dst = out.data() + o;
        const double* x = av + o;
        for (std::size_t j = 0; j < m; ++j) dst[j] = fwd(x[j], bv[j]);
    }
    ImplPtr ai = a.impl(), bi = b.impl();
    return finish(a.shape(), std::move(out), name, {&a, &b}, [ai, bi, n, m, ga_fn, gb_fn](std::span<const double> g) {
        double* ga = grad_of(ai);
        double* gb = grad_of(bi);
        const double* av = ai->values.data();
        const double* bv = bi->values.data();
        const double* gv = g.data();
        for (std::size_t o = 0; o < n; o += m) {
            const double* x = av + o;
            const double* go = gv + o;
            if (ga) {
                double* dst = ga + o;
                for (std::size_t j = 0; j < m; ++j) dst[j] += ga_fn(go[j], x[j], bv[j]);
            }
            if (gb) {
                for (std::size_t j = 0; j < m; ++j) gb[j] += gb_fn(go[j], x[j], bv[j]);
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
        [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
        [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
    require_defined("scale", a);
    Buffer out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    ImplPtr ai = a.impl();
    return finish(a.shape(), std::move(out), "scale", {&a}, [ai, factor](std::span<const double> g) {
        double* ga = grad_of(ai);
        const double* gv = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * gv[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined("matmul", a);
    require_defined("matmul", b);
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", a, b, "operands need at least two axes");
    const std::size_t k = sa.back();
    if (sb[sb.size() - 2] != k) shape_error("matmul", a, b, "inner extents differ");
    const std::size_t p = sb.back();
    const std::size_t m = sa[sa.size() - 2];

    std::size_t batches = 1;
    bool shared_rhs = sb.size() == 2;
    if (!shared_rhs) {
        if (sb.size() != sa.size() || !std::equal(sb.begin(), sb.end() - 2, sa.begin())) {
            shape_error("matmul", a, b, "batched operands need identical leading extents");
        }
        batches = shape_numel(Shape(sa.begin(), sa.end() - 2));
    }
    const std::size_t rows = shared_rhs ? a.numel() / k : m;

    Shape out_shape = sa;
    out_shape.back() = p;
    Buffer out(shape_numel(out_shape));
    for (std::size_t bidx = 0; bidx < batches; ++bidx) {
        ConstMap am(a.values().data() + bidx * rows * k, rows, k);
        ConstMap bm(b.values().data() + (shared_rhs ? 0 : bidx * k * p), k, p);
        MutMap om(out.data() + bidx * rows * p, rows, p);
        om.noalias() = am * bm;
    }

    ImplPtr ai = a.impl(), bi = b.impl();
    return finish(std::move(out_shape), std::move(out), "matmul", {&a, &b},
                  [ai, bi, batches, rows, k, p, shared_rhs](std::span<const double> g) {
                      double* ga = grad_of(ai);
                      double* gb = grad_of(bi);
                      for (std::size_t bidx = 0; bidx < batches; ++bidx) {
                          ConstMap gm(g.data() + bidx * rows * p, rows, p);
                          const std::size_t boff = shared_rhs ? 0 : bidx * k * p;
                          if (ga) {
                              ConstMap bm(bi->values.data() + boff, k, p);
                              MutMap(ga + bidx * rows * k, rows, k).noalias() += gm * bm.transpose();
                          }
                          if (gb) {
                              ConstMap am(ai->values.data() + bidx * rows * k, rows, k);
                              MutMap(gb + boff, k, p).noalias() += am.transpose() * gm;
                          }
                      }
                  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    for (const auto& t : parts) require_defined("concat", t);
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) {
        throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for shape " +
                                    shape_to_string(first));
    }
    std::size_t total = 0;
    for (const auto& t : parts) {
        const Shape& s = t.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
        if (!ok) shape_error("concat", parts.front(), t, "extents must agree off the concat axis");
        total += s[axis];
    }
    const std::size_t outer = shape_numel(Shape(first.begin(), first.begin() + static_cast<long>(axis)));
    const std::size_t inner = shape_numel(Shape(first.begin() + static_cast<long>(axis) + 1, first.end()));
    Shape out_shape = first;
    out_shape[axis] = total;
    Buffer out(shape_numel(out_shape));

    std::vector<std::size_t> widths;
    for (const auto& t : parts) widths.push_back(t.extent(axis) * inner);
    const std::size_t row = total * inner;
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        auto v = parts[pi].values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.data() + o * widths[pi], widths[pi], out.data() + o * row + offset);
        }
        offset += widths[pi];
    }

    std::vector<ImplPtr> impls;
    bool track = false;
    for (const auto& t : parts) {
        impls.push_back(t.impl());
        track = track || t.requires_grad();
    }
    Tensor result = Tensor::from_buffer(std::move(out_shape), std::move(out));
    if (track && GradMode::enabled()) {
        auto record = std::make_shared<detail::OpRecord>();
        record->name = "concat";
        record->inputs = impls;
        record->backward = [impls, widths, outer, row](std::span<const double> g) {
            std::size_t offset = 0;
            for (std::size_t pi = 0; pi < impls.size(); ++pi) {
                if (double* gp = grad_of(impls[pi])) {
                    for (std::size_t o = 0; o < outer; ++o) {
                        for (std::size_t i = 0; i < widths[pi]; ++i) gp[o * widths[pi] + i] += g[o * row + offset + i];
                    }
                }
                offset += widths[pi];
            }
        };
        result.impl()->requires_grad = true;
        result.impl()->producer = std::move(record);
    }
    return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined("reshape", a);
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                                    shape_to_string(shape));
    }
    Buffer out(a.values().begin(), a.values().end());
    ImplPtr ai = a.impl();
    return finish(std::move(shape), std::move(out), "reshape", {&a}, [ai](std::span<const double> g) {
        double* ga = grad_of(ai);
        const double* gv = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gv[i];
    });
}

Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
    require_defined("select_rows", a);
    if (a.dim() == 0 || indices.empty()) throw std::invalid_argument("select_rows: need a leading axis and indices");
    const std::size_t rows = a.extent(0);
    const std::size_t width = a.numel() / rows;
    Buffer out;
    out.reserve(indices.size() * width);
    auto av = a.values();
    for (auto r : indices) {
        if (r >= rows) {
            throw std::invalid_argument("select_rows: index " + std::to_string(r) + " outside " +
                                        shape_to_string(a.shape()));
        }
        out.insert(out.end(), av.begin() + static_cast<long>(r * width), av.begin() + static_cast<long>((r + 1) * width));
    }
    Shape shape = a.shape();
    shape[0] = indices.size();
    ImplPtr ai = a.impl();
    return finish(std::move(shape), std::move(out), "select_rows", {&a}, [ai, indices, width](std::span<const double> g) {
        double* ga = grad_of(ai);
        for (std::size_t k = 0; k < indices.size(); ++k) {
            for (std::size_t e = 0; e < width; ++e) ga[indices[k] * width + e] += g[k * width + e];
        }
    });
}

Tensor relu(const Tensor& a) {
    require_defined("relu", a);
    Buffer out(a.values().begin(), a.values().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    ImplPtr ai = a.impl();
    return finish(a.shape(), std::move(out), "relu", {&a}, [ai](std::span<const double> g) {
        double* ga = grad_of(ai);
        const double* x = ai->values.data();
        const double* gv = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? gv[i] : 0.0;
    });
}

Tensor sigmoid(const Tensor& a) {
    require_defined("sigmoid", a);
    Buffer out(a.numel());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
    ImplPtr ai = a.impl();
    auto saved = std::make_shared<Buffer>(out);
    return finish(a.shape(), std::move(out), "sigmoid", {&a}, [ai, saved](std::span<const double> g) {
        double* ga = grad_of(ai);
        const double* s = saved->data();
        const double* gv = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gv[i] * s[i] * (1.0 - s[i]);
    });
}

Tensor sum(const Tensor& a) {
    require_defined("sum", a);
    double total = 0.0;
    for (double v : a.values()) total += v;
    ImplPtr ai = a.impl();
    return finish(Shape{1}, {total}, "sum", {&a}, [ai](std::span<const double> g) {
        double* ga = grad_of(ai);
        for (std::size_t i = 0; i < ai->values.size(); ++i) ga[i] += g[0];
    });
}

Tensor mean(const Tensor& a) {
    require_defined("mean", a);
    const double n = static_cast<double>(a.numel());
    double total = 0.0;
    for (double v : a.values()) total += v;
    ImplPtr ai = a.impl();
    return finish(Shape{1}, {total / n}, "mean", {&a}, [ai, n](std::span<const double> g) {
        double* ga = grad_of(ai);
        for (std::size_t i = 0; i < ai->values.size(); ++i) ga[i] += g[0] / n;
    });
}

Tensor squared_error_sum(const Tensor& a, const Tensor& b) {
    require_defined("squared_error_sum", a);
    require_defined("squared_error_sum", b);
    if (a.shape() != b.shape()) shape_error("squared_error_sum", a, b);
    auto av = a.values();
    auto bv = b.values();
    double total = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        total += d * d;
    }
    ImplPtr ai = a.impl(), bi = b.impl();
    return finish(Shape{1}, {total}, "squared_error_sum", {&a, &b}, [ai, bi](std::span<const double> g) {
        double* ga = grad_of(ai);
        double* gb = grad_of(bi);
        for (std::size_t i = 0; i < ai->values.size(); ++i) {
            const double d = 2.0 * (ai->values[i] - bi->values[i]) * g[0];
            if (ga) ga[i] += d;
            if (gb) gb[i] -= d;
        }
    });
}

namespace {

struct MaskedLayout {
    std::size_t slices;
    std::size_t plane;
    std::size_t observed;
};

MaskedLayout masked_layout(const char* op, const Tensor& pred, const Tensor& target, const Tensor& mask) {
    require_defined(op, pred);
    require_defined(op, target);
    require_defined(op, mask);
    if (target.shape() != mask.shape()) shape_error(op, target, mask, "target and mask");
    const auto& sp = pred.shape();
    const auto& st = target.shape();
    if (st.size() != 2 || sp.size() < 2 || sp[sp.size() - 2] != st[0] || sp.back() != st[1]) {
        shape_error(op, pred, target, "prediction must end in the target's two extents");
    }
    std::size_t observed = 0;
    for (double m : mask.values()) {
        if (m != 0.0 && m != 1.0) throw std::invalid_argument(std::string(op) + ": mask entries must be 0 or 1");
        observed += m == 1.0;
    }
    const std::size_t plane = target.numel();
    return {pred.numel() / plane, plane, observed};
}

}  // namespace

Tensor masked_bce(const Tensor& prob, const Tensor& target, const Tensor& mask) {
    const auto layout = masked_layout("masked_bce", prob, target, mask);
    auto pv = prob.values();
    auto tv = target.values();
    auto mv = mask.values();
    double total = 0.0;
    if (layout.observed > 0) {
        for (std::size_t s = 0; s < layout.slices; ++s) {
            for (std::size_t e = 0; e < layout.plane; ++e) {
                if (mv[e] == 0.0) continue;
                const double p = std::clamp(pv[s * layout.plane + e], kBceClamp, 1.0 - kBceClamp);
                total -= tv[e] * std::log(p) + (1.0 - tv[e]) * std::log(1.0 - p);
            }
        }
        total /= static_cast<double>(layout.observed * layout.slices);
    }
    ImplPtr pi = prob.impl(), ti = target.impl(), mi = mask.impl();
    return finish(Shape{1}, {total}, "masked_bce", {&prob}, [pi, ti, mi, layout](std::span<const double> g) {
        if (layout.observed == 0) return;
        double* gp = grad_of(pi);
        const double norm = g[0] / static_cast<double>(layout.observed * layout.slices);
        for (std::size_t s = 0; s < layout.slices; ++s) {
            for (std::size_t e = 0; e < layout.plane; ++e) {
                if (mi->values[e] == 0.0) continue;
                const double p = pi->values[s * layout.plane + e];
                if (p < kBceClamp || p > 1.0 - kBceClamp) continue;
                const double a = ti->values[e];
                gp[s * layout.plane + e] += norm * (-a / p + (1.0 - a) / (1.0 - p));
            }
        }
    });
}

Tensor masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    const auto layout = masked_layout("masked_mse", pred, target, mask);
    auto pv = pred.values();
    auto tv = target.values();
    auto mv = mask.values();
    double total = 0.0;
    if (layout.observed > 0) {
        for (std::size_t s = 0; s < layout.slices; ++s) {
            for (std::size_t e = 0; e < layout.plane; ++e) {
                if (mv[e] == 0.0) continue;
                const double d = pv[s * layout.plane + e] - tv[e];
                total += d * d;
            }
        }
        total /= static_cast<double>(layout.observed * layout.slices);
    }
    ImplPtr pi = pred.impl(), ti = target.impl(), mi = mask.impl();
    return finish(Shape{1}, {total}, "masked_mse", {&pred}, [pi, ti, mi, layout](std::span<const double> g) {
        if (layout.observed == 0) return;
        double* gp = grad_of(pi);
        const double norm = 2.0 * g[0] / static_cast<double>(layout.observed * layout.slices);
        for (std::size_t s = 0; s < layout.slices; ++s) {
            for (std::size_t e = 0; e < layout.plane; ++e) {
                if (mi->values[e] == 0.0) continue;
                gp[s * layout.plane + e] += norm * (pi->values[s * layout.plane + e] - ti->values[e]);
            }
        }
    });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t dilation,
              ConvPadding padding) {
    require_defined("conv1d", x);
    require_defined("conv1d", weight);
    if (dilation == 0) throw ConfigError("conv1d: dilation must be >= 1");
    const auto& sx = x.shape();
    const auto& sw = weight.shape();
    if (sw.size() != 3) shape_error("conv1d", x, weight, "weight must be [K, C_in, C_out]");
    if (sx.size() < 2 || sx.back() != sw[1]) shape_error("conv1d", x, weight, "input channels differ");
    const std::size_t kernel = sw[0], cin = sw[1], cout = sw[2];
    if (bias.defined() && (bias.dim() != 1 || bias.extent(0) != cout)) shape_error("conv1d", weight, bias, "bias");
    const std::size_t steps = sx[sx.size() - 2];
    const std::size_t reach = dilation * (kernel - 1);
    if (padding == ConvPadding::valid && steps <= reach) {
        throw ConfigError("conv1d: input length " + std::to_string(steps) + " too short for kernel " +
                          std::to_string(kernel) + " at dilation " + std::to_string(dilation));
    }
    const std::size_t out_steps = padding == ConvPadding::causal ? steps : steps - reach;
    const std::size_t offset = padding == ConvPadding::causal ? 0 : reach;
    const std::size_t rows = x.numel() / (steps * cin);
    const std::size_t width = kernel * cin;

    // im2col: one row per (series, output step) holding K taps of C_in channels.
    auto col = std::make_shared<Buffer>(rows * out_steps * width, 0.0);
    auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t to = 0; to < out_steps; ++to) {
            const std::size_t t = to + offset;
            double* dst = col->data() + (r * out_steps + to) * width;
            for (std::size_t k = 0; k < kernel; ++k) {
                if (t < dilation * k) break;
                const double* src = xv.data() + (r * steps + t - dilation * k) * cin;
                std::copy_n(src, cin, dst + k * cin);
            }
        }
    }

    Shape out_shape = sx;
    out_shape[out_shape.size() - 2] = out_steps;
    out_shape.back() = cout;
    Buffer out(rows * out_steps * cout);
    {
        ConstMap cm(col->data(), rows * out_steps, width);
        ConstMap wm(weight.values().data(), width, cout);
        MutMap om(out.data(), rows * out_steps, cout);
        om.noalias() = cm * wm;
        if (bias.defined()) {
            Eigen::Map<const Eigen::RowVectorXd> bv(bias.values().data(), static_cast<Eigen::Index>(cout));
            om.rowwise() += bv;
        }
    }

    ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
    return finish(std::move(out_shape), std::move(out), "conv1d", {&x, &weight, &bias},
                  [xi, wi, bi, col, rows, out_steps, offset, steps, kernel, cin, cout, width,
                   dilation](std::span<const double> g) {
                      const auto total_rows = static_cast<Eigen::Index>(rows * out_steps);
                      ConstMap gm(g.data(), total_rows, cout);
                      if (double* gw = grad_of(wi)) {
                          MutMap(gw, width, cout).noalias() += ConstMap(col->data(), total_rows, width).transpose() * gm;
                      }
                      if (double* gb = grad_of(bi)) {
                          Eigen::Map<Eigen::RowVectorXd>(gb, static_cast<Eigen::Index>(cout)) += gm.colwise().sum();
                      }
                      if (double* gx = grad_of(xi)) {
                          RowMat gcol = gm * ConstMap(wi->values.data(), width, cout).transpose();
                          for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t to = 0; to < out_steps; ++to) {
                                  const std::size_t t = to + offset;
                                  const double* src = gcol.data() + (r * out_steps + to) * width;
                                  for (std::size_t k = 0; k < kernel; ++k) {
                                      if (t < dilation * k) break;
                                      double* dst = gx + (r * steps + t - dilation * k) * cin;
                                      for (std::size_t c = 0; c < cin; ++c) dst[c] += src[k * cin + c];
                                  }
                              }
                          }
                      }
                  });
}

Tensor dilated_causal_conv1d(const Tensor& h, const Tensor& kernel, std::size_t dilation) {
    require_defined("dilated_causal_conv1d", h);
    require_defined("dilated_causal_conv1d", kernel);
    if (h.dim() != 1 || kernel.dim() != 1) shape_error("dilated_causal_conv1d", h, kernel, "expected 1D inputs");
    const std::size_t steps = h.extent(0);
    Tensor out = conv1d(reshape(h, {steps, 1}), reshape(kernel, {kernel.extent(0), 1, 1}), Tensor{}, dilation,
                        ConvPadding::causal);
    return reshape(out, {steps});
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training) {
    require_defined("batch_norm", x);
    const std::size_t channels = x.shape().back();
    for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var}) {
        require_defined("batch_norm", *p);
        if (p->dim() != 1 || p->extent(0) != channels) shape_error("batch_norm", x, *p, "per-channel parameter");
    }
    const std::size_t rows = x.numel() / channels;
    auto xv = x.values();
    std::vector<double> mu(channels, 0.0), inv_std(channels, 0.0);
    if (training) {
        std::vector<double> var(channels, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) mu[c] += xv[r * channels + c];
        for (auto& m : mu) m /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
                const double d = xv[r * channels + c] - mu[c];
                var[c] += d * d;
            }
        auto rm = state.running_mean.mutable_values();
        auto rv = state.running_var.mutable_values();
        for (std::size_t c = 0; c < channels; ++c) {
            var[c] /= static_cast<double>(rows);
            inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);
            const double unbiased = rows > 1 ? var[c] * static_cast<double>(rows) / static_cast<double>(rows - 1) : var[c];
            rm[c] = (1.0 - state.momentum) * rm[c] + state.momentum * mu[c];
            rv[c] = (1.0 - state.momentum) * rv[c] + state.momentum * unbiased;
        }
    } else {
        auto rm = state.running_mean.values();
        auto rv = state.running_var.values();
        for (std::size_t c = 0; c < channels; ++c) {
            mu[c] = rm[c];
            inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
        }
    }

    auto xhat = std::make_shared<Buffer>(x.numel());
    Buffer out(x.numel());
    auto gv = gamma.values();
    auto bv = beta.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            (*xhat)[i] = (xv[i] - mu[c]) * inv_std[c];
            out[i] = gv[c] * (*xhat)[i] + bv[c];
        }

    ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    return finish(x.shape(), std::move(out), "batch_norm", {&x, &gamma, &beta},
                  [xi, gi, bi, xhat, inv_std, rows, channels, training](std::span<const double> g) {
                      const auto& xh = *xhat;
                      std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
                      for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < channels; ++c) {
                              const std::size_t i = r * channels + c;
                              sum_g[c] += g[i];
                              sum_gx[c] += g[i] * xh[i];
                          }
                      if (double* gg = grad_of(gi))
                          for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_gx[c];
                      if (double* gb = grad_of(bi))
                          for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_g[c];
                      double* gx = grad_of(xi);
                      if (!gx) return;
                      const auto& gamma_v = gi->values;
                      const double m = static_cast<double>(rows);
                      for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < channels; ++c) {
                              const std::size_t i = r * channels + c;
                              if (training) {
                                  // d(xhat) = g * gamma; batch statistics couple every row.
                                  gx[i] += gamma_v[c] * inv_std[c] / m * (m * g[i] - sum_g[c] - xh[i] * sum_gx[c]);
                              } else {
                                  gx[i] += g[i] * gamma_v[c] * inv_std[c];
                              }
                          }
                  });
}

Tensor pairwise_add(const Tensor& u, const Tensor& v) {
    require_defined("pairwise_add", u);
    require_defined("pairwise_add", v);
    if (u.shape() != v.shape() || u.dim() != 3) shape_error("pairwise_add", u, v, "expected equal [B, N, H]");
    const std::size_t batch = u.extent(0), nodes = u.extent(1), hidden = u.extent(2);
    Buffer out(batch * nodes * nodes * hidden);
    auto uv = u.values();
    auto vv = v.values();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < nodes; ++i)
            for (std::size_t j = 0; j < nodes; ++j) {
                const double* ui = uv.data() + (b * nodes + i) * hidden;
                const double* vj = vv.data() + (b * nodes + j) * hidden;
                double* o = out.data() + ((b * nodes + i) * nodes + j) * hidden;
                for (std::size_t h = 0; h < hidden; ++h) o[h] = ui[h] + vj[h];
            }
    ImplPtr ui = u.impl(), vi = v.impl();
    return finish(Shape{batch, nodes, nodes, hidden}, std::move(out), "pairwise_add", {&u, &v},
                  [ui, vi, batch, nodes, hidden](std::span<const double> g) {
                      double* gu = grad_of(ui);
                      double* gv = grad_of(vi);
                      for (std::size_t b = 0; b < batch; ++b)
                          for (std::size_t i = 0; i < nodes; ++i)
                              for (std::size_t j = 0; j < nodes; ++j) {
                                  const double* gij = g.data() + ((b * nodes + i) * nodes + j) * hidden;
                                  for (std::size_t h = 0; h < hidden; ++h) {
                                      if (gu) gu[(b * nodes + i) * hidden + h] += gij[h];
                                      if (gv) gv[(b * nodes + j) * hidden + h] += gij[h];
                                  }
                              }
                  });
}

Tensor graph_aggregate(const Tensor& adjacency, const Tensor& features) {
    require_defined("graph_aggregate", adjacency);
    require_defined("graph_aggregate", features);
    const auto& sa = adjacency.shape();
    const auto& sf = features.shape();
    if (sa.size() != 3 || sa[1] != sa[2] || sf.size() < 2 || sf[0] != sa[0] || sf[1] != sa[1]) {
        shape_error("graph_aggregate", adjacency, features, "expected [B, N, N] and [B, N, ...]");
    }
    const std::size_t batch = sa[0], nodes = sa[1];
    const std::size_t width = features.numel() / (batch * nodes);
    Buffer out(features.numel());
    for (std::size_t b = 0; b < batch; ++b) {
        ConstMap am(adjacency.values().data() + b * nodes * nodes, nodes, nodes);
        ConstMap fm(features.values().data() + b * nodes * width, nodes, width);
        MutMap(out.data() + b * nodes * width, nodes, width).noalias() = am.transpose() * fm;
    }
    ImplPtr ai = adjacency.impl(), fi = features.impl();
    return finish(sf, std::move(out), "graph_aggregate", {&adjacency, &features},
                  [ai, fi, batch, nodes, width](std::span<const double> g) {
                      double* ga = grad_of(ai);
                      double* gf = grad_of(fi);
                      for (std::size_t b = 0; b < batch; ++b) {
                          ConstMap gm(g.data() + b * nodes * width, nodes, width);
                          if (ga) {
                              ConstMap fm(fi->values.data() + b * nodes * width, nodes, width);
                              MutMap(ga + b * nodes * nodes, nodes, nodes).noalias() += fm * gm.transpose();
                          }
                          if (gf) {
                              ConstMap am(ai->values.data() + b * nodes * nodes, nodes, nodes);
                              MutMap(gf + b * nodes * width, nodes, width).noalias() += am * gm;
                          }
                      }
                  });
}

}  // namespace skicl
