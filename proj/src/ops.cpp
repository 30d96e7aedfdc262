#include "nfs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nfs/errors.hpp"

namespace nfs {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return Tensor::op_result(a.shape(), std::move(out), {a.node(), b.node()},
                             [](TensorNode& self) {
                                 for (int p = 0; p < 2; ++p) {
                                     auto& parent = *self.parents[p];
                                     if (!parent.needs_grad) continue;
                                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         parent.grad[i] += self.grad[i];
                                 }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return Tensor::op_result(a.shape(), std::move(out), {a.node(), b.node()},
                             [](TensorNode& self) {
                                 auto& a = *self.parents[0];
                                 auto& b = *self.parents[1];
                                 if (a.needs_grad) {
                                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         a.grad[i] += self.grad[i] * b.value[i];
                                 }
                                 if (b.needs_grad) {
                                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         b.grad[i] += self.grad[i] * a.value[i];
                                 }
                             });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    auto xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
    return Tensor::op_result(x.shape(), std::move(out), {x.node()},
                             [c](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 for (std::size_t i = 0; i < self.grad.size(); ++i)
                                     x.grad[i] += c * self.grad[i];
                             });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return Tensor::op_result(x.shape(), std::move(out), {x.node()},
                             [](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 // subgradient 0 at the kink
                                 for (std::size_t i = 0; i < self.grad.size(); ++i)
                                     if (x.value[i] > 0.0) x.grad[i] += self.grad[i];
                             });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
    return Tensor::op_result(x.shape(), std::move(out), {x.node()},
                             [](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                     const double s = self.value[i];
                                     x.grad[i] += self.grad[i] * s * (1.0 - s);
                                 }
                             });
}

Tensor tanh_op(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
    return Tensor::op_result(x.shape(), std::move(out), {x.node()},
                             [](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                     const double y = self.value[i];
                                     x.grad[i] += self.grad[i] * (1.0 - y * y);
                                 }
                             });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.value()) total += v;
    return Tensor::op_result({1}, {total}, {x.node()},
                             [](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 const double g = self.grad[0];
                                 for (double& gi : x.grad) gi += g;
                             });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(new_shape));
    }
    std::vector<double> out(x.value().begin(), x.value().end());
    return Tensor::op_result(std::move(new_shape), std::move(out), {x.node()},
                             [](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 for (std::size_t i = 0; i < self.grad.size(); ++i)
                                     x.grad[i] += self.grad[i];
                             });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw DimensionError("concat_channels: empty input list");
    const std::size_t B = xs[0].dim(0), T = xs[0].dim(1);
    std::size_t c_total = 0;
    std::vector<std::size_t> widths;
    for (const auto& x : xs) {
        if (x.rank() != 3 || x.dim(0) != B || x.dim(1) != T) {
            throw DimensionError("concat_channels: incompatible shape " + shape_str(x.shape()));
        }
        widths.push_back(x.dim(2));
        c_total += x.dim(2);
    }
    std::vector<double> out(B * T * c_total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        auto xv = xs[k].value();
        const std::size_t c = widths[k];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < c; ++j)
                    out[(b * T + t) * c_total + offset + j] = xv[(b * T + t) * c + j];
        offset += c;
    }
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& x : xs) parents.push_back(x.node());
    return Tensor::op_result({B, T, c_total}, std::move(out), std::move(parents),
                             [B, T, c_total, widths](TensorNode& self) {
                                 std::size_t offset = 0;
                                 for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                     auto& p = *self.parents[k];
                                     const std::size_t c = widths[k];
                                     if (p.needs_grad) {
                                         for (std::size_t b = 0; b < B; ++b)
                                             for (std::size_t t = 0; t < T; ++t)
                                                 for (std::size_t j = 0; j < c; ++j)
                                                     p.grad[(b * T + t) * c + j] +=
                                                         self.grad[(b * T + t) * c_total + offset + j];
                                     }
                                     offset += c;
                                 }
                             });
}

Tensor slice_channels(const Tensor& x, std::size_t from, std::size_t to) {
    if (x.rank() != 3) throw DimensionError("slice_channels: expected rank-3 tensor");
    const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    if (from >= to || to > C) throw DimensionError("slice_channels: invalid range");
    const std::size_t c_out = to - from;
    std::vector<double> out(B * T * c_out);
    auto xv = x.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < c_out; ++j)
                out[(b * T + t) * c_out + j] = xv[(b * T + t) * C + from + j];
    return Tensor::op_result({B, T, c_out}, std::move(out), {x.node()},
                             [B, T, C, from, c_out](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 for (std::size_t b = 0; b < B; ++b)
                                     for (std::size_t t = 0; t < T; ++t)
                                         for (std::size_t j = 0; j < c_out; ++j)
                                             x.grad[(b * T + t) * C + from + j] +=
                                                 self.grad[(b * T + t) * c_out + j];
                             });
}

Tensor select_timestep(const Tensor& x, std::size_t t) {
    if (x.rank() != 3) throw DimensionError("select_timestep: expected rank-3 tensor");
    const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    if (t >= T) throw DimensionError("select_timestep: t out of range");
    std::vector<double> out(B * C);
    auto xv = x.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) out[b * C + c] = xv[(b * T + t) * C + c];
    return Tensor::op_result({B, C}, std::move(out), {x.node()},
                             [T, C, t](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 const std::size_t B = self.shape[0];
                                 for (std::size_t b = 0; b < B; ++b)
                                     for (std::size_t c = 0; c < C; ++c)
                                         x.grad[(b * T + t) * C + c] += self.grad[b * C + c];
                             });
}

Tensor slice_cols(const Tensor& x, std::size_t from, std::size_t to) {
    if (x.rank() != 2) throw DimensionError("slice_cols: expected rank-2 tensor");
    const std::size_t B = x.dim(0), M = x.dim(1);
    if (from >= to || to > M) throw DimensionError("slice_cols: invalid range");
    const std::size_t n = to - from;
    std::vector<double> out(B * n);
    auto xv = x.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < n; ++j) out[b * n + j] = xv[b * M + from + j];
    return Tensor::op_result({B, n}, std::move(out), {x.node()},
                             [M, from, n](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 const std::size_t B = self.shape[0];
                                 for (std::size_t b = 0; b < B; ++b)
                                     for (std::size_t j = 0; j < n; ++j)
                                         x.grad[b * M + from + j] += self.grad[b * n + j];
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t B = a.dim(0), m = a.dim(1), n = b.dim(1);
    std::vector<double> out(B * n, 0.0);
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = av[i * m + k];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * bv[k * n + j];
        }
    return Tensor::op_result({B, n}, std::move(out), {a.node(), b.node()},
                             [B, m, n](TensorNode& self) {
                                 auto& a = *self.parents[0];
                                 auto& b = *self.parents[1];
                                 if (a.needs_grad) {
                                     for (std::size_t i = 0; i < B; ++i)
                                         for (std::size_t j = 0; j < n; ++j) {
                                             const double g = self.grad[i * n + j];
                                             for (std::size_t k = 0; k < m; ++k)
                                                 a.grad[i * m + k] += g * b.value[k * n + j];
                                         }
                                 }
                                 if (b.needs_grad) {
                                     for (std::size_t i = 0; i < B; ++i)
                                         for (std::size_t k = 0; k < m; ++k) {
                                             const double av = a.value[i * m + k];
                                             for (std::size_t j = 0; j < n; ++j)
                                                 b.grad[k * n + j] += av * self.grad[i * n + j];
                                         }
                                 }
                             });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                             " does not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t n = bias.dim(0);
    std::vector<double> out(x.numel());
    auto xv = x.value();
    auto bv = bias.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
    return Tensor::op_result(x.shape(), std::move(out), {x.node(), bias.node()},
                             [n](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 auto& b = *self.parents[1];
                                 if (x.needs_grad) {
                                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         x.grad[i] += self.grad[i];
                                 }
                                 if (b.needs_grad) {
                                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         b.grad[i % n] += self.grad[i];
                                 }
                             });
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add_bias(matmul(x, weight), bias);
}

Tensor conv1d(const Tensor& input, const Tensor& filters, const Tensor& bias) {
    const bool batched = input.rank() == 3;
    if (!batched && input.rank() != 2) {
        throw DimensionError("conv1d: expected [T x C] or [B x T x C], got " +
                             shape_str(input.shape()));
    }
    const std::size_t B = batched ? input.dim(0) : 1;
    const std::size_t T = batched ? input.dim(1) : input.dim(0);
    const std::size_t C = batched ? input.dim(2) : input.dim(1);
    if (filters.rank() != 3 || filters.dim(2) != C) {
        throw DimensionError("conv1d: filters " + shape_str(filters.shape()) +
                             " do not match input channels of " + shape_str(input.shape()));
    }
    const std::size_t F = filters.dim(0), w = filters.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != F) {
        throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(F) + " filters");
    }
    if (w > T) {
        throw DimensionError("conv1d: filter width " + std::to_string(w) +
                             " exceeds sequence length " + std::to_string(T));
    }
    // Same padding; even widths get the extra zero on the right.
    const std::size_t pad_left = (w - 1) / 2;

    std::vector<double> out(B * T * F);
    auto xv = input.value();
    auto fv = filters.value();
    auto bv = bias.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t f = 0; f < F; ++f) {
                double acc = bv[f];
                for (std::size_t i = 0; i < w; ++i) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + i) -
                                               static_cast<std::ptrdiff_t>(pad_left);
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                    const std::size_t xoff = (b * T + static_cast<std::size_t>(src)) * C;
                    const std::size_t foff = (f * w + i) * C;
                    for (std::size_t c = 0; c < C; ++c) acc += xv[xoff + c] * fv[foff + c];
                }
                out[(b * T + t) * F + f] = acc;
            }

    Shape out_shape = batched ? Shape{B, T, F} : Shape{T, F};
    return Tensor::op_result(
        std::move(out_shape), std::move(out), {input.node(), filters.node(), bias.node()},
        [B, T, C, F, w, pad_left](TensorNode& self) {
            auto& x = *self.parents[0];
            auto& filt = *self.parents[1];
            auto& bias = *self.parents[2];
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t f = 0; f < F; ++f) {
                        const double g = self.grad[(b * T + t) * F + f];
                        if (g == 0.0) continue;
                        if (bias.needs_grad) bias.grad[f] += g;
                        for (std::size_t i = 0; i < w; ++i) {
                            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + i) -
                                                       static_cast<std::ptrdiff_t>(pad_left);
                            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                            const std::size_t xoff = (b * T + static_cast<std::size_t>(src)) * C;
                            const std::size_t foff = (f * w + i) * C;
                            if (x.needs_grad) {
                                for (std::size_t c = 0; c < C; ++c)
                                    x.grad[xoff + c] += g * filt.value[foff + c];
                            }
                            if (filt.needs_grad) {
                                for (std::size_t c = 0; c < C; ++c)
                                    filt.grad[foff + c] += g * x.value[xoff + c];
                            }
                        }
                    }
        });
}

Tensor maxpool1d(const Tensor& x, std::size_t factor) {
    if (x.rank() != 3) throw DimensionError("maxpool1d: expected rank-3 tensor");
    if (factor == 0) throw DimensionError("maxpool1d: factor must be positive");
    const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    const std::size_t T_out = T / factor;
    if (T_out == 0) {
        throw DimensionError("maxpool1d: sequence length " + std::to_string(T) +
                             " too short for pool factor " + std::to_string(factor));
    }
    std::vector<double> out(B * T_out * C);
    std::vector<std::size_t> argmax(out.size());  // flat index into x, first max wins
    auto xv = x.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T_out; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t i = 0; i < factor; ++i) {
                    const std::size_t idx = (b * T + t * factor + i) * C + c;
                    if (xv[idx] > best) {
                        best = xv[idx];
                        best_idx = idx;
                    }
                }
                const std::size_t o = (b * T_out + t) * C + c;
                out[o] = best;
                argmax[o] = best_idx;
            }
    return Tensor::op_result({B, T_out, C}, std::move(out), {x.node()},
                             [argmax = std::move(argmax)](TensorNode& self) {
                                 auto& x = *self.parents[0];
                                 if (!x.needs_grad) return;
                                 for (std::size_t o = 0; o < self.grad.size(); ++o)
                                     x.grad[argmax[o]] += self.grad[o];
                             });
}

Tensor batchnorm(const Tensor& x, const Tensor& scale, const Tensor& shift, BnState& state,
                 Mode mode) {
    if (x.rank() != 3) throw DimensionError("batchnorm: expected [B x T x C] input");
    const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    if (scale.rank() != 1 || scale.dim(0) != C || shift.rank() != 1 || shift.dim(0) != C) {
        throw DimensionError("batchnorm: scale/shift must be [C] with C=" + std::to_string(C));
    }
    if (state.running_mean.size() != C) {
        throw DimensionError("batchnorm: state has " + std::to_string(state.running_mean.size()) +
                             " channels, input has " + std::to_string(C));
    }
    const std::size_t N = B * T;
    if (mode == Mode::Train && N < 2) {
        throw DimensionError("batchnorm: train mode needs B*T >= 2 per channel");
    }
    if (mode == Mode::Eval && !state.initialized) {
        throw StateError("batchnorm: eval mode before any train-mode call");
    }

    std::vector<double> mean(C), inv_std(C);
    auto xv = x.value();
    if (mode == Mode::Train) {
        std::vector<double> var(C, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0.0;
            for (std::size_t i = 0; i < N; ++i) m += xv[i * C + c];
            m /= static_cast<double>(N);
            double v = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                const double d = xv[i * C + c] - m;
                v += d * d;
            }
            v /= static_cast<double>(N);
            mean[c] = m;
            var[c] = v;
            inv_std[c] = 1.0 / std::sqrt(v + state.eps);
        }
        if (!state.initialized) {
            state.running_mean = mean;
            state.running_var = var;
            state.initialized = true;
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                state.running_mean[c] =
                    state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean[c];
                state.running_var[c] =
                    state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
            }
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
        }
    }

    auto normalized = std::make_shared<std::vector<double>>(N * C);
    std::vector<double> out(N * C);
    auto sv = scale.value();
    auto bv = shift.value();
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < C; ++c) {
            const double xhat = (xv[i * C + c] - mean[c]) * inv_std[c];
            (*normalized)[i * C + c] = xhat;
            out[i * C + c] = sv[c] * xhat + bv[c];
        }

    const bool train = mode == Mode::Train;
    return Tensor::op_result(
        {B, T, C}, std::move(out), {x.node(), scale.node(), shift.node()},
        [N, C, train, normalized, inv_std = std::move(inv_std)](TensorNode& self) {
            auto& x = *self.parents[0];
            auto& scale = *self.parents[1];
            auto& shift = *self.parents[2];
            const auto& xhat = *normalized;
            if (scale.needs_grad) {
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t c = 0; c < C; ++c)
                        scale.grad[c] += self.grad[i * C + c] * xhat[i * C + c];
            }
            if (shift.needs_grad) {
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t c = 0; c < C; ++c) shift.grad[c] += self.grad[i * C + c];
            }
            if (!x.needs_grad) return;
            if (!train) {
                // Eval mode: running stats are constants w.r.t. the input.
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t c = 0; c < C; ++c)
                        x.grad[i * C + c] +=
                            self.grad[i * C + c] * scale.value[c] * inv_std[c];
                return;
            }
            // Train mode: batch statistics depend on x.
            //   dxhat_i = dy_i * alpha
            //   dx_i = inv_std * (dxhat_i - mean(dxhat) - xhat_i * mean(dxhat * xhat))
            for (std::size_t c = 0; c < C; ++c) {
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double dxhat = self.grad[i * C + c] * scale.value[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat[i * C + c];
                }
                const double mean_dxhat = sum_dxhat / static_cast<double>(N);
                const double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(N);
                for (std::size_t i = 0; i < N; ++i) {
                    const double dxhat = self.grad[i * C + c] * scale.value[c];
                    x.grad[i * C + c] += inv_std[c] * (dxhat - mean_dxhat -
                                                       xhat[i * C + c] * mean_dxhat_xhat);
                }
            }
        });
}

Tensor mse_loss(const Tensor& pred, std::span<const double> target) {
    if (target.empty()) throw DataError("mse_loss: empty batch");
    if (pred.numel() != target.size()) {
        throw DimensionError("mse_loss: " + std::to_string(pred.numel()) + " predictions vs " +
                             std::to_string(target.size()) + " targets");
    }
    const std::size_t B = target.size();
    auto pv = pred.value();
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double d = pv[i] - target[i];
        loss += d * d;
    }
    loss /= static_cast<double>(B);
    std::vector<double> tgt(target.begin(), target.end());
    return Tensor::op_result({1}, {loss}, {pred.node()},
                             [tgt = std::move(tgt)](TensorNode& self) {
                                 auto& pred = *self.parents[0];
                                 if (!pred.needs_grad) return;
                                 const double g = self.grad[0];
                                 const double invB = 1.0 / static_cast<double>(tgt.size());
                                 for (std::size_t i = 0; i < tgt.size(); ++i)
                                     pred.grad[i] += g * 2.0 * (pred.value[i] - tgt[i]) * invB;
                             });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
    if (labels.empty()) throw DataError("cross_entropy_loss: empty batch");
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw DimensionError("cross_entropy_loss: logits " + shape_str(logits.shape()) +
                             " vs " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    for (std::size_t i = 0; i < B; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K) {
            throw DataError("cross_entropy_loss: label " + std::to_string(labels[i]) +
                            " out of range [0, " + std::to_string(K) + ") at sample " +
                            std::to_string(i));
        }
    }
    auto lv = logits.value();
    auto softmax = std::make_shared<std::vector<double>>(B * K);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double mx = lv[i * K];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, lv[i * K + k]);
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(lv[i * K + k] - mx);
        const double log_denom = std::log(denom);
        for (std::size_t k = 0; k < K; ++k)
            (*softmax)[i * K + k] = std::exp(lv[i * K + k] - mx) / denom;
        loss += log_denom - (lv[i * K + labels[i]] - mx);
    }
    loss /= static_cast<double>(B);
    std::vector<int> lbl(labels.begin(), labels.end());
    return Tensor::op_result(
        {1}, {loss}, {logits.node()},
        [softmax, lbl = std::move(lbl), K](TensorNode& self) {
            auto& logits = *self.parents[0];
            if (!logits.needs_grad) return;
            const double g = self.grad[0];
            const double invB = 1.0 / static_cast<double>(lbl.size());
            for (std::size_t i = 0; i < lbl.size(); ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double onehot = (static_cast<std::size_t>(lbl[i]) == k) ? 1.0 : 0.0;
                    logits.grad[i * K + k] += g * ((*softmax)[i * K + k] - onehot) * invB;
                }
        });
}

Tensor l1_penalty(const Tensor& v, double gamma) {
    double total = 0.0;
    for (double x : v.value()) total += std::abs(x);
    return Tensor::op_result({1}, {gamma * total}, {v.node()},
                             [gamma](TensorNode& self) {
                                 auto& v = *self.parents[0];
                                 if (!v.needs_grad) return;
                                 const double g = self.grad[0] * gamma;
                                 for (std::size_t i = 0; i < v.value.size(); ++i) {
                                     if (v.value[i] > 0.0)
                                         v.grad[i] += g;
                                     else if (v.value[i] < 0.0)
                                         v.grad[i] -= g;
                                     // sign(0) = 0
                                 }
                             });
}

Tensor l2_penalty(const Tensor& v, double lambda) {
    double total = 0.0;
    for (double x : v.value()) total += x * x;
    return Tensor::op_result({1}, {lambda * total}, {v.node()},
                             [lambda](TensorNode& self) {
                                 auto& v = *self.parents[0];
                                 if (!v.needs_grad) return;
                                 const double g = self.grad[0] * lambda;
                                 for (std::size_t i = 0; i < v.value.size(); ++i)
                                     v.grad[i] += g * 2.0 * v.value[i];
                             });
}

}  // namespace nfs
