#include "nfs/heads.hpp"

#include <string>

#include "nfs/errors.hpp"
#include "nfs/rng.hpp"

namespace nfs {

void HeadConfig::validate() const {
    if (task == TaskKind::Classification && class_count < 2) {
        throw ConfigError("HeadConfig: classification needs class_count >= 2");
    }
    if (input_channels < 1) throw ConfigError("HeadConfig: input_channels must be >= 1");
    if (kind == HeadKind::Conv) {
        if (conv_filters.size() != 2 || conv_widths.size() != 2 || pool_factors.size() != 2) {
            throw ConfigError("HeadConfig: conv head expects two conv/pool stages");
        }
        for (std::size_t v : conv_filters)
            if (v < 1) throw ConfigError("HeadConfig: filter counts must be >= 1");
        for (std::size_t v : conv_widths)
            if (v < 1) throw ConfigError("HeadConfig: filter widths must be >= 1");
        for (std::size_t v : pool_factors)
            if (v < 1) throw ConfigError("HeadConfig: pool factors must be >= 1");
    } else {
        if (hidden_size < 1) throw ConfigError("HeadConfig: hidden_size must be >= 1");
    }
}

namespace {

ConvHead build_conv_head(const HeadConfig& cfg, std::size_t seq_len, Rng& rng) {
    // Walk the temporal length through both stages to size the readout, and
    // reject configurations the pooling or convs cannot support.
    const std::size_t t1 = seq_len / cfg.pool_factors[0];
    if (t1 == 0 || cfg.conv_widths[0] > seq_len) {
        throw ConfigError("conv head: sequence length " + std::to_string(seq_len) +
                          " too short for stage 1 (width " + std::to_string(cfg.conv_widths[0]) +
                          ", pool " + std::to_string(cfg.pool_factors[0]) + ")");
    }
    const std::size_t t2 = t1 / cfg.pool_factors[1];
    if (t2 == 0 || cfg.conv_widths[1] > t1) {
        throw ConfigError("conv head: sequence length " + std::to_string(seq_len) +
                          " too short for stage 2 (width " + std::to_string(cfg.conv_widths[1]) +
                          ", pool " + std::to_string(cfg.pool_factors[1]) + ")");
    }

    ConvHead head;
    head.config = cfg;
    head.seq_len = seq_len;
    const std::size_t f1 = cfg.conv_filters[0], f2 = cfg.conv_filters[1];
    const std::size_t w1 = cfg.conv_widths[0], w2 = cfg.conv_widths[1];
    head.conv1.weight = Tensor::init_uniform({f1, w1, cfg.input_channels},
                                             w1 * cfg.input_channels, rng, "head.conv1.weight");
    head.conv1.bias = Tensor::parameter({f1}, std::vector<double>(f1, 0.0), "head.conv1.bias");
    head.conv2.weight = Tensor::init_uniform({f2, w2, f1}, w2 * f1, rng, "head.conv2.weight");
    head.conv2.bias = Tensor::parameter({f2}, std::vector<double>(f2, 0.0), "head.conv2.bias");

    const std::size_t flat = t2 * f2;
    const std::size_t out = cfg.output_dim();
    head.out_weight = Tensor::init_uniform({flat, out}, flat, rng, "head.out.weight");
    head.out_bias = Tensor::parameter({out}, std::vector<double>(out, 0.0), "head.out.bias");
    return head;
}

RecurrentHead build_recurrent_head(const HeadConfig& cfg, Rng& rng) {
    RecurrentHead head;
    head.config = cfg;
    const std::size_t n = cfg.input_channels, h = cfg.hidden_size;
    head.w_input = Tensor::init_uniform({n, 4 * h}, n, rng, "head.lstm.w_input");
    head.w_hidden = Tensor::init_uniform({h, 4 * h}, h, rng, "head.lstm.w_hidden");
    head.b_gates = Tensor::parameter({4 * h}, std::vector<double>(4 * h, 0.0), "head.lstm.bias");
    const std::size_t out = cfg.output_dim();
    head.out_weight = Tensor::init_uniform({h, out}, h, rng, "head.out.weight");
    head.out_bias = Tensor::parameter({out}, std::vector<double>(out, 0.0), "head.out.bias");
    return head;
}

Tensor readout(const Tensor& features, const Tensor& weight, const Tensor& bias, TaskKind task) {
    Tensor out = dense(features, weight, bias);
    if (task == TaskKind::Regression) return reshape(out, {out.dim(0)});
    return out;
}

}  // namespace

Head build_head(const HeadConfig& config, std::size_t seq_len, std::uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed));
    if (config.kind == HeadKind::Conv) return build_conv_head(config, seq_len, rng);
    return build_recurrent_head(config, rng);
}

const HeadConfig& head_config(const Head& head) {
    return std::visit([](const auto& h) -> const HeadConfig& { return h.config; }, head);
}

std::vector<Tensor> head_parameters(const Head& head) {
    if (const auto* conv = std::get_if<ConvHead>(&head)) {
        return {conv->conv1.weight, conv->conv1.bias, conv->conv2.weight, conv->conv2.bias,
                conv->out_weight, conv->out_bias};
    }
    const auto& rec = std::get<RecurrentHead>(head);
    return {rec.w_input, rec.w_hidden, rec.b_gates, rec.out_weight, rec.out_bias};
}

Tensor conv_head_forward(const ConvHead& head, const Tensor& features) {
    if (features.rank() != 3 || features.dim(2) != head.config.input_channels) {
        throw DimensionError("conv head: features " + shape_str(features.shape()) +
                             " do not have " + std::to_string(head.config.input_channels) +
                             " channels");
    }
    if (features.dim(1) != head.seq_len) {
        throw DimensionError("conv head: built for T=" + std::to_string(head.seq_len) +
                             ", got T=" + std::to_string(features.dim(1)));
    }
    Tensor x = relu(conv1d(features, head.conv1.weight, head.conv1.bias));
    x = maxpool1d(x, head.config.pool_factors[0]);
    x = relu(conv1d(x, head.conv2.weight, head.conv2.bias));
    x = maxpool1d(x, head.config.pool_factors[1]);
    const std::size_t B = x.dim(0);
    x = reshape(x, {B, x.dim(1) * x.dim(2)});
    return readout(x, head.out_weight, head.out_bias, head.config.task);
}

Tensor recurrent_head_forward(const RecurrentHead& head, const Tensor& features) {
    if (features.rank() != 3 || features.dim(2) != head.config.input_channels) {
        throw DimensionError("recurrent head: features " + shape_str(features.shape()) +
                             " do not have " + std::to_string(head.config.input_channels) +
                             " channels");
    }
    const std::size_t B = features.dim(0), T = features.dim(1), H = head.config.hidden_size;
    Tensor h = Tensor::zeros({B, H});
    Tensor c = Tensor::zeros({B, H});
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x_t = select_timestep(features, t);
        Tensor z = add(dense(x_t, head.w_input, head.b_gates), matmul(h, head.w_hidden));
        Tensor gate_i = sigmoid(slice_cols(z, 0, H));
        Tensor gate_f = sigmoid(slice_cols(z, H, 2 * H));
        Tensor gate_g = tanh_op(slice_cols(z, 2 * H, 3 * H));
        Tensor gate_o = sigmoid(slice_cols(z, 3 * H, 4 * H));
        c = add(mul(gate_f, c), mul(gate_i, gate_g));
        h = mul(gate_o, tanh_op(c));
    }
    return readout(h, head.out_weight, head.out_bias, head.config.task);
}

Tensor head_forward(const Head& head, const Tensor& features) {
    if (const auto* conv = std::get_if<ConvHead>(&head)) {
        return conv_head_forward(*conv, features);
    }
    return recurrent_head_forward(std::get<RecurrentHead>(head), features);
}

std::vector<Tensor> ComposedModel::parameters() const {
    std::vector<Tensor> params = nfs.parameters();
    auto head_params = head_parameters(head);
    params.insert(params.end(), head_params.begin(), head_params.end());
    return params;
}

void ComposedModel::zero_grads() {
    for (auto& p : parameters()) p.zero_grad();
}

ComposedModel compose(NfsModule nfs_module, Head head) {
    const HeadConfig& cfg = head_config(head);
    if (cfg.input_channels != nfs_module.config.n_aggregate) {
        throw DimensionError("compose: head expects " + std::to_string(cfg.input_channels) +
                             " input channels, NFS produces " +
                             std::to_string(nfs_module.config.n_aggregate));
    }
    ComposedModel model;
    model.nfs = std::move(nfs_module);
    model.head = std::move(head);
    model.task = cfg.task;
    return model;
}

Tensor model_forward(ComposedModel& model, const Tensor& batch, Mode mode) {
    return head_forward(model.head, nfs_forward(model.nfs, batch, mode));
}

}  // namespace nfs
