#include "nfs/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "nfs/errors.hpp"

namespace nfs {

namespace {

constexpr char kMagic[8] = {'N', 'F', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("checkpoint: cannot open " + path + " for writing");
    }
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* data, std::size_t size) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void doubles(std::span<const double> vs) {
        u64(vs.size());
        for (double v : vs) f64(v);
    }
    void check() {
        if (!out_) throw DataError("checkpoint: write failed");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw DataError("checkpoint: cannot open " + path);
    }
    std::uint8_t u8() {
        int c = in_.get();
        if (c == EOF) fail();
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        std::string s(u32(), '\0');
        in_.read(s.data(), static_cast<std::streamsize>(s.size()));
        if (!in_) fail();
        return s;
    }
    std::vector<double> doubles() {
        std::vector<double> vs(u64());
        for (double& v : vs) v = f64();
        return vs;
    }
    [[noreturn]] void fail() { throw DataError("checkpoint: " + path_ + " is truncated or corrupt"); }

private:
    std::ifstream in_;
    std::string path_;
};

void write_nfs_config(Writer& w, const NfsConfig& cfg) {
    w.u64(cfg.stream_count);
    w.u64(cfg.branch_widths.size());
    for (std::size_t width : cfg.branch_widths) w.u64(width);
    w.u64(cfg.filters_per_branch);
    w.u64(cfg.n_aggregate);
    w.f64(cfg.temporal_l2);
    w.f64(cfg.aggregate_l1);
}

NfsConfig read_nfs_config(Reader& r) {
    NfsConfig cfg;
    cfg.stream_count = r.u64();
    cfg.branch_widths.resize(r.u64());
    for (std::size_t& width : cfg.branch_widths) width = r.u64();
    cfg.filters_per_branch = r.u64();
    cfg.n_aggregate = r.u64();
    cfg.temporal_l2 = r.f64();
    cfg.aggregate_l1 = r.f64();
    return cfg;
}

void write_head_config(Writer& w, const HeadConfig& cfg, std::size_t seq_len) {
    w.u8(cfg.kind == HeadKind::Conv ? 0 : 1);
    w.u8(cfg.task == TaskKind::Regression ? 0 : 1);
    w.u64(cfg.class_count);
    w.u64(cfg.input_channels);
    auto write_list = [&w](const std::vector<std::size_t>& vs) {
        w.u64(vs.size());
        for (std::size_t v : vs) w.u64(v);
    };
    write_list(cfg.conv_filters);
    write_list(cfg.conv_widths);
    write_list(cfg.pool_factors);
    w.u64(cfg.hidden_size);
    w.u64(seq_len);
}

std::pair<HeadConfig, std::size_t> read_head_config(Reader& r) {
    HeadConfig cfg;
    cfg.kind = r.u8() == 0 ? HeadKind::Conv : HeadKind::Recurrent;
    cfg.task = r.u8() == 0 ? TaskKind::Regression : TaskKind::Classification;
    cfg.class_count = r.u64();
    cfg.input_channels = r.u64();
    auto read_list = [&r]() {
        std::vector<std::size_t> vs(r.u64());
        for (std::size_t& v : vs) v = r.u64();
        return vs;
    };
    cfg.conv_filters = read_list();
    cfg.conv_widths = read_list();
    cfg.pool_factors = read_list();
    cfg.hidden_size = r.u64();
    const std::size_t seq_len = r.u64();
    return {cfg, seq_len};
}

void write_params(Writer& w, const std::vector<Tensor>& params) {
    w.u64(params.size());
    for (const auto& p : params) {
        w.str(p.name());
        w.u32(static_cast<std::uint32_t>(p.rank()));
        for (std::size_t dim : p.shape()) w.u64(dim);
        w.doubles(p.value());
    }
}

void read_params_into(Reader& r, const std::vector<Tensor>& params) {
    std::map<std::string, Tensor> by_name;
    for (const auto& p : params) by_name.emplace(p.name(), p);
    const std::uint64_t count = r.u64();
    if (count != params.size()) {
        throw DataError("checkpoint: has " + std::to_string(count) + " parameters, model expects " +
                        std::to_string(params.size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        Shape shape(r.u32());
        for (std::size_t& dim : shape) dim = r.u64();
        std::vector<double> data = r.doubles();
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw DataError("checkpoint: unexpected parameter '" + name + "'");
        }
        Tensor target = it->second;
        if (target.shape() != shape || target.numel() != data.size()) {
            throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(target.shape()));
        }
        std::copy(data.begin(), data.end(), target.value_mut().begin());
    }
}

void write_bn_state(Writer& w, const BnState& state) {
    w.u8(state.initialized ? 1 : 0);
    w.f64(state.momentum);
    w.f64(state.eps);
    w.doubles(state.running_mean);
    w.doubles(state.running_var);
}

void read_bn_state(Reader& r, BnState& state) {
    state.initialized = r.u8() != 0;
    state.momentum = r.f64();
    state.eps = r.f64();
    auto mean = r.doubles();
    auto var = r.doubles();
    if (mean.size() != state.running_mean.size() || var.size() != state.running_var.size()) {
        throw DataError("checkpoint: BN state channel count mismatch");
    }
    state.running_mean = std::move(mean);
    state.running_var = std::move(var);
}

void write_header(Writer& w, std::uint8_t kind) {
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.u8(kind);
}

std::uint8_t read_header(Reader& r) {
    char magic[8];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("checkpoint: bad magic (not a checkpoint file)");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    return r.u8();
}

}  // namespace

void save_checkpoint(const NfsModule& module, const std::string& path) {
    Writer w(path);
    write_header(w, 0);
    write_nfs_config(w, module.config);
    w.u64(module.seed);
    write_bn_state(w, module.bn_state);
    write_params(w, module.parameters());
    w.check();
}

void save_checkpoint(const ComposedModel& model, const std::string& path) {
    Writer w(path);
    write_header(w, 1);
    write_nfs_config(w, model.nfs.config);
    w.u64(model.nfs.seed);
    write_bn_state(w, model.nfs.bn_state);
    const auto* conv = std::get_if<ConvHead>(&model.head);
    write_head_config(w, head_config(model.head), conv ? conv->seq_len : 0);
    write_params(w, model.parameters());
    w.check();
}

NfsModule load_nfs_checkpoint(const std::string& path) {
    Reader r(path);
    if (read_header(r) != 0) {
        throw DataError("checkpoint: " + path + " holds a composed model, not a bare module");
    }
    NfsConfig cfg = read_nfs_config(r);
    const std::uint64_t seed = r.u64();
    NfsModule module = build_nfs(cfg, seed);
    read_bn_state(r, module.bn_state);
    read_params_into(r, module.parameters());
    return module;
}

ComposedModel load_composed_checkpoint(const std::string& path) {
    Reader r(path);
    if (read_header(r) != 1) {
        throw DataError("checkpoint: " + path + " holds a bare module, not a composed model");
    }
    NfsConfig cfg = read_nfs_config(r);
    const std::uint64_t seed = r.u64();
    NfsModule module = build_nfs(cfg, seed);
    read_bn_state(r, module.bn_state);
    auto [head_cfg, seq_len] = read_head_config(r);
    Head head = build_head(head_cfg, seq_len, seed);
    ComposedModel model = compose(std::move(module), std::move(head));
    read_params_into(r, model.parameters());
    return model;
}

}  // namespace nfs
