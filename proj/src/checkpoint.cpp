#include "freecg/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace freecg {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
                 << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
                 << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v = 0.0;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_array(std::string& out, const std::string& name, const Shape& shape,
               const std::vector<double>& values) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::int64_t d : shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : values) put_f64(out, v);
}

void put_scalar(std::string& out, const std::string& name, double v) {
    put_array(out, name, {1}, {v});
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    const ModelConfig& c = model.config;
    std::string out;
    out += "FCG1";
    put_u32(out, kCheckpointVersion);

    const std::uint32_t n_meta = 15;
    put_u32(out, n_meta + static_cast<std::uint32_t>(model.params.size()));
    put_scalar(out, "cfg.channels", c.channels);
    put_scalar(out, "cfg.layers", c.layers);
    put_scalar(out, "cfg.heads", c.heads);
    put_scalar(out, "cfg.num_rbf", c.num_rbf);
    put_scalar(out, "cfg.cutoff", c.cutoff);
    put_scalar(out, "cfg.groups", c.groups);
    put_scalar(out, "cfg.shuffle_multiplier", c.shuffle_multiplier);
    put_scalar(out, "cfg.mode", c.mode == PathMode::O3_sparse ? 0.0 : 1.0);
    put_scalar(out, "cfg.head", c.head == ModelConfig::Head::equivariant_gated ? 0.0 : 1.0);
    put_scalar(out, "cfg.enhancer", c.enhancer ? 1.0 : 0.0);
    put_scalar(out, "cfg.enhancer_source",
               c.enhancer_source == ModelConfig::EnhancerSource::neighbor ? 0.0 : 1.0);
    put_scalar(out, "cfg.rejcalc_source",
               c.rejcalc_source == ModelConfig::RejSource::central ? 0.0 : 1.0);
    put_scalar(out, "cfg.precision", c.precision == Precision::f64 ? 0.0 : 1.0);
    put_scalar(out, "norm.energy_scale", model.energy_scale);
    put_scalar(out, "norm.energy_shift", model.energy_shift);
    for (const NamedArray& a : model.params.arrays()) put_array(out, a.name, a.shape, a.values);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader rd{buf};
    if (rd.str(4) != "FCG1") throw IoError("'" + path + "' is not an FCG1 checkpoint");
    const std::uint32_t version = rd.u32();
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = rd.u32();

    ParamStore raw;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = rd.u32();
        std::string name = rd.str(name_len);
        const std::uint32_t rank = rd.u32();
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r)
            shape.push_back(static_cast<std::int64_t>(rd.u64()));
        std::vector<double> values(static_cast<std::size_t>(numel(shape)));
        for (double& v : values) v = rd.f64();
        raw.add(std::move(name), std::move(shape), std::move(values));
    }

    auto scalar = [&](const std::string& name) {
        if (!raw.has(name)) throw IoError("checkpoint missing '" + name + "'");
        return raw.at(name).values[0];
    };
    ModelConfig c;
    c.channels = static_cast<int>(scalar("cfg.channels"));
    c.layers = static_cast<int>(scalar("cfg.layers"));
    c.heads = static_cast<int>(scalar("cfg.heads"));
    c.num_rbf = static_cast<int>(scalar("cfg.num_rbf"));
    c.cutoff = scalar("cfg.cutoff");
    c.groups = static_cast<int>(scalar("cfg.groups"));
    c.shuffle_multiplier = scalar("cfg.shuffle_multiplier");
    c.mode = scalar("cfg.mode") == 0.0 ? PathMode::O3_sparse : PathMode::SO3_full;
    c.head = scalar("cfg.head") == 0.0 ? ModelConfig::Head::equivariant_gated
                                       : ModelConfig::Head::scalar;
    c.enhancer = scalar("cfg.enhancer") != 0.0;
    c.enhancer_source = scalar("cfg.enhancer_source") == 0.0
                            ? ModelConfig::EnhancerSource::neighbor
                            : ModelConfig::EnhancerSource::central;
    c.rejcalc_source = scalar("cfg.rejcalc_source") == 0.0 ? ModelConfig::RejSource::central
                                                           : ModelConfig::RejSource::neighbor;
    c.precision = scalar("cfg.precision") == 0.0 ? Precision::f64 : Precision::f32;

    Model model(c);
    model.init_params(0);  // allocate the canonical array set, then overwrite
    model.energy_scale = scalar("norm.energy_scale");
    model.energy_shift = scalar("norm.energy_shift");
    for (NamedArray& a : model.params.arrays()) {
        if (!raw.has(a.name)) throw IoError("checkpoint missing parameter '" + a.name + "'");
        NamedArray& src = raw.at(a.name);
        if (src.shape != a.shape)
            throw ConfigError("checkpoint parameter '" + a.name + "' has shape " +
                              shape_str(src.shape) + ", model expects " + shape_str(a.shape));
        a.values = std::move(src.values);
    }
    return model;
}

}  // namespace freecg
