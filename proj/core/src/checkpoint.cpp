#include "amlfs/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "amlfs/errors.hpp"

namespace amlfs {
namespace {

const char kMagic[4] = {'A', 'M', 'L', 'F'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_tensor(std::vector<unsigned char>& buf, const std::string& name,
                const std::vector<std::uint32_t>& dims, const double* data) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put_u32(buf, static_cast<std::uint32_t>(dims.size()));
    std::size_t count = 1;
    for (std::uint32_t d : dims) {
        put_u32(buf, d);
        count *= d;
    }
    for (std::size_t i = 0; i < count; ++i) put_f64(buf, data[i]);
}

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

class Reader {
public:
    Reader(std::vector<unsigned char> bytes, std::string path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::size_t pos() const { return pos_; }
    bool eof() const { return pos_ >= bytes_.size(); }

    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }

    std::string str(std::size_t n, const std::string& what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n, const std::string& what) {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(path_ + ": truncated while reading " + what +
                              " at offset " + std::to_string(pos_) + " (need " +
                              std::to_string(n) + " bytes, " +
                              std::to_string(bytes_.size() - pos_) + " remain)");
        }
    }

private:
    std::vector<unsigned char> bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

void check_dims(const std::string& path, const std::string& name, const Tensor& t,
                const std::vector<std::uint32_t>& want) {
    if (t.dims != want) {
        std::string got, expect;
        for (std::uint32_t d : t.dims) got += std::to_string(d) + " ";
        for (std::uint32_t d : want) expect += std::to_string(d) + " ";
        throw ConsistencyError(path + ": tensor '" + name + "' has dims [ " + got +
                               "], expected [ " + expect + "]");
    }
}

} // namespace

void save_checkpoint(const ModelState& model, const std::string& path) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kCheckpointVersion);

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const std::string base = "layers." + std::to_string(l);
        const LinearLayer& layer = model.layers[l];
        const LinearLayer& vel = model.layer_vel[l];
        std::vector<std::uint32_t> wdims = {static_cast<std::uint32_t>(layer.w.rows),
                                            static_cast<std::uint32_t>(layer.w.cols)};
        std::vector<std::uint32_t> bdims = {static_cast<std::uint32_t>(layer.b.cols)};
        put_tensor(buf, base + ".w", wdims, layer.w.data.data());
        put_tensor(buf, base + ".b", bdims, layer.b.data.data());
        put_tensor(buf, "momentum." + base + ".w", wdims, vel.w.data.data());
        put_tensor(buf, "momentum." + base + ".b", bdims, vel.b.data.data());
    }
    std::vector<std::uint32_t> hdims = {static_cast<std::uint32_t>(model.head_w.rows),
                                        static_cast<std::uint32_t>(model.head_w.cols)};
    put_tensor(buf, "head.w", hdims, model.head_w.data.data());
    put_tensor(buf, "momentum.head.w", hdims, model.head_vel.data.data());

    double head_kind = (model.config.head == HeadKind::Linear) ? 1.0 : 0.0;
    put_tensor(buf, "meta.head_kind", {1}, &head_kind);
    // the seed split into 32-bit halves survives the f64 round trip exactly
    double seed_parts[2] = {static_cast<double>(model.rng_seed & 0xffffffffULL),
                            static_cast<double>(model.rng_seed >> 32)};
    put_tensor(buf, "meta.rng_seed", {2}, seed_parts);

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
    if (!os) throw FormatError("failed writing checkpoint to '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path);

    std::string magic = r.str(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw FormatError(path + ": bad magic at offset 0, not a checkpoint");
    }
    std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    }

    std::map<std::string, Tensor> tensors;
    while (!r.eof()) {
        std::uint32_t name_len = r.u32("tensor name length");
        std::string name = r.str(name_len, "tensor name");
        Tensor t;
        std::uint32_t rank = r.u32("rank of '" + name + "'");
        if (rank > 8) {
            throw FormatError(path + ": tensor '" + name + "' has implausible rank " +
                              std::to_string(rank));
        }
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t dim = r.u32("dims of '" + name + "'");
            t.dims.push_back(dim);
            count *= dim;
        }
        t.data.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            t.data.push_back(r.f64("data of '" + name + "'"));
        }
        if (!tensors.emplace(name, std::move(t)).second) {
            throw FormatError(path + ": duplicate tensor '" + name + "'");
        }
    }

    auto take = [&](const std::string& name) -> Tensor {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw ConsistencyError(path + ": missing tensor '" + name + "'");
        }
        Tensor t = std::move(it->second);
        tensors.erase(it);
        return t;
    };

    ModelState m;
    int l = 0;
    while (tensors.count("layers." + std::to_string(l) + ".w")) {
        const std::string base = "layers." + std::to_string(l);
        Tensor w = take(base + ".w");
        if (w.dims.size() != 2) {
            throw ConsistencyError(path + ": tensor '" + base + ".w' must be rank 2");
        }
        Tensor b = take(base + ".b");
        check_dims(path, base + ".b", b, {w.dims[0]});
        Tensor vw = take("momentum." + base + ".w");
        check_dims(path, "momentum." + base + ".w", vw, w.dims);
        Tensor vb = take("momentum." + base + ".b");
        check_dims(path, "momentum." + base + ".b", vb, b.dims);

        LinearLayer layer, vel;
        layer.w = Matrix(static_cast<int>(w.dims[0]), static_cast<int>(w.dims[1]));
        layer.w.data = std::move(w.data);
        layer.b = Matrix(1, static_cast<int>(b.dims[0]));
        layer.b.data = std::move(b.data);
        vel.w = Matrix(layer.w.rows, layer.w.cols);
        vel.w.data = std::move(vw.data);
        vel.b = Matrix(1, layer.b.cols);
        vel.b.data = std::move(vb.data);
        m.layers.push_back(std::move(layer));
        m.layer_vel.push_back(std::move(vel));
        ++l;
    }
    if (m.layers.empty()) {
        throw ConsistencyError(path + ": no 'layers.0.w' tensor found");
    }

    Tensor hw = take("head.w");
    if (hw.dims.size() != 2) {
        throw ConsistencyError(path + ": tensor 'head.w' must be rank 2");
    }
    Tensor hv = take("momentum.head.w");
    check_dims(path, "momentum.head.w", hv, hw.dims);
    m.head_w = Matrix(static_cast<int>(hw.dims[0]), static_cast<int>(hw.dims[1]));
    m.head_w.data = std::move(hw.data);
    m.head_vel = Matrix(m.head_w.rows, m.head_w.cols);
    m.head_vel.data = std::move(hv.data);

    Tensor kind = take("meta.head_kind");
    check_dims(path, "meta.head_kind", kind, {1});
    Tensor seed = take("meta.rng_seed");
    check_dims(path, "meta.rng_seed", seed, {2});
    m.rng_seed = static_cast<std::uint64_t>(seed.data[0]) |
                 (static_cast<std::uint64_t>(seed.data[1]) << 32);

    if (!tensors.empty()) {
        throw ConsistencyError(path + ": unexpected tensor '" +
                               tensors.begin()->first + "'");
    }

    m.config.input_dim = m.layers.front().w.cols;
    for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) {
        m.config.hidden_dims.push_back(m.layers[i].w.rows);
    }
    m.config.feature_dim = m.layers.back().w.rows;
    m.config.num_classes = m.head_w.cols;
    m.config.head = (kind.data[0] == 1.0) ? HeadKind::Linear : HeadKind::Cosine;
    if (m.head_w.rows != m.config.feature_dim) {
        throw ConsistencyError(path + ": head.w rows " + std::to_string(m.head_w.rows) +
                               " do not match feature dim " +
                               std::to_string(m.config.feature_dim));
    }
    for (std::size_t i = 1; i < m.layers.size(); ++i) {
        if (m.layers[i].w.cols != m.layers[i - 1].w.rows) {
            throw ConsistencyError(path + ": layers." + std::to_string(i) +
                                   ".w input dim does not chain");
        }
    }
    m.config.validate();
    return m;
}

} // namespace amlfs
