#include "robustq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace robustq {

namespace {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, std::uint16_t v) {
    put_u8(out, static_cast<std::uint8_t>(v & 0xFF));
    put_u8(out, static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) put_u8(out, static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16() {
        const std::uint16_t lo = u8();
        return static_cast<std::uint16_t>(lo | (std::uint16_t{u8()} << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
        return v;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string_view rest() {
        auto s = bytes_.substr(pos_);
        pos_ = bytes_.size();
        return s;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated data");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    return out;
}

}  // namespace

Tensor round_to_f32(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return true;
    }
    return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t.value;
    }
    throw std::out_of_range("checkpoint: no tensor named '" + name + "'");
}

void Checkpoint::set_tensor(const std::string& name, const Tensor& value) {
    for (auto& t : tensors) {
        if (t.name == name) {
            t.value = round_to_f32(value);
            return;
        }
    }
    tensors.push_back({name, round_to_f32(value)});
}

std::string Checkpoint::meta(const std::string& key, const std::string& fallback) const {
    auto it = metadata.find(key);
    return it == metadata.end() ? fallback : it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out = "RQCK";
    put_u16(out, Checkpoint::kVersion);
    for (const auto& [name, value] : ckpt.tensors) {
        if (name.empty() || name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: bad tensor name length");
        if (value.rank() == 0 || value.rank() > 0xFF) throw std::invalid_argument("checkpoint: bad rank for " + name);
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put_u8(out, 0);
        put_u8(out, static_cast<std::uint8_t>(value.rank()));
        for (auto d : value.shape()) {
            if (d > 0xFFFFFFFFu) throw std::invalid_argument("checkpoint: dimension too large in " + name);
            put_u32(out, static_cast<std::uint32_t>(d));
        }
        for (double v : value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    put_u16(out, 0);
    for (const auto& [k, v] : ckpt.metadata) {
        if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw std::invalid_argument("checkpoint: metadata entry '" + k + "' cannot be encoded");
        }
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(4) != "RQCK") throw std::runtime_error("checkpoint: bad magic");
    const auto version = r.u16();
    if (version != Checkpoint::kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    for (;;) {
        const auto name_len = r.u16();
        if (name_len == 0) break;
        std::string name(r.take(name_len));
        const auto dtype = r.u8();
        if (dtype != 0) throw std::runtime_error("checkpoint: unsupported dtype " + std::to_string(dtype) + " for " + name);
        const auto rank = r.u8();
        if (rank == 0) throw std::runtime_error("checkpoint: zero rank for " + name);
        Shape shape;
        for (int i = 0; i < rank; ++i) shape.push_back(r.u32());
        std::vector<double> data(shape_numel(shape));
        for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(r.u32()));
        ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    std::string text(r.rest());
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed metadata line '" + line + "'");
        ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

void store_model(Checkpoint& ckpt, const ModelSpec& spec, const ModelParams& params) {
    spec.validate();
    const auto names = parameter_names(spec);
    if (names.size() != params.tensors.size()) throw std::invalid_argument("store_model: parameter count mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) ckpt.set_tensor(names[i], params.tensors[i]);
    ckpt.metadata["model.arch"] = to_string(spec.arch);
    ckpt.metadata["model.widths"] = join_sizes(spec.widths);
    ckpt.metadata["model.classes"] = std::to_string(spec.classes);
    ckpt.metadata["model.image_size"] = std::to_string(spec.image_size);
    ckpt.metadata["satnl.kind"] = to_string(spec.satnl.kind);
    std::string enabled;
    for (const auto& l : spec.layers()) {
        if (!spec.satnl.enabled_for(l.name)) continue;
        if (!enabled.empty()) enabled += ',';
        enabled += l.name;
    }
    ckpt.metadata["satnl.layers"] = enabled;
}

ModelSpec load_model_spec(const Checkpoint& ckpt) {
    ModelSpec spec;
    spec.arch = parse_architecture(ckpt.meta("model.arch", "mlp"));
    spec.widths = split_sizes(ckpt.meta("model.widths"));
    spec.classes = static_cast<std::size_t>(std::stoull(ckpt.meta("model.classes", "0")));
    spec.image_size = static_cast<std::size_t>(std::stoull(ckpt.meta("model.image_size", "12")));
    spec.satnl.kind = parse_satnl_kind(ckpt.meta("satnl.kind", "tanh"));
    std::stringstream ss(ckpt.meta("satnl.layers"));
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) spec.satnl.layers[item] = true;
    }
    spec.validate();
    return spec;
}

ModelParams load_model_params(const Checkpoint& ckpt, const ModelSpec& spec) {
    ModelParams p;
    const auto layers = spec.layers();
    const auto names = parameter_names(spec);
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Tensor& t = ckpt.tensor(names[i]);
        const Shape expected = i % 2 == 0 ? layers[i / 2].weight_shape : Shape{layers[i / 2].weight_shape[0]};
        if (t.shape() != expected) {
            throw std::runtime_error("checkpoint: tensor " + names[i] + " has shape " + shape_to_string(t.shape()) +
                                     ", expected " + shape_to_string(expected));
        }
        p.tensors.push_back(t);
    }
    return p;
}

}  // namespace robustq
