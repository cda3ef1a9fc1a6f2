#include "styleset/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace styleset {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("SATN: truncated stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("SATN: truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_satn(std::ostream& out, const Tensor& t) {
    out.write("SATN", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims()) put_u64(out, d);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(t[i]));
    }
}

Tensor read_satn(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "SATN", 4) != 0) {
        throw std::runtime_error("SATN: bad magic");
    }
    const std::uint32_t version = get_u32(in);
    if (version != 1) throw std::runtime_error("SATN: unsupported version");
    const std::uint32_t ndim = get_u32(in);
    std::vector<std::size_t> dims(ndim);
    std::size_t numel = ndim == 0 ? 0 : 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        dims[i] = static_cast<std::size_t>(get_u64(in));
        numel *= dims[i];
    }
    std::vector<float> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        data[i] = std::bit_cast<float>(get_u32(in));
    }
    return Tensor(std::move(dims), std::move(data));
}

void save_satn(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    write_satn(out, t);
    if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor load_satn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return read_satn(in);
}

void save_sawt(const std::string& path, const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write("SAWT", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_satn(out, tensor);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

NamedTensors load_sawt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "SAWT", 4) != 0) {
        throw std::runtime_error("SAWT: bad magic");
    }
    const std::uint32_t version = get_u32(in);
    if (version != 1) throw std::runtime_error("SAWT: unsupported version");
    const std::uint32_t count = get_u32(in);
    NamedTensors tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = get_u32(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw std::runtime_error("SAWT: truncated name");
        tensors.emplace_back(std::move(name), read_satn(in));
    }
    return tensors;
}

void save_trajectory(const std::string& path, const std::vector<Tensor>& states) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    std::ostringstream index;
    for (std::size_t t = 0; t < states.size(); ++t) {
        index << t << " " << out.tellp() << "\n";
        write_satn(out, states[t]);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
    std::ofstream idx(path + ".idx");
    if (!idx) throw std::runtime_error("cannot open for write: " + path + ".idx");
    idx << index.str();
}

std::vector<Tensor> load_trajectory(const std::string& path) {
    std::ifstream idx(path + ".idx");
    if (!idx) throw std::runtime_error("cannot open: " + path + ".idx");
    std::vector<std::pair<std::size_t, std::uint64_t>> entries;
    std::size_t t = 0;
    std::uint64_t offset = 0;
    while (idx >> t >> offset) entries.emplace_back(t, offset);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<Tensor> states(entries.size());
    for (const auto& [step, off] : entries) {
        if (step >= states.size()) throw std::runtime_error("trajectory index out of range");
        in.seekg(static_cast<std::streamoff>(off));
        states[step] = read_satn(in);
    }
    return states;
}

}  // namespace styleset
