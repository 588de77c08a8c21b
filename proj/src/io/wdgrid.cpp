#include "wd/io/wdgrid.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "wd/errors.hpp"

namespace wd::io {

namespace {

constexpr char kMagic[4] = {'W', 'D', 'G', 'D'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    std::string data;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > data.size()) throw IoError(std::string("wdgrid: truncated ") + what);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
        pos += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0] | (p[1] << 8) | (p[2] << 16) |
                                          (static_cast<std::uint32_t>(p[3]) << 24));
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

void write_stack(const std::string& path, const FeatureStack& stack) {
    if (stack.layers.empty()) throw std::invalid_argument("write_stack: empty stack");
    if (stack.layers.size() > std::numeric_limits<std::uint16_t>::max())
        throw std::invalid_argument("write_stack: too many layers");

    std::string out;
    out.append(kMagic, 4);
    put_u16(out, kVersion);
    put_u16(out, static_cast<std::uint16_t>(stack.layers.size()));
    for (const auto& l : stack.layers) {
        put_u16(out, static_cast<std::uint16_t>(l.layer_id));
        put_u16(out, static_cast<std::uint16_t>(l.scale));
        put_u32(out, static_cast<std::uint32_t>(l.height));
        put_u32(out, static_cast<std::uint32_t>(l.width));
        put_u32(out, static_cast<std::uint32_t>(l.depth));
    }
    for (const auto& l : stack.layers)
        for (double v : l.values) put_f32(out, static_cast<float>(v));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("wdgrid: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("wdgrid: write failed: " + path);
}

FeatureStack read_stack(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("wdgrid: cannot open: " + path);
    Reader rd;
    rd.data.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    rd.need(4, "magic");
    if (std::memcmp(rd.data.data(), kMagic, 4) != 0) throw IoError("wdgrid: bad magic: " + path);
    rd.pos = 4;
    const std::uint16_t version = rd.u16("version");
    if (version != kVersion) throw IoError("wdgrid: unsupported version " + std::to_string(version));
    const std::uint16_t count = rd.u16("layer count");
    if (count == 0) throw IoError("wdgrid: no layers");

    FeatureStack stack;
    stack.layers.resize(count);
    for (auto& l : stack.layers) {
        l.layer_id = rd.u16("layer header");
        l.scale = rd.u16("layer header");
        l.height = static_cast<int>(rd.u32("layer header"));
        l.width = static_cast<int>(rd.u32("layer header"));
        l.depth = static_cast<int>(rd.u32("layer header"));
        if (l.scale <= 0 || l.height <= 0 || l.width <= 0 || l.depth <= 0)
            throw IoError("wdgrid: degenerate layer dims");
    }

    // Dims must be consistent with the scales: there must exist base dims
    // (H0, W0) with H_l = ceil(H0 / scale_l) for every layer. ceil inversion
    // gives per-layer intervals for H0; their intersection must be nonempty.
    {
        long long hlo = 1, hhi = std::numeric_limits<long long>::max();
        long long wlo = 1, whi = hhi;
        for (const auto& l : stack.layers) {
            if (l.layer_id == 0 && l.scale != 1) throw IoError("wdgrid: scale/dims mismatch");
            const long long s = l.scale;
            hlo = std::max(hlo, (static_cast<long long>(l.height) - 1) * s + 1);
            hhi = std::min(hhi, static_cast<long long>(l.height) * s);
            wlo = std::max(wlo, (static_cast<long long>(l.width) - 1) * s + 1);
            whi = std::min(whi, static_cast<long long>(l.width) * s);
        }
        if (hlo > hhi || wlo > whi) throw IoError("wdgrid: scale/dims mismatch");
    }

    for (auto& l : stack.layers) {
        const std::size_t n =
            static_cast<std::size_t>(l.height) * static_cast<std::size_t>(l.width) * l.depth;
        l.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) l.values[i] = static_cast<double>(rd.f32("payload"));
    }
    if (rd.pos != rd.data.size()) throw IoError("wdgrid: trailing bytes: " + path);
    return stack;
}

void write_single_grid(const std::string& path, const std::vector<double>& values, int rows, int cols) {
    if (values.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("write_single_grid: size mismatch");
    FeatureStack stack;
    FeatureLayer l;
    l.layer_id = 0;
    l.scale = 1;
    l.height = rows;
    l.width = cols;
    l.depth = 1;
    l.values = values;
    stack.layers.push_back(std::move(l));
    write_stack(path, stack);
}

std::vector<double> read_single_grid(const std::string& path, int& rows, int& cols) {
    FeatureStack stack = read_stack(path);
    if (stack.layers.size() != 1 || stack.layers[0].depth != 1)
        throw IoError("wdgrid: expected a single-layer grid with d=1: " + path);
    rows = stack.layers[0].height;
    cols = stack.layers[0].width;
    return std::move(stack.layers[0].values);
}

}  // namespace wd::io
