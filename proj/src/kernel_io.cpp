#include "spv/kernel_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spv/error.hpp"

namespace spv::kernel_io {
namespace {

static_assert(std::endian::native == std::endian::little, "SPVK IO assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'P', 'V', 'K'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    template <typename T>
    T get(const char* what) {
        if (bytes_.size() - pos_ < sizeof(T)) throw ValidationError(std::string("SPVK truncated while reading ") + what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const KernelFile& f) {
    Writer w;
    for (char c : kMagic) w.put(static_cast<std::uint8_t>(c));
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(f.kernels.size()));
    w.put<std::uint32_t>(f.grid_width);
    w.put<std::uint32_t>(f.grid_height);
    w.put<double>(f.window.az_min);
    w.put<double>(f.window.az_max);
    w.put<double>(f.window.el_min);
    w.put<double>(f.window.el_max);
    w.put<double>(f.params.rho_um);
    w.put<double>(f.params.lambda_um);
    w.put<std::uint32_t>(0);
    for (const auto& k : f.kernels) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(k.entries.size()));
        for (const auto& e : k.entries) {
            w.put<std::uint32_t>(e.pixel);
            w.put<float>(e.weight);
        }
    }
    return std::move(w.bytes);
}

KernelFile decode(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>("magic"));
    if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("SPVK bad magic");
    if (const auto version = r.get<std::uint32_t>("version"); version != kVersion)
        throw ValidationError("SPVK unsupported version " + std::to_string(version));
    KernelFile f;
    const auto n = r.get<std::uint32_t>("n_electrodes");
    f.grid_width = r.get<std::uint32_t>("grid_w");
    f.grid_height = r.get<std::uint32_t>("grid_h");
    f.window.az_min = r.get<double>("az_min");
    f.window.az_max = r.get<double>("az_max");
    f.window.el_min = r.get<double>("el_min");
    f.window.el_max = r.get<double>("el_max");
    f.params.rho_um = r.get<double>("rho_um");
    f.params.lambda_um = r.get<double>("lambda_um");
    (void)r.get<std::uint32_t>("reserved");

    if (n == 0) throw ValidationError("SPVK n_electrodes must be >= 1");
    if (f.grid_width < 2 || f.grid_height < 2) throw ValidationError("SPVK grid must be at least 2x2");
    const auto& win = f.window;
    if (!std::isfinite(win.az_min) || !std::isfinite(win.az_max) || !std::isfinite(win.el_min) ||
        !std::isfinite(win.el_max) || !(win.az_min < win.az_max) || !(win.el_min < win.el_max))
        throw ValidationError("SPVK field window must be finite and non-empty");
    if (!(f.params.rho_um > 0.0) || !std::isfinite(f.params.rho_um)) throw ValidationError("SPVK rho must be positive");
    if (!(f.params.lambda_um > 0.0) || !std::isfinite(f.params.lambda_um))
        throw ValidationError("SPVK lambda must be positive");

    const std::size_t n_pixels = static_cast<std::size_t>(f.grid_width) * f.grid_height;
    f.kernels.resize(n);
    for (std::uint32_t e = 0; e < n; ++e) {
        auto& k = f.kernels[e];
        k.electrode = e;
        const auto count = r.get<std::uint32_t>("n_entries");
        if (static_cast<std::size_t>(count) * 8 > r.remaining())
            throw ValidationError("SPVK truncated in kernel " + std::to_string(e));
        k.entries.resize(count);
        for (auto& entry : k.entries) {
            entry.pixel = r.get<std::uint32_t>("pixel_index");
            entry.weight = r.get<float>("weight");
        }
        percept::validate_kernel(k, n_pixels);
    }
    if (r.remaining() != 0) throw ValidationError("SPVK has trailing bytes");
    return f;
}

KernelFile from_set(const percept::KernelSet& ks) {
    KernelFile f;
    f.grid_width = static_cast<std::uint32_t>(ks.grid().width());
    f.grid_height = static_cast<std::uint32_t>(ks.grid().height());
    f.window = ks.grid().window();
    f.params = ks.params();
    f.kernels = ks.kernels();
    return f;
}

percept::KernelSet to_set(KernelFile file, implant::ElectrodeArray array) {
    if (file.kernels.size() != array.size())
        throw ValidationError("SPVK has " + std::to_string(file.kernels.size()) + " kernels but device '" +
                              array.spec.name + "' has " + std::to_string(array.size()) + " electrodes");
    percept::RenderGrid grid(static_cast<int>(file.grid_width), static_cast<int>(file.grid_height), file.window);
    return percept::KernelSet(std::move(file.kernels), file.params, std::move(grid), std::move(array));
}

void write_file(const std::string& path, const percept::KernelSet& ks) {
    const auto bytes = encode(from_set(ks));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

KernelFile read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace spv::kernel_io
