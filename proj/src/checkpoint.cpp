#include <bit>
#include <cstdio>

#include "rapnet/network.hpp"

namespace rapnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void save_checkpoint(RapNetParams<float>& params, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot open checkpoint for writing: " + tmp);
        os.write("RAPN", 4);
        detail::put_u16(os, kCheckpointVersion);
        detail::put_u32(os, static_cast<std::uint32_t>(params.hyper.bands));
        detail::put_u32(os, static_cast<std::uint32_t>(params.hyper.features));
        detail::put_u32(os, static_cast<std::uint32_t>(params.hyper.ratio));
        detail::put_u32(os, static_cast<std::uint32_t>(params.hyper.hidden()));
        detail::put_u32(os, params.hyper.ablate_rapconv ? 1u : 0u);
        params.for_each_param([&](const std::string&, Tensor<float>& t) {
            detail::put_u32(os, static_cast<std::uint32_t>(t.n));
            detail::put_u32(os, static_cast<std::uint32_t>(t.c));
            detail::put_u32(os, static_cast<std::uint32_t>(t.h));
            detail::put_u32(os, static_cast<std::uint32_t>(t.w));
            os.write(reinterpret_cast<const char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        });
        if (!os) throw IoError("short write to checkpoint: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

RapNetParams<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RAPN", 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    const std::uint16_t version = detail::get_u16(is);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    Hyper hy;
    hy.bands = static_cast<int>(detail::get_u32(is));
    hy.features = static_cast<int>(detail::get_u32(is));
    hy.ratio = static_cast<int>(detail::get_u32(is));
    hy.ghbm_hidden = static_cast<int>(detail::get_u32(is));
    hy.ablate_rapconv = detail::get_u32(is) != 0;
    hy.validate();
    // seed value is irrelevant here: every tensor is overwritten below
    RapNetParams<float> params = RapNetParams<float>::init(hy, 1);
    bool ok = true;
    params.for_each_param([&](const std::string&, Tensor<float>& t) {
        const int n = static_cast<int>(detail::get_u32(is));
        const int c = static_cast<int>(detail::get_u32(is));
        const int h = static_cast<int>(detail::get_u32(is));
        const int w = static_cast<int>(detail::get_u32(is));
        if (!is || n != t.n || c != t.c || h != t.h || w != t.w) {
            ok = false;
            return;
        }
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!is) ok = false;
    });
    if (!ok) throw IoError("checkpoint " + path + " is truncated or shape-inconsistent");
    return params;
}

}  // namespace rapnet
