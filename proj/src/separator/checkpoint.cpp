#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "qsep/error.h"
#include "qsep/separator.h"

// Checkpoint layout (little-endian):
//   bytes 0..7   magic "QSEPCKP1"
//   bytes 8..11  uint32 JSON header length H
//   bytes 12..   H bytes of JSON: {"version", "config", "tensors":[{name, shape}]}
//   then the tensors' float64 data, concatenated in listed order.
namespace qsep {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'Q', 'S', 'E', 'P', 'C', 'K', 'P', '1'};
constexpr int kVersion = 1;

json config_to_json(const ModelConfig& c) {
    return json{
        {"unet",
         {{"levels", c.unet.levels},
          {"base_channels", c.unet.base_channels},
          {"out_channels", c.unet.out_channels},
          {"kernel_size", c.unet.kernel_size},
          {"leaky_slope", c.unet.leaky_slope}}},
        {"embed_dim", c.embed_dim},
        {"stft",
         {{"window_size", c.stft.window_size},
          {"hop_size", c.stft.hop_size},
          {"window", c.stft.window == WindowKind::Hann ? "hann" : "rect"},
          {"log_epsilon", c.stft.log_epsilon}}},
        {"warp_enabled", c.warp_enabled},
        {"warp_bins", c.warp_bins},
    };
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    const auto& u = j.at("unet");
    c.unet.levels = u.at("levels").get<int>();
    c.unet.base_channels = u.at("base_channels").get<int>();
    c.unet.out_channels = u.at("out_channels").get<int>();
    c.unet.kernel_size = u.at("kernel_size").get<int>();
    c.unet.leaky_slope = u.at("leaky_slope").get<double>();
    c.embed_dim = j.at("embed_dim").get<int>();
    const auto& s = j.at("stft");
    c.stft.window_size = s.at("window_size").get<int>();
    c.stft.hop_size = s.at("hop_size").get<int>();
    const std::string win = s.at("window").get<std::string>();
    if (win == "hann")
        c.stft.window = WindowKind::Hann;
    else if (win == "rect")
        c.stft.window = WindowKind::Rect;
    else
        throw_io("checkpoint: unknown window kind '" + win + "'");
    c.stft.log_epsilon = s.at("log_epsilon").get<double>();
    c.warp_enabled = j.at("warp_enabled").get<bool>();
    c.warp_bins = j.at("warp_bins").get<int>();
    return c;
}

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    const std::vector<double>* data = nullptr; // save side
    std::vector<double>* dest = nullptr;       // load side
};

std::vector<int> conv_weight_shape(const ConvLayer& c) {
    return {c.out_ch, c.in_ch, c.kernel, c.kernel};
}

// Every tensor in a fixed, documented order. Works for both directions:
// const_cast is confined here and guarded by which pointer the caller uses.
std::vector<TensorRef> tensor_list(ModelParams& p) {
    std::vector<TensorRef> list;
    auto add = [&list](const std::string& name, std::vector<int> shape, std::vector<double>& v) {
        list.push_back(TensorRef{name, std::move(shape), &v, &v});
    };
    for (size_t l = 0; l < p.enc.size(); ++l) {
        add("enc" + std::to_string(l) + ".weight", conv_weight_shape(p.enc[l]), p.enc[l].weights);
        add("enc" + std::to_string(l) + ".bias", {p.enc[l].out_ch}, p.enc[l].bias);
    }
    for (size_t l = 0; l < p.dec.size(); ++l) {
        add("dec" + std::to_string(l) + ".weight", conv_weight_shape(p.dec[l]), p.dec[l].weights);
        add("dec" + std::to_string(l) + ".bias", {p.dec[l].out_ch}, p.dec[l].bias);
    }
    add("out.weight", conv_weight_shape(p.out_conv), p.out_conv.weights);
    add("out.bias", {p.out_conv.out_ch}, p.out_conv.bias);
    add("embed.weight", {p.config.unet.out_channels, p.config.embed_dim}, p.embed_weight);
    add("embed.bias", {p.config.unet.out_channels}, p.embed_bias);
    add("channel_scale", {p.config.unet.out_channels}, p.channel_scale);
    return list;
}

size_t shape_elems(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    ModelParams& p = const_cast<ModelParams&>(params);
    auto tensors = tensor_list(p);

    json header;
    header["version"] = kVersion;
    header["config"] = config_to_json(params.config);
    header["tensors"] = json::array();
    for (const auto& t : tensors)
        header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
    header["tensors"].push_back({{"name", "mask_bias"}, {"shape", json::array({1})}});
    const std::string head = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_io("cannot open " + tmp + " for writing");
        out.write(kMagic, 8);
        const uint32_t len = uint32_t(head.size());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out.write(head.data(), std::streamsize(head.size()));
        for (const auto& t : tensors)
            out.write(reinterpret_cast<const char*>(t.data->data()),
                      std::streamsize(t.data->size() * 8));
        out.write(reinterpret_cast<const char*>(&params.mask_bias), 8);
        if (!out) throw_io("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("cannot move checkpoint into place: " + ec.message());
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw_io(path + ": not a checkpoint file");
    uint32_t head_len = 0;
    std::memcpy(&head_len, buf.data() + 8, 4);
    if (12 + size_t(head_len) > buf.size()) throw_io(path + ": truncated header");

    json header;
    try {
        header = json::parse(buf.substr(12, head_len));
    } catch (const json::exception& e) {
        throw_io(path + ": malformed header: " + e.what());
    }

    ModelParams params;
    try {
        if (header.at("version").get<int>() != kVersion)
            throw_io(path + ": unsupported checkpoint version");
        params = init_params(config_from_json(header.at("config")), 0);

        auto tensors = tensor_list(params);
        const auto& listed = header.at("tensors");
        if (listed.size() != tensors.size() + 1) throw_io(path + ": unexpected tensor count");

        size_t off = 12 + head_len;
        for (size_t i = 0; i < tensors.size(); ++i) {
            const auto& meta = listed[i];
            if (meta.at("name").get<std::string>() != tensors[i].name ||
                meta.at("shape").get<std::vector<int>>() != tensors[i].shape)
                throw_io(path + ": tensor '" + tensors[i].name +
                         "' missing or shaped differently than the config implies");
            const size_t bytes = shape_elems(tensors[i].shape) * 8;
            if (off + bytes > buf.size()) throw_io(path + ": truncated tensor data");
            std::memcpy(tensors[i].dest->data(), buf.data() + off, bytes);
            off += bytes;
        }
        if (listed.back().at("name").get<std::string>() != "mask_bias")
            throw_io(path + ": mask_bias entry missing");
        if (off + 8 > buf.size()) throw_io(path + ": truncated tensor data");
        std::memcpy(&params.mask_bias, buf.data() + off, 8);
        off += 8;
        if (off != buf.size()) throw_io(path + ": trailing bytes after tensor data");
    } catch (const json::exception& e) {
        throw_io(path + ": malformed header: " + e.what());
    }
    return params;
}

} // namespace qsep
