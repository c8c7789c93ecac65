#pragma once

// Parameter checkpoint (".cvae"), little-endian:
//   "CVAE" | u16 version | u32 latent_dim | u8 modality count
//   per modality: u8 modality_id | u8 layer count
//     per layer: u32 rows | u32 cols | rows*cols f64 weights | rows f64 bias
// Encoder layers precede decoder layers. The boundary is the single place where
// the layer chain breaks: a layer with 2*latent_dim outputs followed by one that
// takes latent_dim inputs.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cadavae/binary_io.hpp"
#include "cadavae/vae.hpp"

namespace cadavae {

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> serialize_checkpoint(const std::vector<ModalityVAE>& vaes) {
    if (vaes.empty()) throw ContractError("checkpoint: no VAEs to save");
    if (vaes.size() > 255) throw ContractError("checkpoint: too many modalities");
    const std::size_t latent = vaes.front().latent_dim();
    io::ByteWriter w;
    w.put_bytes("CVAE");
    w.put<std::uint16_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(latent));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(vaes.size()));
    for (const auto& vae : vaes) {
        vae.validate();
        if (vae.latent_dim() != latent) throw DimensionError("checkpoint: VAEs disagree on latent size");
        const std::size_t n_layers = vae.encoder.layers.size() + vae.decoder.layers.size();
        if (n_layers > 255) throw ContractError("checkpoint: too many layers");
        w.put<std::uint8_t>(static_cast<std::uint8_t>(vae.modality));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(n_layers));
        for (const MlpParams* net : {&vae.encoder, &vae.decoder}) {
            for (const auto& layer : net->layers) {
                w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.out_dim()));
                w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.in_dim()));
                for (double v : layer.weight.values()) w.put<double>(v);
                for (double v : layer.bias) w.put<double>(v);
            }
        }
    }
    return w.take();
}

inline std::vector<ModalityVAE> parse_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    if (r.get_string(4, "magic") != "CVAE") throw FormatError("checkpoint: bad magic", 0);
    const auto version = r.get<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), r.offset() - 2);
    const std::size_t latent = r.get<std::uint32_t>("latent_dim");
    if (latent == 0) throw FormatError("checkpoint: latent_dim is zero", r.offset() - 4);
    const std::size_t n_mod = r.get<std::uint8_t>("modality count");
    if (n_mod == 0) throw FormatError("checkpoint: no modalities", r.offset() - 1);

    std::vector<ModalityVAE> vaes;
    for (std::size_t m = 0; m < n_mod; ++m) {
        const std::size_t mod_offset = r.offset();
        const auto id = r.get<std::uint8_t>("modality_id");
        if (!is_known_modality(id)) throw FormatError("checkpoint: unknown modality id", mod_offset);
        const std::size_t n_layers = r.get<std::uint8_t>("layer count");
        std::vector<AffineLayer> layers;
        for (std::size_t k = 0; k < n_layers; ++k) {
            const std::size_t rows = r.get<std::uint32_t>("layer rows");
            const std::size_t cols = r.get<std::uint32_t>("layer cols");
            if (rows == 0 || cols == 0) throw FormatError("checkpoint: empty layer", r.offset() - 8);
            r.require((rows * cols + rows) * sizeof(double), "layer values");
            AffineLayer layer = AffineLayer::zeros(rows, cols);
            for (double& v : layer.weight.values()) v = r.get<double>("weight");
            for (double& v : layer.bias) v = r.get<double>("bias");
            layers.push_back(std::move(layer));
        }
        std::size_t split = layers.size();
        for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
            if (layers[k + 1].in_dim() != layers[k].out_dim()) {
                if (split != layers.size() || layers[k].out_dim() != 2 * latent || layers[k + 1].in_dim() != latent)
                    throw FormatError("checkpoint: layers do not form an encoder/decoder pair", mod_offset);
                split = k + 1;
            }
        }
        if (split == layers.size())
            throw FormatError("checkpoint: cannot locate encoder/decoder boundary", mod_offset);
        ModalityVAE vae;
        vae.modality = static_cast<Modality>(id);
        vae.encoder.layers.assign(std::make_move_iterator(layers.begin()),
                                  std::make_move_iterator(layers.begin() + static_cast<std::ptrdiff_t>(split)));
        vae.decoder.layers.assign(std::make_move_iterator(layers.begin() + static_cast<std::ptrdiff_t>(split)),
                                  std::make_move_iterator(layers.end()));
        try {
            vae.validate();
        } catch (const DimensionError& e) {
            throw FormatError(std::string("checkpoint: ") + e.what(), mod_offset);
        }
        vaes.push_back(std::move(vae));
    }
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes", r.offset());
    return vaes;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<ModalityVAE>& vaes) {
    io::write_file(path, serialize_checkpoint(vaes));
}

inline std::vector<ModalityVAE> load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(io::read_file(path));
}

}  // namespace cadavae
