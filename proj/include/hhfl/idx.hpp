#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hhfl/dataset.hpp"
#include "hhfl/errors.hpp"

namespace hhfl {

/// Raw IDX array (the MNIST container format): big-endian magic + dims,
/// unsigned byte payload.
struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

namespace detail {
inline std::uint32_t read_be32(std::istream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw InvalidConfig("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8),
                               std::uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
}  // namespace detail

inline IdxArray read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidConfig("idx: cannot open " + path);
    const std::uint32_t magic = detail::read_be32(in);
    if ((magic & 0xFFFFFF00u) != 0x00000800u)
        throw InvalidConfig("idx: bad magic in " + path + " (only ubyte files supported)");
    const int ndims = static_cast<int>(magic & 0xFFu);
    IdxArray arr;
    std::size_t total = 1;
    for (int d = 0; d < ndims; ++d) {
        arr.dims.push_back(detail::read_be32(in));
        total *= arr.dims.back();
    }
    arr.data.resize(total);
    in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(total));
    if (!in) throw InvalidConfig("idx: truncated payload in " + path);
    return arr;
}

inline void write_idx(const std::string& path, const IdxArray& arr) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidConfig("idx: cannot write " + path);
    detail::write_be32(out, 0x00000800u | static_cast<std::uint32_t>(arr.dims.size()));
    std::size_t total = 1;
    for (std::uint32_t d : arr.dims) {
        detail::write_be32(out, d);
        total *= d;
    }
    if (total != arr.data.size()) throw InvalidConfig("idx: dims do not match payload size");
    out.write(reinterpret_cast<const char*>(arr.data.data()),
              static_cast<std::streamsize>(arr.data.size()));
}

/// Loads an MNIST-style image/label file pair. Pixels are scaled to [0, 1].
/// If max_samples > 0, keeps a stratified prefix: samples are taken in file
/// order, capped per class at ceil(max_samples / 10).
inline LabeledDataset load_mnist_idx(const std::string& images_path,
                                     const std::string& labels_path, int max_samples = -1) {
    const IdxArray images = read_idx(images_path);
    const IdxArray labels = read_idx(labels_path);
    if (images.dims.size() != 3) throw InvalidConfig("idx: image file must have 3 dims");
    if (labels.dims.size() != 1) throw InvalidConfig("idx: label file must have 1 dim");
    if (images.dims[0] != labels.dims[0])
        throw InvalidConfig("idx: image/label sample counts differ");

    const int n = static_cast<int>(images.dims[0]);
    const int dim = static_cast<int>(images.dims[1] * images.dims[2]);
    constexpr int kClasses = 10;

    std::vector<int> keep;
    if (max_samples > 0 && max_samples < n) {
        const int cap = (max_samples + kClasses - 1) / kClasses;
        std::vector<int> taken(kClasses, 0);
        for (int i = 0; i < n && static_cast<int>(keep.size()) < max_samples; ++i) {
            const int y = labels.data[i];
            if (y < 0 || y >= kClasses) throw InvalidConfig("idx: label out of range");
            if (taken[y] < cap) {
                ++taken[y];
                keep.push_back(i);
            }
        }
    } else {
        keep.resize(n);
        for (int i = 0; i < n; ++i) keep[i] = i;
    }

    LabeledDataset data;
    data.num_classes = kClasses;
    data.feature_dim = dim;
    data.features.reserve(keep.size() * static_cast<std::size_t>(dim));
    data.labels.reserve(keep.size());
    for (int i : keep) {
        data.labels.push_back(labels.data[i]);
        const std::uint8_t* px = images.data.data() + static_cast<std::size_t>(i) * dim;
        for (int d = 0; d < dim; ++d) data.features.push_back(px[d] / 255.0);
    }
    return data;
}

}  // namespace hhfl
