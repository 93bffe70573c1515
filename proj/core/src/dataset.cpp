#include "dat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dat/errors.hpp"
#include "dat/rng.hpp"

namespace dat {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError(ParseError::Kind::Truncated, "cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
    if (offset + 4 > buf.size())
        throw ParseError(ParseError::Kind::Truncated, path + ": truncated header");
    return (std::uint32_t(buf[offset]) << 24) | (std::uint32_t(buf[offset + 1]) << 16) |
           (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto ibuf = read_file(images_path);
    const std::uint32_t imagic = read_be32(ibuf, 0, images_path);
    if (imagic != kImageMagic)
        throw ParseError(ParseError::Kind::BadMagic,
                         images_path + ": image file magic " + hex32(imagic) + ", expected " + hex32(kImageMagic));
    const std::uint32_t count = read_be32(ibuf, 4, images_path);
    const std::uint32_t rows = read_be32(ibuf, 8, images_path);
    const std::uint32_t cols = read_be32(ibuf, 12, images_path);
    const std::size_t pixels = std::size_t(rows) * cols;
    if (16 + std::size_t(count) * pixels > ibuf.size())
        throw ParseError(ParseError::Kind::Truncated,
                         images_path + ": payload holds fewer than " + std::to_string(count) + " images");

    const auto lbuf = read_file(labels_path);
    const std::uint32_t lmagic = read_be32(lbuf, 0, labels_path);
    if (lmagic != kLabelMagic)
        throw ParseError(ParseError::Kind::BadMagic,
                         labels_path + ": label file magic " + hex32(lmagic) + ", expected " + hex32(kLabelMagic));
    const std::uint32_t lcount = read_be32(lbuf, 4, labels_path);
    if (8 + std::size_t(lcount) > lbuf.size())
        throw ParseError(ParseError::Kind::Truncated,
                         labels_path + ": payload holds fewer than " + std::to_string(lcount) + " labels");
    if (count != lcount)
        throw ParseError(ParseError::Kind::CountMismatch,
                         "image count " + std::to_string(count) + " does not match label count " +
                             std::to_string(lcount));

    Dataset ds;
    ds.name = images_path;
    ds.image_shape = {rows, cols};
    ds.inputs.reserve(count);
    ds.labels.reserve(count);
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v(pixels);
        const unsigned char* src = ibuf.data() + 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) v[p] = src[p] / 255.0;
        ds.inputs.push_back(Tensor::unchecked({pixels}, std::move(v)));
        const int label = lbuf[8 + i];
        ds.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    ds.num_classes = count == 0 ? 0 : static_cast<std::size_t>(max_label) + 1;
    return ds;
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t rng_seed) {
    if (n > ds.size())
        throw ContractViolation("subset: requested " + std::to_string(n) + " of " +
                                std::to_string(ds.size()) + " records");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(rng_seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    Dataset out;
    out.name = ds.name + "/subset" + std::to_string(n);
    out.num_classes = ds.num_classes;
    out.image_shape = ds.image_shape;
    out.inputs.reserve(n);
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.inputs.push_back(ds.inputs[idx[i]]);
        out.labels.push_back(ds.labels[idx[i]]);
    }
    return out;
}

SynthBlobs synth_blobs(std::size_t num_classes, std::size_t dim, std::size_t n_per_class,
                       double separation, std::uint64_t rng_seed) {
    if (!(separation > 0.0)) throw ContractViolation("synth_blobs: separation must be positive");
    if (dim == 0 || num_classes == 0) throw ContractViolation("synth_blobs: dim and num_classes must be positive");

    const double radius = 0.25;
    std::vector<std::vector<double>> centers(num_classes, std::vector<double>(dim, 0.5));
    if (dim == 1) {
        for (std::size_t c = 0; c < num_classes; ++c) {
            centers[c][0] = num_classes == 1
                                ? 0.5
                                : 0.25 + 0.5 * double(c) / double(num_classes - 1);
        }
    } else {
        for (std::size_t c = 0; c < num_classes; ++c) {
            const double theta = 2.0 * M_PI * double(c) / double(num_classes);
            centers[c][0] = 0.5 + radius * std::cos(theta);
            centers[c][1] = 0.5 + radius * std::sin(theta);
        }
    }

    double min_dist = radius;
    for (std::size_t a = 0; a < num_classes; ++a) {
        for (std::size_t b = a + 1; b < num_classes; ++b) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double d = centers[a][i] - centers[b][i];
                d2 += d * d;
            }
            min_dist = std::min(min_dist, std::sqrt(d2));
        }
    }
    const double sigma = min_dist / separation;

    Rng rng(rng_seed);
    auto sample_class = [&](const std::vector<double>& center) {
        std::vector<double> v(dim);
        for (std::size_t i = 0; i < dim; ++i)
            v[i] = std::clamp(center[i] + sigma * rng.normal(), 0.0, 1.0);
        return Tensor::unchecked({dim}, std::move(v));
    };

    SynthBlobs out;
    out.valid.name = "blobs-valid";
    out.invalid.name = "blobs-invalid";
    out.valid.num_classes = out.invalid.num_classes = num_classes;

    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t s = 0; s < n_per_class; ++s) {
            out.valid.inputs.push_back(sample_class(centers[c]));
            out.valid.labels.push_back(static_cast<int>(c));
        }
    }

    // Companion distribution: centers displaced by 3*separation sigmas in a
    // random direction, then clipped into the box like everything else.
    const double shift = 3.0 * separation * sigma;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> dir(dim);
        double norm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            dir[i] = rng.normal();
            norm += dir[i] * dir[i];
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        std::vector<double> shifted(dim);
        for (std::size_t i = 0; i < dim; ++i) shifted[i] = centers[c][i] + shift * dir[i] / norm;
        for (std::size_t s = 0; s < n_per_class; ++s) {
            out.invalid.inputs.push_back(sample_class(shifted));
            out.invalid.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

}  // namespace dat
