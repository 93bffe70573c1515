#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dat/tensor.hpp"

namespace dat {

// Labeled inputs with values in [0,1]. Image tensors are stored flat.
struct Dataset {
    std::string name;
    std::size_t num_classes = 0;
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    // Row/column extent of the source images, when known (IDX loads).
    std::vector<std::size_t> image_shape;

    std::size_t size() const { return inputs.size(); }
};

// Parses an IDX image/label file pair (the MNIST-family container format).
// Pixels are u8 divided by 255. Distinct parse errors: bad magic, truncated
// payload, image/label count mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Uniform sample of n records without replacement, reproducible by seed.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t rng_seed);

struct SynthBlobs {
    Dataset valid;
    Dataset invalid;  // same blob layout with centers shifted off-distribution
};

// Gaussian class blobs clipped to [0,1]^dim. `separation` is the distance
// between class centers in blob-sigma units; the invalid companion shifts
// every center by 3*separation sigmas.
SynthBlobs synth_blobs(std::size_t num_classes, std::size_t dim, std::size_t n_per_class,
                       double separation, std::uint64_t rng_seed);

}  // namespace dat
