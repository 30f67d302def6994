#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amlfs/matrix.hpp"

namespace amlfs {

struct DatasetSplit {
    Matrix train_x;
    std::vector<int> train_y;
    Matrix val_x;
    std::vector<int> val_y;
    int num_classes = 0;
    std::string provenance;

    void validate() const;
};

// Gaussian blobs around class centers drawn uniformly-ish on the unit sphere
// (normalized gaussians). Exactly floor(per_class*4/5) train samples per
// class; the rest go to validation.
DatasetSplit make_blobs(int num_classes, int per_class, int dim, double spread,
                        std::uint64_t seed);

// CSV with a required header row. Every column except label_column is a
// numeric feature. Label strings map to dense ids in lexicographic order.
// The split is stratified per class with a seeded shuffle.
DatasetSplit load_csv(const std::string& path, const std::string& label_column,
                      double val_fraction, std::uint64_t seed);

// IDX image/label pair (the MNIST container format). Pixels scale to [0, 1].
DatasetSplit load_idx(const std::string& images_path, const std::string& labels_path,
                      double val_fraction, std::uint64_t seed);

// Flips each train label with probability ratio to a different class chosen
// uniformly. Validation labels stay clean. Returns a new split with the
// noise step appended to its provenance.
DatasetSplit corrupt_labels(const DatasetSplit& split, double ratio,
                            std::uint64_t seed);

} // namespace amlfs
