#include "amlfs/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "amlfs/errors.hpp"
#include "amlfs/rng.hpp"

namespace amlfs {
namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

void check_val_fraction(double vf) {
    if (!(vf > 0.0 && vf < 1.0)) {
        throw DomainError("val_fraction must be in (0, 1), got " + format_double(vf));
    }
}

// Stratified split of row indices: per class (in label order) the rows are
// shuffled with the shared rng and the first n_val go to validation. Every
// class keeps at least one training row.
struct SplitIndices {
    std::vector<int> train;
    std::vector<int> val;
};

SplitIndices stratified_split(const std::vector<int>& labels, int num_classes,
                              double val_fraction, Rng& rng) {
    std::vector<std::vector<int>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(static_cast<int>(i));
    }
    SplitIndices out;
    for (int c = 0; c < num_classes; ++c) {
        auto& idx = by_class[c];
        const int n = static_cast<int>(idx.size());
        if (n == 0) continue;
        for (int i = n - 1; i >= 1; --i) {
            std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
        }
        int n_val = static_cast<int>(std::lround(val_fraction * n));
        n_val = std::clamp(n_val, 0, n - 1);
        for (int i = 0; i < n; ++i) {
            (i < n_val ? out.val : out.train).push_back(idx[i]);
        }
    }
    return out;
}

DatasetSplit assemble(const Matrix& x, const std::vector<int>& y, int num_classes,
                      const SplitIndices& idx, std::string provenance) {
    DatasetSplit s;
    s.num_classes = num_classes;
    s.provenance = std::move(provenance);
    s.train_x = Matrix(static_cast<int>(idx.train.size()), x.cols);
    s.val_x = Matrix(static_cast<int>(idx.val.size()), x.cols);
    for (std::size_t i = 0; i < idx.train.size(); ++i) {
        std::copy(x.row(idx.train[i]), x.row(idx.train[i]) + x.cols,
                  s.train_x.row(static_cast<int>(i)));
        s.train_y.push_back(y[idx.train[i]]);
    }
    for (std::size_t i = 0; i < idx.val.size(); ++i) {
        std::copy(x.row(idx.val[i]), x.row(idx.val[i]) + x.cols,
                  s.val_x.row(static_cast<int>(i)));
        s.val_y.push_back(y[idx.val[i]]);
    }
    s.validate();
    return s;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::vector<unsigned char> read_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(is)),
                                      std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) |
           static_cast<std::uint32_t>(b[off + 3]);
}

} // namespace

void DatasetSplit::validate() const {
    if (train_x.rows != static_cast<int>(train_y.size())) {
        throw ShapeError("train rows do not match train labels");
    }
    if (val_x.rows != static_cast<int>(val_y.size())) {
        throw ShapeError("val rows do not match val labels");
    }
    if (train_x.rows > 0 && val_x.rows > 0 && train_x.cols != val_x.cols) {
        throw ShapeError("train and val feature dims differ");
    }
    if (num_classes < 1) throw ConsistencyError("num_classes must be >= 1");
    for (int y : train_y) {
        if (y < 0 || y >= num_classes) {
            throw ConsistencyError("train label " + std::to_string(y) +
                                   " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
    for (int y : val_y) {
        if (y < 0 || y >= num_classes) {
            throw ConsistencyError("val label " + std::to_string(y) +
                                   " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
    for (double v : train_x.data) {
        if (!std::isfinite(v)) throw NumericError("non-finite train feature");
    }
    for (double v : val_x.data) {
        if (!std::isfinite(v)) throw NumericError("non-finite val feature");
    }
}

DatasetSplit make_blobs(int num_classes, int per_class, int dim, double spread,
                        std::uint64_t seed) {
    if (num_classes < 2) throw ShapeError("make_blobs needs at least 2 classes");
    if (per_class < 4) throw ShapeError("make_blobs needs per_class >= 4");
    if (dim < 1) throw ShapeError("make_blobs needs dim >= 1");
    if (!(spread >= 0.0) || !std::isfinite(spread)) {
        throw DomainError("spread must be finite and >= 0");
    }

    Rng rng(seed);
    Matrix centers(num_classes, dim);
    for (int c = 0; c < num_classes; ++c) {
        double norm2 = 0.0;
        for (int d = 0; d < dim; ++d) {
            centers(c, d) = rng.gaussian();
            norm2 += centers(c, d) * centers(c, d);
        }
        double norm = std::max(std::sqrt(norm2), 1e-12);
        for (int d = 0; d < dim; ++d) centers(c, d) /= norm;
    }

    const int n_train_pc = per_class * 4 / 5;
    const int n_val_pc = per_class - n_train_pc;
    DatasetSplit s;
    s.num_classes = num_classes;
    s.train_x = Matrix(num_classes * n_train_pc, dim);
    s.val_x = Matrix(num_classes * n_val_pc, dim);
    for (int c = 0; c < num_classes; ++c) {
        for (int k = 0; k < per_class; ++k) {
            const bool is_train = k < n_train_pc;
            double* row = is_train ? s.train_x.row(c * n_train_pc + k)
                                   : s.val_x.row(c * n_val_pc + (k - n_train_pc));
            for (int d = 0; d < dim; ++d) {
                row[d] = centers(c, d) + spread * rng.gaussian();
            }
            (is_train ? s.train_y : s.val_y).push_back(c);
        }
    }
    s.provenance = "blobs(classes=" + std::to_string(num_classes) +
                   ",per_class=" + std::to_string(per_class) +
                   ",dim=" + std::to_string(dim) + ",spread=" + format_double(spread) +
                   ",seed=" + std::to_string(seed) + ")";
    s.validate();
    return s;
}

DatasetSplit load_csv(const std::string& path, const std::string& label_column,
                      double val_fraction, std::uint64_t seed) {
    check_val_fraction(val_fraction);
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(is, line)) throw FormatError(path + ": missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_fields(line);
    int label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) label_idx = static_cast<int>(i);
    }
    if (label_idx < 0) {
        throw FormatError(path + ": label column '" + label_column +
                          "' not found in header");
    }
    const int dim = static_cast<int>(header.size()) - 1;
    if (dim < 1) throw FormatError(path + ": no feature columns besides the label");

    std::vector<double> features;
    std::vector<std::string> raw_labels;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw FormatError(path + ": line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (static_cast<int>(i) == label_idx) {
                raw_labels.push_back(fields[i]);
                continue;
            }
            std::size_t used = 0;
            double v;
            try {
                v = std::stod(fields[i], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != fields[i].size() || fields[i].empty()) {
                throw FormatError(path + ": line " + std::to_string(line_no) +
                                  ", column '" + header[i] + "': '" + fields[i] +
                                  "' is not a number");
            }
            features.push_back(v);
        }
    }
    if (raw_labels.empty()) throw FormatError(path + ": no data rows");

    std::vector<std::string> classes = raw_labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::map<std::string, int> class_id;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        class_id[classes[i]] = static_cast<int>(i);
    }

    const int n = static_cast<int>(raw_labels.size());
    Matrix x(n, dim);
    x.data = std::move(features);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = class_id[raw_labels[i]];

    Rng rng(seed);
    SplitIndices idx = stratified_split(y, static_cast<int>(classes.size()),
                                        val_fraction, rng);
    return assemble(x, y, static_cast<int>(classes.size()), idx,
                    "csv(path='" + path + "',label='" + label_column +
                        "',val_fraction=" + format_double(val_fraction) +
                        ",seed=" + std::to_string(seed) + ")");
}

DatasetSplit load_idx(const std::string& images_path, const std::string& labels_path,
                      double val_fraction, std::uint64_t seed) {
    check_val_fraction(val_fraction);

    std::vector<unsigned char> img = read_binary(images_path);
    if (img.size() < 16) {
        throw FormatError(images_path + ": truncated header, need 16 bytes, got " +
                          std::to_string(img.size()));
    }
    std::uint32_t magic = be32(img, 0);
    if (magic != 0x00000803u) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "0x%08x", magic);
        throw FormatError(images_path + ": bad magic " + buf +
                          " at offset 0, expected 0x00000803");
    }
    const std::size_t n_img = be32(img, 4);
    const std::size_t rows = be32(img, 8);
    const std::size_t cols = be32(img, 12);
    const std::size_t want = 16 + n_img * rows * cols;
    if (img.size() != want) {
        throw FormatError(images_path + ": expected " + std::to_string(want) +
                          " bytes for " + std::to_string(n_img) + " images, got " +
                          std::to_string(img.size()));
    }

    std::vector<unsigned char> lab = read_binary(labels_path);
    if (lab.size() < 8) {
        throw FormatError(labels_path + ": truncated header, need 8 bytes, got " +
                          std::to_string(lab.size()));
    }
    magic = be32(lab, 0);
    if (magic != 0x00000801u) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "0x%08x", magic);
        throw FormatError(labels_path + ": bad magic " + buf +
                          " at offset 0, expected 0x00000801");
    }
    const std::size_t n_lab = be32(lab, 4);
    if (lab.size() != 8 + n_lab) {
        throw FormatError(labels_path + ": expected " + std::to_string(8 + n_lab) +
                          " bytes for " + std::to_string(n_lab) + " labels, got " +
                          std::to_string(lab.size()));
    }
    if (n_img != n_lab) {
        throw ConsistencyError(images_path + " has " + std::to_string(n_img) +
                               " images but " + labels_path + " has " +
                               std::to_string(n_lab) + " labels");
    }
    if (n_img == 0) throw ConsistencyError(images_path + ": contains no images");

    const int dim = static_cast<int>(rows * cols);
    const int n = static_cast<int>(n_img);
    Matrix x(n, dim);
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < dim; ++d) {
            x(i, d) = img[16 + static_cast<std::size_t>(i) * dim + d] / 255.0;
        }
    }
    std::vector<int> y(n);
    int num_classes = 0;
    for (int i = 0; i < n; ++i) {
        y[i] = lab[8 + i];
        num_classes = std::max(num_classes, y[i] + 1);
    }

    Rng rng(seed);
    SplitIndices idx = stratified_split(y, num_classes, val_fraction, rng);
    return assemble(x, y, num_classes, idx,
                    "idx(images='" + images_path + "',labels='" + labels_path +
                        "',val_fraction=" + format_double(val_fraction) +
                        ",seed=" + std::to_string(seed) + ")");
}

DatasetSplit corrupt_labels(const DatasetSplit& split, double ratio,
                            std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw DomainError("noise ratio must be in [0, 1], got " + format_double(ratio));
    }
    split.validate();
    if (split.num_classes < 2) {
        throw DomainError("label noise needs at least 2 classes");
    }
    DatasetSplit out = split;
    Rng rng(seed);
    for (int& y : out.train_y) {
        if (rng.uniform() < ratio) {
            // draw from the C-1 other classes so a flip always changes the label
            int k = rng.uniform_int(split.num_classes - 1);
            y = (k >= y) ? k + 1 : k;
        }
    }
    out.provenance += "+label_noise(ratio=" + format_double(ratio) +
                      ",seed=" + std::to_string(seed) + ")";
    return out;
}

} // namespace amlfs
