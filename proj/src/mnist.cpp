#include "ablatron/mnist.hpp"

#include "ablatron/error.hpp"

#include <fstream>
#include <string>

namespace ablatron {
namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseError::Kind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path)
{
    if (bytes.size() < offset + 4) throw ParseError(ParseError::Kind::truncated, path.string() + ": truncated header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Samples LabeledDataset::present() const
{
    Samples s;
    s.shape = {1, rows, cols};
    s.class_count = 10;
    s.features.resize(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) s.features[i] = static_cast<float>(pixels[i]) / 255.0f;
    s.labels.assign(labels.begin(), labels.end());
    return s;
}

LabeledDataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels, Split split)
{
    const std::vector<unsigned char> img = slurp(images);
    const std::vector<unsigned char> lab = slurp(labels);

    if (be32(img, 0, images) != kIdxImageMagic) throw ParseError(ParseError::Kind::bad_magic, images.string() + ": bad magic");
    if (be32(lab, 0, labels) != kIdxLabelMagic) throw ParseError(ParseError::Kind::bad_magic, labels.string() + ": bad magic");
    const std::uint32_t count = be32(img, 4, images);
    const std::uint32_t rows = be32(img, 8, images);
    const std::uint32_t cols = be32(img, 12, images);
    const std::uint32_t label_count = be32(lab, 4, labels);
    if (rows != 28 || cols != 28) {
        throw ParseError(ParseError::Kind::bad_dimensions,
                         images.string() + ": expected 28x28 images, found " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
    if (count != label_count) {
        throw ParseError(ParseError::Kind::count_mismatch, "image count " + std::to_string(count) +
                                                                " does not match label count " + std::to_string(label_count));
    }
    const std::size_t pixel_bytes = std::size_t{count} * rows * cols;
    if (img.size() < 16 + pixel_bytes) throw ParseError(ParseError::Kind::truncated, images.string() + ": truncated payload");
    if (lab.size() < 8 + std::size_t{count}) throw ParseError(ParseError::Kind::truncated, labels.string() + ": truncated payload");

    LabeledDataset d;
    d.split = split;
    d.rows = rows;
    d.cols = cols;
    d.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(pixel_bytes));
    d.labels.assign(lab.begin() + 8, lab.begin() + 8 + count);
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        if (d.labels[i] > 9) throw DataError(labels.string() + ": label out of range at index " + std::to_string(i));
    }
    return d;
}

LabeledDataset load_mnist_dir(const std::filesystem::path& dir, Split split)
{
    const std::string prefix = split == Split::train ? "train" : "t10k";
    return load_mnist(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), split);
}

}  // namespace ablatron
