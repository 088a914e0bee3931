#include "memsim/dataset.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "memsim/errors.hpp"

namespace memsim {
namespace {

std::uint32_t read_be32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw Error("idx: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

LabelledSet take_rows(const LabelledSet& src, const std::vector<int>& rows) {
  LabelledSet out;
  out.n_classes = src.n_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), src.features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = src.features.row(rows[i]);
    out.labels.push_back(src.labels[rows[i]]);
  }
  return out;
}

}  // namespace

LabelledSet load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!img) throw Error("idx: cannot open " + images_path);
  if (!lab) throw Error("idx: cannot open " + labels_path);
  if (read_be32(img) != 0x00000803) throw Error("idx: bad image magic in " + images_path);
  if (read_be32(lab) != 0x00000801) throw Error("idx: bad label magic in " + labels_path);
  const std::uint32_t n = read_be32(img);
  const std::uint32_t rows = read_be32(img);
  const std::uint32_t cols = read_be32(img);
  if (read_be32(lab) != n) throw Error("idx: image/label count mismatch");

  LabelledSet set;
  set.features.resize(n, static_cast<Eigen::Index>(rows) * cols);
  set.labels.resize(n);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!img) throw Error("idx: truncated image data");
    for (std::size_t p = 0; p < buf.size(); ++p)
      set.features(i, static_cast<Eigen::Index>(p)) = buf[p] / 255.0;
    char l = 0;
    lab.read(&l, 1);
    if (!lab) throw Error("idx: truncated label data");
    set.labels[i] = static_cast<unsigned char>(l);
  }
  set.n_classes = 1 + *std::max_element(set.labels.begin(), set.labels.end());
  return set;
}

TrainTestSplit load_mnist(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  return {load_idx((d / "train-images-idx3-ubyte").string(), (d / "train-labels-idx1-ubyte").string()),
          load_idx((d / "t10k-images-idx3-ubyte").string(), (d / "t10k-labels-idx1-ubyte").string())};
}

TrainTestSplit load_digits8x8(const std::string& path, double test_fraction, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("digits: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 65) throw Error("digits: expected 65 columns");
    labels.push_back(static_cast<int>(vals.back()));
    vals.pop_back();
    rows.push_back(std::move(vals));
  }
  LabelledSet all;
  all.features.resize(static_cast<Eigen::Index>(rows.size()), 64);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < 64; ++j) all.features(static_cast<Eigen::Index>(i), j) = rows[i][j] / 16.0;
  all.labels = labels;
  all.n_classes = 10;

  std::vector<int> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "digits-split"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(order.size()));
  std::vector<int> test_rows(order.begin(), order.begin() + static_cast<long>(n_test));
  std::vector<int> train_rows(order.begin() + static_cast<long>(n_test), order.end());
  return {take_rows(all, train_rows), take_rows(all, test_rows)};
}

std::string bundled_digits_path() { return std::string(MEMSIM_DATA_DIR) + "/digits8x8.csv"; }

TrainTestSplit load_digits_or_mnist(const std::string& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!dir.empty() && fs::exists(fs::path(dir) / "train-images-idx3-ubyte")) return load_mnist(dir);
  return load_digits8x8(bundled_digits_path(), 0.2, seed);
}

}  // namespace memsim
