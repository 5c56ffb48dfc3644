#include "safe/data.hpp"

#include "safe/gaussian_stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace safe {

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.x = x(rows, Eigen::all);
  out.num_classes = num_classes;
  out.split = split;
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (Eigen::Index r : rows) {
    out.labels.push_back(labels[r]);
    out.ids.push_back(ids[r]);
  }
  return out;
}

std::vector<Eigen::Index> Dataset::class_counts() const {
  std::vector<Eigen::Index> counts(num_classes, 0);
  for (int y : labels) ++counts[y];
  return counts;
}

void validate(const Dataset& data) {
  if (static_cast<Eigen::Index>(data.labels.size()) != data.size() ||
      static_cast<Eigen::Index>(data.ids.size()) != data.size()) {
    throw InputError("dataset rows, labels and ids disagree in length");
  }
  for (int y : data.labels) {
    if (y < 0 || y >= data.num_classes) throw InputError("dataset label " + std::to_string(y) + " out of range");
  }
  if (!data.x.allFinite()) throw InputError("dataset contains non-finite features");
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) {
    throw ParseError(std::string("truncated IDX header reading ") + what, static_cast<long long>(bytes.size()));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::uint64_t needed) {
  const std::uint64_t have = bytes.size() - header;
  if (have < needed) {
    throw ParseError("truncated IDX payload: expected " + std::to_string(needed) + " bytes, found " +
                         std::to_string(have),
                     static_cast<long long>(bytes.size()));
  }
  if (have > needed) {
    throw ParseError("IDX payload longer than header count", static_cast<long long>(header + needed));
  }
}

}  // namespace

IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = read_be32(bytes, 0, "magic");
  if (magic != kIdxImageMagic) {
    std::ostringstream msg;
    msg << "bad IDX image magic 0x" << std::hex << magic;
    throw ParseError(msg.str(), 0);
  }
  IdxImages img;
  img.count = read_be32(bytes, 4, "image count");
  img.rows = read_be32(bytes, 8, "row count");
  img.cols = read_be32(bytes, 12, "column count");
  const std::uint64_t needed = std::uint64_t{img.count} * img.rows * img.cols;
  check_payload(bytes, 16, needed);
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = read_be32(bytes, 0, "magic");
  if (magic != kIdxLabelMagic) {
    std::ostringstream msg;
    msg << "bad IDX label magic 0x" << std::hex << magic;
    throw ParseError(msg.str(), 0);
  }
  const std::uint32_t count = read_be32(bytes, 4, "label count");
  check_payload(bytes, 8, count);
  return {bytes.begin() + 8, bytes.end()};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  if (images.pixels.size() != std::size_t{images.count} * images.rows * images.cols) {
    throw InputError("encode_idx_images: pixel count does not match dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxImageMagic);
  write_be32(out, images.count);
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes,
                 SampleId first_id) {
  const IdxImages img = parse_idx_images(read_file_bytes(images));
  const std::vector<std::uint8_t> lab = parse_idx_labels(read_file_bytes(labels));
  if (lab.size() != img.count) {
    throw ParseError("label count " + std::to_string(lab.size()) + " does not match image count " +
                         std::to_string(img.count),
                     4);
  }
  const Eigen::Index n = img.count;
  const Eigen::Index d = Eigen::Index{img.rows} * img.cols;
  Dataset out;
  out.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out.x(i, j) = img.pixels[i * d + j] / 255.0;
  }
  out.labels.assign(lab.begin(), lab.end());
  out.ids.resize(n);
  std::iota(out.ids.begin(), out.ids.end(), first_id);
  const int max_label = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end());
  out.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  validate(out);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& label_column, SampleId first_id) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("CSV is empty", 0);
  const std::vector<std::string> header = split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) throw ConfigError("CSV has no column named '" + label_column + "'");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::unordered_map<std::string, int> label_index;
  long long offset = static_cast<long long>(line.size()) + 1;
  int row_number = 1;
  while (std::getline(in, line)) {
    const long long line_offset = offset;
    offset += static_cast<long long>(line.size()) + 1;
    ++row_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("CSV row " + std::to_string(row_number) + " has " + std::to_string(cells.size()) +
                           " cells, header has " + std::to_string(header.size()),
                       line_offset);
    }
    std::vector<double> features;
    features.reserve(header.size() - 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_col) continue;
      double v = 0.0;
      const char* first = cells[c].data();
      const char* last = first + cells[c].size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (cells[c].empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
        throw ParseError("CSV row " + std::to_string(row_number) + " column '" + header[c] +
                             "': non-numeric value '" + cells[c] + "'",
                         line_offset);
      }
      features.push_back(v);
    }
    const auto [it, inserted] = label_index.try_emplace(cells[label_col], static_cast<int>(label_index.size()));
    labels.push_back(it->second);
    rows.push_back(std::move(features));
  }

  Dataset out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  out.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out.x(i, j) = rows[i][j];
  }
  for (Eigen::Index j = 0; j < d && n > 0; ++j) {
    const double lo = out.x.col(j).minCoeff();
    const double range = out.x.col(j).maxCoeff() - lo;
    if (range > 0.0) {
      out.x.col(j) = (out.x.col(j).array() - lo) / range;
    } else {
      out.x.col(j).setZero();
    }
  }
  out.labels = std::move(labels);
  out.ids.resize(n);
  std::iota(out.ids.begin(), out.ids.end(), first_id);
  out.num_classes = static_cast<int>(label_index.size());
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column, SampleId first_id) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str(), label_column, first_id);
}

TrainTest split_train_test(const Dataset& all, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  // Stratified so every class keeps the same train/test proportion.
  std::vector<std::vector<Eigen::Index>> by_class(all.num_classes);
  for (Eigen::Index i = 0; i < all.size(); ++i) by_class[all.labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> train_rows, test_rows;
  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  TrainTest out{all.subset(train_rows), all.subset(test_rows)};
  out.train.split = Split::kTrain;
  out.test.split = Split::kTest;
  return out;
}

TrainTest make_synthetic(int n, int dim, int num_classes, double separation, std::uint64_t seed, int proj_dim) {
  if (num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (dim < num_classes) throw ConfigError("synthetic data needs dim >= num_classes");
  if (separation < 0.0) throw ConfigError("synthetic separation must be >= 0");
  const int k = proj_dim > 0 ? proj_dim : default_proj_dim(dim);
  // 80% of each class goes to training and must cover proj_dim + 2 points.
  const auto per_class_train = static_cast<long long>(std::floor(0.8 * n / num_classes));
  if (n < num_classes * min_class_count(k) || per_class_train < min_class_count(k)) {
    throw ConfigError("synthetic n = " + std::to_string(n) + " too small for " + std::to_string(num_classes) +
                      " classes with proj_dim " + std::to_string(k));
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset all;
  all.num_classes = num_classes;
  all.x.resize(n, dim);
  all.labels.resize(n);
  all.ids.resize(n);
  const double offset = separation / std::sqrt(2.0);
  for (int i = 0; i < n; ++i) {
    const int c = i % num_classes;
    all.labels[i] = c;
    all.ids[i] = i;
    for (int j = 0; j < dim; ++j) all.x(i, j) = normal(rng);
    all.x(i, c) += offset;
  }
  return split_train_test(all, 0.2, seed ^ 0x9e3779b97f4a7c15ULL);
}

std::vector<std::vector<SampleId>> generate_stream(const Dataset& train, const RequestStreamSpec& spec,
                                                   int min_count) {
  if (spec.rounds < 0) throw ConfigError("stream.rounds must be >= 0");
  if (spec.per_round < 0) throw ConfigError("stream.per_round must be >= 0");
  const long long total = static_cast<long long>(spec.rounds) * spec.per_round;
  std::mt19937_64 rng(spec.seed);
  std::vector<Eigen::Index> order(train.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<SampleId> pool;
  if (spec.mode == StreamMode::kRandomSubset) {
    const long long budget = train.size() - static_cast<long long>(train.num_classes) * min_count;
    if (total > budget) {
      throw ConfigError("stream requests " + std::to_string(total) + " deletions but only " +
                        std::to_string(std::max(budget, 0LL)) + " are available without exhausting a class");
    }
    std::vector<Eigen::Index> remaining = train.class_counts();
    for (Eigen::Index r : order) {
      if (static_cast<long long>(pool.size()) == total) break;
      const int y = train.labels[r];
      if (remaining[y] <= min_count) continue;
      --remaining[y];
      pool.push_back(train.ids[r]);
    }
    if (static_cast<long long>(pool.size()) < total) throw ConfigError("stream budget infeasible");
  } else {
    if (spec.target_class < 0 || spec.target_class >= train.num_classes) {
      throw ConfigError("stream.target_class out of range");
    }
    for (Eigen::Index r : order) {
      if (train.labels[r] == spec.target_class) pool.push_back(train.ids[r]);
    }
    if (total > static_cast<long long>(pool.size())) {
      throw ConfigError("class-stream requests " + std::to_string(total) + " deletions but class " +
                        std::to_string(spec.target_class) + " has " + std::to_string(pool.size()));
    }
  }

  std::vector<std::vector<SampleId>> stream(spec.rounds);
  for (int t = 0; t < spec.rounds; ++t) {
    const auto begin = pool.begin() + static_cast<std::ptrdiff_t>(t) * spec.per_round;
    stream[t].assign(begin, begin + spec.per_round);
  }
  return stream;
}

}  // namespace safe
