#pragma once

#include "safe/model.hpp"
#include "safe/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace safe {

enum class Split { kTrain, kTest };

/// Labelled feature matrix with stable row ids.
struct Dataset {
  RowMatrix x;
  std::vector<int> labels;
  std::vector<SampleId> ids;
  int num_classes = 0;
  Split split = Split::kTrain;

  [[nodiscard]] Eigen::Index size() const noexcept { return x.rows(); }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(x.cols()); }
  [[nodiscard]] bool empty() const noexcept { return x.rows() == 0; }
  [[nodiscard]] BatchView view() const { return {x, labels}; }

  /// Rows selected by position.
  [[nodiscard]] Dataset subset(const std::vector<Eigen::Index>& rows) const;
  [[nodiscard]] std::vector<Eigen::Index> class_counts() const;
};

/// Throws InputError when sizes disagree or labels fall outside [0, C).
void validate(const Dataset& data);

struct TrainTest {
  Dataset train;
  Dataset test;
};

// ---------------------------------------------------------------------------
// IDX (MNIST-style) files: big-endian, images 0x00000803 (count, rows, cols),
// labels 0x00000801 (count). Pixels are scaled by 1/255.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

[[nodiscard]] IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes);
[[nodiscard]] std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);
[[nodiscard]] std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
[[nodiscard]] std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels);

[[nodiscard]] std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Loads an image/label IDX pair. `num_classes` of 0 infers max label + 1.
[[nodiscard]] Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                               int num_classes = 0, SampleId first_id = 0);

// ---------------------------------------------------------------------------

/// Header row required. Features are min-max scaled per column to [0, 1]
/// (constant columns become 0); labels are mapped to indices by first
/// occurrence.
[[nodiscard]] Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                               SampleId first_id = 0);
[[nodiscard]] Dataset parse_csv(const std::string& text, const std::string& label_column, SampleId first_id = 0);

/// Deterministic shuffled split; `test_fraction` of rows go to the test set.
[[nodiscard]] TrainTest split_train_test(const Dataset& all, double test_fraction, std::uint64_t seed);

/// Isotropic unit-variance Gaussian blobs. Class c is centred at
/// (separation / sqrt(2)) e_c so every pair of centres is `separation`
/// apart. Requires dim >= num_classes. 80/20 train/test split.
[[nodiscard]] TrainTest make_synthetic(int n, int dim, int num_classes, double separation, std::uint64_t seed,
                                       int proj_dim = 0);

// ---------------------------------------------------------------------------

enum class StreamMode { kRandomSubset, kClassStream };

struct RequestStreamSpec {
  StreamMode mode = StreamMode::kRandomSubset;
  int rounds = 20;
  int per_round = 40;
  int target_class = 0;
  std::uint64_t seed = 0;
};

/// Disjoint requests of row ids. Random-subset requests never take a class
/// below `min_count` points; class-stream requests draw only from the target
/// class.
[[nodiscard]] std::vector<std::vector<SampleId>> generate_stream(const Dataset& train, const RequestStreamSpec& spec,
                                                                 int min_count);

}  // namespace safe
