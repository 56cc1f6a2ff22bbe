#pragma once

// Seeded synthetic datasets, train/validation splitting and the CSV format
// shared by the command-line tools:
//
//   f0,f1,...,f{D-1},label
//
// one row per example, decimal floats and an integer label.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dlk/linear.hpp"
#include "dlk/recurrent.hpp"
#include "dlk/tensor.hpp"

namespace dlk {

/// Features with arbitrary integer labels, as read from or written to CSV.
struct Table {
  Matrix x;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

Table to_table(const LabeledSet& data);
/// Requires 0/1 labels (or ±1 when `convention` is PlusMinusOne).
LabeledSet to_labeled(const Table& table, LabelConvention convention = LabelConvention::ZeroOne);

/// Inner points area-uniform in the unit disk (label 0), outer points
/// area-uniform in the annulus 1 ≤ r ≤ 2 (label 1).
LabeledSet make_ball_annulus(std::size_t n_inner = 100, std::size_t n_outer = 100, std::uint64_t seed = 0);

struct Blobs {
  LabeledSet data;  // 0/1 labels
  /// Unit normal of the separating hyperplane through the origin, pointing to class 1.
  Vector witness;
};

/// Two unit-variance Gaussian clusters at ±(margin/2 + 1.5)·u for a random unit
/// u, rejection-sampled so every point lies at least margin/2 from ⟨u,x⟩ = 0.
Blobs make_blobs(std::size_t n_per_class, double margin, std::uint64_t seed, std::size_t dims = 2);

/// (0,0)↦0, (0,1)↦1, (1,0)↦1, (1,1)↦0.
LabeledSet make_xor();

inline constexpr std::size_t kShapeSide = 8;

/// 8×8 single-channel images flattened row-major into 64 features: filled
/// squares (label 0) and plus-shaped crosses (label 1) at random sizes and
/// positions, plus N(0, noise²) pixel noise.
LabeledSet make_shapes_grid(std::size_t n_per_class, std::uint64_t seed, double noise = 0.05);

/// Scalar sequences x_t ~ U(−1, 1) with targets y_t = x_{t−k} (0 for t < k).
std::vector<SequenceExample> make_copy_sequence(std::size_t count, std::size_t length, std::size_t lag,
                                                std::uint64_t seed);
/// One row per sequence: f0..f{T−1} hold x_t, the label holds the lag k.
Table copy_sequence_table(const std::vector<SequenceExample>& sequences, std::size_t lag);
/// Inverse of copy_sequence_table.
std::vector<SequenceExample> copy_sequences_from_table(const Table& table);

/// Seeded shuffle into ⌈fN⌉ training and ⌊(1−f)N⌋ validation rows.
std::pair<LabeledSet, LabeledSet> split(const LabeledSet& data, double train_fraction, std::uint64_t seed);
/// Index form of split: (training indices, validation indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed);

/// Thrown for malformed CSV input; the message names the line.
class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_csv(std::ostream& out, const Table& table);
Table read_csv(std::istream& in);
Table read_csv_file(const std::string& path);
/// Feature columns only; a trailing label column is accepted and ignored.
Matrix read_matrix_csv(std::istream& in);

}  // namespace dlk
