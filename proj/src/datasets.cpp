#include "dlk/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "dlk/random.hpp"

namespace dlk {

Table to_table(const LabeledSet& data) { return {data.x, data.y}; }

LabeledSet to_labeled(const Table& table, LabelConvention convention) {
  return LabeledSet(table.x, table.labels, convention);
}

namespace {

void push_polar(std::vector<double>& out, double r, double theta) {
  out.push_back(r * std::cos(theta));
  out.push_back(r * std::sin(theta));
}

}  // namespace

LabeledSet make_ball_annulus(std::size_t n_inner, std::size_t n_outer, std::uint64_t seed) {
  if (n_inner == 0 || n_outer == 0) throw std::invalid_argument("ball_annulus: counts must be at least 1");
  Rng rng(seed);
  std::vector<double> values;
  std::vector<int> labels;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double r = std::sqrt(rng.uniform());
    push_polar(values, r, two_pi * rng.uniform());
    labels.push_back(0);
  }
  for (std::size_t i = 0; i < n_outer; ++i) {
    // Inverse CDF of r on [1,2] with density ∝ r.
    const double r = std::sqrt(1.0 + 3.0 * rng.uniform());
    push_polar(values, r, two_pi * rng.uniform());
    labels.push_back(1);
  }
  return LabeledSet(Matrix(n_inner + n_outer, 2, std::move(values)), std::move(labels), LabelConvention::ZeroOne);
}

Blobs make_blobs(std::size_t n_per_class, double margin, std::uint64_t seed, std::size_t dims) {
  if (n_per_class == 0 || dims == 0) throw std::invalid_argument("blobs: counts must be at least 1");
  if (margin < 0.0) throw std::invalid_argument("blobs: margin must be non-negative");
  Rng rng(seed);
  Vector u = rng.normal_vector(dims);
  u = scale(u, 1.0 / norm(u));
  const double offset = margin / 2.0 + 1.5;
  std::vector<double> values;
  std::vector<int> labels;
  for (int label : {0, 1}) {
    const double side = label == 1 ? 1.0 : -1.0;
    std::size_t kept = 0;
    while (kept < n_per_class) {
      Vector x = add(scale(u, side * offset), rng.normal_vector(dims));
      if (side * dot(u, x) < margin / 2.0) continue;
      values.insert(values.end(), x.begin(), x.end());
      labels.push_back(label);
      ++kept;
    }
  }
  return {LabeledSet(Matrix(2 * n_per_class, dims, std::move(values)), std::move(labels), LabelConvention::ZeroOne), u};
}

LabeledSet make_xor() {
  return LabeledSet(Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}}), {0, 1, 1, 0}, LabelConvention::ZeroOne);
}

LabeledSet make_shapes_grid(std::size_t n_per_class, std::uint64_t seed, double noise) {
  if (n_per_class == 0) throw std::invalid_argument("shapes_grid: count must be at least 1");
  Rng rng(seed);
  const std::size_t side = kShapeSide;
  std::vector<double> values;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<double> img(side * side, 0.0);
    if (label == 0) {
      const std::size_t s = 2 + rng.index(3);  // side 2..4
      const std::size_t r0 = rng.index(side - s + 1);
      const std::size_t c0 = rng.index(side - s + 1);
      for (std::size_t r = r0; r < r0 + s; ++r)
        for (std::size_t c = c0; c < c0 + s; ++c) img[r * side + c] = 1.0;
    } else {
      const std::size_t arm = 1 + rng.index(2);  // arm length 1..2
      const std::size_t cr = arm + rng.index(side - 2 * arm);
      const std::size_t cc = arm + rng.index(side - 2 * arm);
      for (std::size_t k = cr - arm; k <= cr + arm; ++k) img[k * side + cc] = 1.0;
      for (std::size_t k = cc - arm; k <= cc + arm; ++k) img[cr * side + k] = 1.0;
    }
    if (noise > 0.0)
      for (double& p : img) p += rng.normal(0.0, noise);
    values.insert(values.end(), img.begin(), img.end());
    labels.push_back(label);
  }
  return LabeledSet(Matrix(2 * n_per_class, side * side, std::move(values)), std::move(labels), LabelConvention::ZeroOne);
}

std::vector<SequenceExample> make_copy_sequence(std::size_t count, std::size_t length, std::size_t lag,
                                                std::uint64_t seed) {
  if (count == 0 || length == 0) throw std::invalid_argument("copy_sequence: counts must be at least 1");
  if (lag >= length) throw std::invalid_argument("copy_sequence: lag must be shorter than the sequence");
  Rng rng(seed);
  std::vector<SequenceExample> out(count);
  for (SequenceExample& ex : out) {
    for (std::size_t t = 0; t < length; ++t) ex.inputs.push_back(Vector{rng.uniform(-1.0, 1.0)});
    for (std::size_t t = 0; t < length; ++t) ex.targets.push_back(t < lag ? Vector{0.0} : ex.inputs[t - lag]);
  }
  return out;
}

Table copy_sequence_table(const std::vector<SequenceExample>& sequences, std::size_t lag) {
  if (sequences.empty()) throw std::invalid_argument("copy_sequence_table: no sequences");
  const std::size_t length = sequences.front().inputs.size();
  Table t{Matrix(sequences.size(), length), std::vector<int>(sequences.size(), static_cast<int>(lag))};
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].inputs.size() != length) throw ShapeError("copy_sequence_table: sequences differ in length");
    for (std::size_t j = 0; j < length; ++j) t.x(i, j) = sequences[i].inputs[j][0];
  }
  return t;
}

std::vector<SequenceExample> copy_sequences_from_table(const Table& table) {
  std::vector<SequenceExample> out(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const int lag = table.labels[i];
    if (lag < 0 || static_cast<std::size_t>(lag) >= table.x.cols()) {
      throw std::invalid_argument(fmt::format("row {}: lag {} does not fit a length-{} sequence", i, lag, table.x.cols()));
    }
    for (std::size_t t = 0; t < table.x.cols(); ++t) out[i].inputs.push_back(Vector{table.x(i, t)});
    for (std::size_t t = 0; t < table.x.cols(); ++t) {
      out[i].targets.push_back(t < static_cast<std::size_t>(lag) ? Vector{0.0} : out[i].inputs[t - lag]);
    }
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument(fmt::format("train fraction must lie in (0, 1), got {}", train_fraction));
  }
  // The small slack keeps products like 0.7 * 10 from rounding up past an integer.
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  if (n_train == 0 || n_train >= n) {
    throw std::invalid_argument(fmt::format("fraction {} of {} rows leaves an empty split", train_fraction, n));
  }
  Rng rng(seed);
  const std::vector<std::size_t> order = rng.permutation(n);
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end())};
}

namespace {

LabeledSet gather(const LabeledSet& data, const std::vector<std::size_t>& rows) {
  Matrix x(rows.size(), data.features());
  std::vector<int> y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = data.x.row(rows[i]);
    std::copy(src.begin(), src.end(), x.row(i).begin());
    y.push_back(data.y[rows[i]]);
  }
  return LabeledSet(std::move(x), std::move(y), data.convention);
}

}  // namespace

std::pair<LabeledSet, LabeledSet> split(const LabeledSet& data, double train_fraction, std::uint64_t seed) {
  const auto [train, validation] = split_indices(data.size(), train_fraction, seed);
  return {gather(data, train), gather(data, validation)};
}

void write_csv(std::ostream& out, const Table& table) {
  for (std::size_t j = 0; j < table.x.cols(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (double v : table.x.row(i)) out << fmt::format("{}", v) << ',';
    out << table.labels[i] << '\n';
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

namespace {

double parse_number(const std::string& f, std::size_t line_no, std::size_t column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(f, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (f.empty() || used != f.size() || !std::isfinite(v)) {
    throw CsvError(fmt::format("line {}: column f{} is not a finite number: '{}'", line_no, column, f));
  }
  return v;
}

int parse_label(const std::string& f, std::size_t line_no) {
  std::size_t used = 0;
  int label = 0;
  try {
    label = std::stoi(f, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (f.empty() || used != f.size()) throw CsvError(fmt::format("line {}: label is not an integer: '{}'", line_no, f));
  return label;
}

/// Reads f0..f{D-1}[,label]. Without a label column every label is 0.
Table parse_table(std::istream& in, bool require_label) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError("line 1: missing header");
  std::vector<std::string> header = split_fields(trim(line));
  for (std::string& h : header) h = trim(h);
  const bool has_label = !header.empty() && header.back() == "label";
  if (require_label && !has_label) throw CsvError("line 1: header must be f0,...,f{D-1},label");
  const std::size_t d = has_label ? header.size() - 1 : header.size();
  if (d == 0) throw CsvError("line 1: no feature columns");
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != fmt::format("f{}", j)) {
      throw CsvError(fmt::format("line 1: column {} should be named f{}, got '{}'", j + 1, j, header[j]));
    }
  }
  const std::size_t width = has_label ? d + 1 : d;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != width) {
      throw CsvError(fmt::format("line {}: expected {} fields, got {}", line_no, width, fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_number(trim(fields[j]), line_no, j));
    labels.push_back(has_label ? parse_label(trim(fields[d]), line_no) : 0);
  }
  if (labels.empty()) throw CsvError("no data rows");
  return {Matrix(labels.size(), d, std::move(values)), std::move(labels)};
}

}  // namespace

Table read_csv(std::istream& in) { return parse_table(in, true); }

Matrix read_matrix_csv(std::istream& in) { return parse_table(in, false).x; }

Table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(fmt::format("cannot open '{}'", path));
  return read_csv(in);
}

}  // namespace dlk
