#include "nlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "nlab/error.hpp"
#include "nlab/rng.hpp"

namespace nlab {

void Dataset::validate() const {
  const std::size_t n = labels.size();
  if (class_count < 2) throw ValidationError("class_count must be >= 2");
  if (features.rows != n) throw ValidationError("features/labels row count mismatch");
  if (ids.size() != n) throw ValidationError("ids/labels length mismatch");
  auto in_range = [&](int y) { return y >= 0 && y < class_count; };
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_range(labels[i])) {
      throw ValidationError("label " + std::to_string(labels[i]) + " of sample " +
                            std::to_string(ids[i]) + " outside [0, " +
                            std::to_string(class_count) + ")");
    }
  }
  if (clean_labels.has_value() != noise_mask.has_value()) {
    throw ValidationError("noise_mask must be present exactly when clean_labels is");
  }
  if (clean_labels) {
    if (clean_labels->size() != n || noise_mask->size() != n) {
      throw ValidationError("clean_labels/noise_mask length mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_range((*clean_labels)[i])) {
        throw ValidationError("clean label of sample " + std::to_string(ids[i]) +
                              " out of range");
      }
      if ((*noise_mask)[i] != (labels[i] != (*clean_labels)[i])) {
        throw ValidationError("noise_mask inconsistent at sample " + std::to_string(ids[i]));
      }
    }
  }
  std::set<std::int64_t> seen(ids.begin(), ids.end());
  if (seen.size() != n) throw ValidationError("sample ids are not unique");
}

void Dataset::refresh_noise_mask() {
  if (!clean_labels) {
    noise_mask.reset();
    return;
  }
  std::vector<bool> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] != (*clean_labels)[i];
  noise_mask = std::move(mask);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = gather_rows(features, indices);
  out.class_count = class_count;
  out.labels.reserve(indices.size());
  out.ids.reserve(indices.size());
  for (std::size_t i : indices) {
    out.labels.push_back(labels[i]);
    out.ids.push_back(ids[i]);
  }
  if (clean_labels) {
    std::vector<int> clean;
    clean.reserve(indices.size());
    for (std::size_t i : indices) clean.push_back((*clean_labels)[i]);
    out.clean_labels = std::move(clean);
  }
  out.refresh_noise_mask();
  return out;
}

Dataset Dataset::with_labels(std::vector<int> new_labels) const {
  if (new_labels.size() != labels.size()) throw DimensionError("with_labels: length mismatch");
  Dataset out = *this;
  out.labels = std::move(new_labels);
  out.refresh_noise_mask();
  out.validate();
  return out;
}

std::size_t Dataset::noisy_count() const {
  if (!noise_mask) return 0;
  return static_cast<std::size_t>(std::count(noise_mask->begin(), noise_mask->end(), true));
}

double Dataset::noise_ratio() const {
  if (!noise_mask) throw StateError("noise_ratio: dataset has no ground truth");
  if (labels.empty()) return 0.0;
  return static_cast<double>(noisy_count()) / static_cast<double>(labels.size());
}

Dataset make_gaussian_dataset(std::size_t n_per_class, std::size_t dims, int class_count,
                              double overlap, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("make_gaussian_dataset: n_per_class must be >= 1");
  if (class_count < 2) throw ConfigError("make_gaussian_dataset: class_count must be >= 2");
  if (dims < 1) throw ConfigError("make_gaussian_dataset: dims must be >= 1");
  if (!(overlap >= 0.0)) throw ConfigError("make_gaussian_dataset: overlap must be >= 0");

  const auto classes = static_cast<std::size_t>(class_count);
  const double separation = 8.0 / (1.0 + overlap);
  std::mt19937_64 engine(derive_seed(seed, "gaussian-data"));
  std::normal_distribution<double> normal(0.0, 1.0);

  // Class means on orthogonal axes (pairwise distance = separation), or on
  // random directions when there are more classes than dimensions.
  Matrix means(classes, dims);
  for (std::size_t c = 0; c < classes; ++c) {
    if (classes <= dims) {
      means(c, c) = separation / std::sqrt(2.0);
    } else {
      double norm = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        means(c, d) = normal(engine);
        norm += means(c, d) * means(c, d);
      }
      for (std::size_t d = 0; d < dims; ++d) {
        means(c, d) *= separation / std::sqrt(2.0) / std::sqrt(norm);
      }
    }
  }
  for (std::size_t d = 0; d < dims; ++d) {
    double centroid = 0.0;
    for (std::size_t c = 0; c < classes; ++c) centroid += means(c, d);
    centroid /= static_cast<double>(classes);
    for (std::size_t c = 0; c < classes; ++c) means(c, d) -= centroid;
  }

  Dataset ds;
  ds.class_count = class_count;
  ds.features = Matrix(n_per_class * classes, dims);
  ds.labels.resize(n_per_class * classes);
  ds.ids.resize(n_per_class * classes);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < n_per_class; ++k) {
      const std::size_t i = c * n_per_class + k;
      for (std::size_t d = 0; d < dims; ++d) ds.features(i, d) = means(c, d) + normal(engine);
      ds.labels[i] = static_cast<int>(c);
      ds.ids[i] = static_cast<std::int64_t>(i);
    }
  }
  ds.clean_labels = ds.labels;
  ds.refresh_noise_mask();
  return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t test_per_class) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  std::vector<bool> is_test(ds.size(), false);
  for (const auto& members : by_class) {
    if (members.size() <= test_per_class) {
      throw ConfigError("split_per_class: a class has too few samples for the test split");
    }
    for (std::size_t k = members.size() - test_per_class; k < members.size(); ++k) {
      is_test[members[k]] = true;
    }
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) (is_test[i] ? test_idx : train_idx).push_back(i);
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

double max_noise_ratio(NoiseKind kind, int class_count) {
  // Binary labels are unidentifiable beyond one half.
  if (class_count == 2) return 0.5;
  (void)kind;
  return std::nextafter(1.0, 0.0);
}

Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec) {
  if (!ds.clean_labels) throw ContractError("inject_noise: dataset has no clean labels");
  if (!(spec.ratio >= 0.0) || spec.ratio > max_noise_ratio(spec.kind, ds.class_count)) {
    throw ConfigError("inject_noise: ratio " + std::to_string(spec.ratio) +
                      " outside the allowed range for " + std::to_string(ds.class_count) +
                      " classes");
  }
  const std::size_t n = ds.size();
  const auto corrupt = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(n)));
  if (corrupt == 0) return ds;

  std::mt19937_64 engine(derive_seed(spec.seed, "inject-noise"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), engine);

  std::vector<int> labels = ds.labels;
  std::uniform_int_distribution<int> other(0, ds.class_count - 2);
  for (std::size_t k = 0; k < corrupt; ++k) {
    const std::size_t i = order[k];
    const int clean = (*ds.clean_labels)[i];
    if (spec.kind == NoiseKind::asymmetric) {
      labels[i] = (clean + 1) % ds.class_count;
    } else {
      const int draw = other(engine);
      labels[i] = draw >= clean ? draw + 1 : draw;
    }
  }
  return ds.with_labels(std::move(labels));
}

NoiseEstimate estimate_noise_ratio(const Dataset& ds, const NoiseEstimatorOptions& options) {
  if (ds.size() < 50) throw EstimationError("estimate_noise_ratio: need at least 50 samples");
  if (ds.class_count < 2) throw EstimationError("estimate_noise_ratio: need at least 2 classes");

  std::mt19937_64 engine(derive_seed(options.seed, "noise-estimate-split"));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), engine);
  const std::size_t half = ds.size() / 2;
  const std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());

  std::vector<std::size_t> dims{ds.feature_count()};
  dims.insert(dims.end(), options.hidden.begin(), options.hidden.end());
  dims.push_back(static_cast<std::size_t>(ds.class_count));

  // Only features and observed labels are read here.
  double agree = 0.0;
  std::size_t total = 0;
  auto fold = [&](const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& eval_idx, std::uint64_t fold_id) {
    const Matrix x_train = gather_rows(ds.features, train_idx);
    std::vector<int> y_train;
    for (std::size_t i : train_idx) y_train.push_back(ds.labels[i]);
    TrainOptions train = options.train;
    train.shuffle_seed = derive_seed(options.seed, "noise-estimate-shuffle", fold_id);
    NetworkParameters model =
        fit(init_network(dims, derive_seed(options.seed, "noise-estimate-init", fold_id)),
            x_train, y_train, train);
    const Matrix probs = forward(model, gather_rows(ds.features, eval_idx));
    if (options.agreement == AgreementKind::soft) {
      for (std::size_t k = 0; k < eval_idx.size(); ++k) {
        agree += probs(k, static_cast<std::size_t>(ds.labels[eval_idx[k]]));
      }
    } else {
      const std::vector<int> pred = argmax_rows(probs);
      for (std::size_t k = 0; k < eval_idx.size(); ++k) {
        agree += pred[k] == ds.labels[eval_idx[k]] ? 1.0 : 0.0;
      }
    }
    total += eval_idx.size();
  };
  fold(first, second, 0);
  fold(second, first, 1);

  NoiseEstimate result;
  result.agreement = agree / static_cast<double>(total);
  // Agreement between two independently, symmetrically corrupted copies of
  // the same labels: a = (1 - r)^2 + r^2 / (C - 1). Take the root in
  // [0, (C-1)/C].
  const double c = static_cast<double>(ds.class_count);
  const double k = c / (c - 1.0);
  const double disc = 1.0 - k * (1.0 - result.agreement);
  const double upper = (c - 1.0) / c;
  result.estimate = disc <= 0.0 ? upper : (1.0 - std::sqrt(disc)) / k;
  result.estimate = std::clamp(result.estimate, 0.0, upper);
  if (ds.has_ground_truth()) result.true_ratio = ds.noise_ratio();
  return result;
}

// ---------------------------------------------------------------------------
// CSV: a comment line carrying the class count, a header, then one row per
// sample. An empty clean_label field means "no ground truth".

namespace {

std::string format_double(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                       : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t offset, const char* what) {
  T value{};
  const char* begin = field.data();
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(field) + "'", offset);
  }
  return value;
}

constexpr std::string_view kCsvMagic = "# nlab-dataset v1 classes=";

}  // namespace

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << kCsvMagic << ds.class_count << '\n';
  out << "id,label,clean_label";
  for (std::size_t f = 0; f < ds.feature_count(); ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.ids[i] << ',' << ds.labels[i] << ',';
    if (ds.clean_labels) out << (*ds.clean_labels)[i];
    for (double v : ds.features.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error("failed writing dataset: " + path.string());
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) -> bool {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    line = std::string_view(text).substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    return true;
  };

  std::string_view line;
  std::size_t line_start = 0;
  if (!next_line(line) || !line.starts_with(kCsvMagic)) {
    throw ParseError("missing dataset preamble", 0);
  }
  Dataset ds;
  ds.class_count = parse_number<int>(line.substr(kCsvMagic.size()), kCsvMagic.size(), "class count");

  line_start = pos;
  if (!next_line(line)) throw ParseError("missing header line", line_start);
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "clean_label") {
    throw ParseError("header must start with id,label,clean_label", line_start);
  }
  const std::size_t feature_count = header.size() - 3;

  std::vector<double> values;
  std::vector<int> clean;
  bool any_clean = false;
  bool any_missing_clean = false;
  while (true) {
    line_start = pos;
    if (!next_line(line)) break;
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw ParseError("empty line inside data", line_start);
    }
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_start);
    }
    std::size_t field_offset = line_start;
    ds.ids.push_back(parse_number<std::int64_t>(fields[0], field_offset, "id"));
    field_offset += fields[0].size() + 1;
    ds.labels.push_back(parse_number<int>(fields[1], field_offset, "label"));
    field_offset += fields[1].size() + 1;
    if (fields[2].empty()) {
      any_missing_clean = true;
      clean.push_back(0);
    } else {
      any_clean = true;
      clean.push_back(parse_number<int>(fields[2], field_offset, "clean_label"));
    }
    field_offset += fields[2].size() + 1;
    for (std::size_t f = 3; f < fields.size(); ++f) {
      values.push_back(parse_number<double>(fields[f], field_offset, "feature"));
      field_offset += fields[f].size() + 1;
    }
  }
  if (any_clean && any_missing_clean) {
    throw ParseError("clean_label must be given for all rows or none", 0);
  }
  ds.features.rows = ds.labels.size();
  ds.features.cols = feature_count;
  ds.features.data = std::move(values);
  if (any_clean) ds.clean_labels = std::move(clean);
  ds.refresh_noise_mask();
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Binary: "NLF1", u64 N, u64 F, u64 C, u32 flags (bit 0: clean labels
// present), i64 ids[N], i32 labels[N], [i32 clean[N]], f64 features[N*F].

namespace {
constexpr char kBinaryMagic[5] = "NLF1";
}

void save_dataset_binary(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(kBinaryMagic, 4);
  detail::write_le<std::uint64_t>(out, ds.size());
  detail::write_le<std::uint64_t>(out, ds.feature_count());
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(ds.class_count));
  detail::write_le<std::uint32_t>(out, ds.clean_labels ? 1U : 0U);
  for (std::int64_t id : ds.ids) detail::write_le(out, id);
  for (int y : ds.labels) detail::write_le<std::int32_t>(out, y);
  if (ds.clean_labels) {
    for (int y : *ds.clean_labels) detail::write_le<std::int32_t>(out, y);
  }
  for (double v : ds.features.data) detail::write_le(out, v);
  if (!out) throw Error("failed writing dataset: " + path.string());
}

Dataset load_dataset_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset: " + path.string());
  detail::LeReader r(in);
  r.expect_magic(kBinaryMagic);
  const auto n = r.read<std::uint64_t>("sample count");
  const auto f = r.read<std::uint64_t>("feature count");
  const auto c = r.read<std::uint64_t>("class count");
  const auto flags = r.read<std::uint32_t>("flags");
  if (n > (1ULL << 32) || f > (1ULL << 20) || c > (1ULL << 20) || n * f > (1ULL << 34)) {
    throw ParseError("implausible dataset dimensions", 4);
  }
  if (flags > 1) throw ParseError("unknown flags", r.offset() - 4);
  Dataset ds;
  ds.class_count = static_cast<int>(c);
  ds.ids.resize(n);
  for (auto& id : ds.ids) id = r.read<std::int64_t>("id");
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = r.read<std::int32_t>("label");
  if (flags & 1U) {
    std::vector<int> clean(n);
    for (auto& y : clean) y = r.read<std::int32_t>("clean label");
    ds.clean_labels = std::move(clean);
  }
  ds.features = Matrix(n, f);
  for (double& v : ds.features.data) v = r.read<double>("feature");
  if (!r.at_end()) throw ParseError("trailing bytes after dataset body", r.offset());
  ds.refresh_noise_mask();
  ds.validate();
  return ds;
}

namespace {
bool is_binary_path(const std::filesystem::path& path) {
  const auto ext = path.extension();
  return ext == ".bin" || ext == ".nlf";
}
}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  is_binary_path(path) ? save_dataset_binary(ds, path) : save_dataset_csv(ds, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  return is_binary_path(path) ? load_dataset_binary(path) : load_dataset_csv(path);
}

}  // namespace nlab
