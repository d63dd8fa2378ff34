#include "cscct/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cscct/rng.hpp"

namespace cscct {

namespace {

void validate_spec(const SyntheticSpec& spec) {
  if (spec.num_classes < 1) throw std::invalid_argument("synthetic: num_classes must be ≥ 1");
  if (spec.dim < 1) throw std::invalid_argument("synthetic: dim must be ≥ 1");
  if (spec.per_class_train < 1 || spec.per_class_test < 1) {
    throw std::invalid_argument("synthetic: per-class counts must be positive");
  }
  if (!(spec.within_class_std >= 0.0)) {
    throw std::invalid_argument("synthetic: within_class_std must be non-negative");
  }
  if (!(spec.class_mean_scale >= 0.0)) {
    throw std::invalid_argument("synthetic: class_mean_scale must be non-negative");
  }
}

std::vector<double> sample_in_ball(RandomStream& rng, int dim, double radius) {
  // Direction from a normalized Gaussian, radius via the u^(1/d) transform.
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
  for (auto& x : v) x = x / norm * r;
  return v;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  RngSplitter split(spec.seed);

  auto means_rng = split.stream("synthetic/means");
  std::vector<std::vector<double>> means;
  means.reserve(static_cast<std::size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) {
    means.push_back(sample_in_ball(means_rng, spec.dim, spec.class_mean_scale));
  }

  Dataset out;
  out.num_classes = spec.num_classes;
  out.feature_dim = static_cast<std::size_t>(spec.dim);
  std::int64_t next_id = 0;
  auto emit = [&](std::vector<LabeledExample>& dst, int c, RandomStream& rng, int count) {
    for (int i = 0; i < count; ++i) {
      LabeledExample ex;
      ex.id = next_id++;
      ex.label = c;
      ex.features.resize(static_cast<std::size_t>(spec.dim));
      for (int d = 0; d < spec.dim; ++d) {
        ex.features[static_cast<std::size_t>(d)] =
            means[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] +
            spec.within_class_std * rng.normal();
      }
      dst.push_back(std::move(ex));
    }
  };
  for (int c = 0; c < spec.num_classes; ++c) {
    auto rng = split.stream("synthetic/train/" + std::to_string(c));
    emit(out.train, c, rng, spec.per_class_train);
  }
  for (int c = 0; c < spec.num_classes; ++c) {
    auto rng = split.stream("synthetic/test/" + std::to_string(c));
    emit(out.test, c, rng, spec.per_class_test);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("csv: row " + std::to_string(line_no) + ", column '" + column +
                             "': cannot parse '" + cell + "' as a number");
  }
  while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
  if (used != cell.size()) {
    throw std::runtime_error("csv: row " + std::to_string(line_no) + ", column '" + column +
                             "': cannot parse '" + cell + "' as a number");
  }
  if (!std::isfinite(v)) {
    throw std::runtime_error("csv: row " + std::to_string(line_no) + ", column '" + column +
                             "': non-finite value");
  }
  return v;
}

}  // namespace

CsvLoadResult load_csv_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: '" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);

  std::size_t label_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == schema.label_column) {
      label_col = i;
      break;
    }
  }
  if (label_col == header.size()) {
    throw std::runtime_error("csv: label column '" + schema.label_column + "' not found in '" +
                             path + "'");
  }
  if (header.size() < 2) {
    throw std::runtime_error("csv: '" + path + "' has no feature columns");
  }

  std::vector<LabeledExample> rows;
  std::vector<long long> raw_labels;
  std::size_t line_no = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("csv: row " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " columns, found " +
                               std::to_string(cells.size()));
    }
    LabeledExample ex;
    ex.id = static_cast<std::int64_t>(rows.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = parse_number(cells[i], line_no, header[i]);
      if (i == label_col) {
        const long long lab = static_cast<long long>(std::llround(v));
        if (static_cast<double>(lab) != v) {
          throw std::runtime_error("csv: row " + std::to_string(line_no) + ", column '" +
                                   header[i] + "': label must be an integer");
        }
        raw_labels.push_back(lab);
      } else {
        ex.features.push_back(v);
      }
    }
    rows.push_back(std::move(ex));
  }
  if (rows.empty()) throw std::runtime_error("csv: '" + path + "' has no data rows");

  // Remap labels onto a contiguous 0-based range, smallest original first.
  std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
  CsvLoadResult result;
  int next = 0;
  for (long long lab : distinct) result.label_remap[lab] = next++;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].label = result.label_remap.at(raw_labels[i]);
  }

  result.dataset.train = std::move(rows);
  result.dataset.num_classes = next;
  result.dataset.feature_dim = result.dataset.train.front().features.size();
  return result;
}

TaskStream build_stream(const Dataset& dataset, const StreamProtocol& protocol,
                        std::uint64_t class_order_seed) {
  const int total = dataset.num_classes;
  const int b = protocol.first_task_classes;
  const int c = protocol.per_task_classes;
  if (total < 1) throw std::invalid_argument("build_stream: dataset has no classes");
  if (b < 1 || c < 1) {
    throw std::invalid_argument("build_stream: task sizes must be positive");
  }
  if (b > total) {
    throw std::invalid_argument("build_stream: first task wants " + std::to_string(b) +
                                " classes but the dataset has " + std::to_string(total));
  }
  if (protocol.variant == StreamVariant::kHalfFirst) {
    if (total % 2 != 0 || b != total / 2) {
      throw std::invalid_argument(
          "build_stream: half_first requires first_task_classes == total/2 (total " +
          std::to_string(total) + ", B " + std::to_string(b) + ")");
    }
  } else {
    if (b != c) {
      throw std::invalid_argument("build_stream: equal protocol requires B == C");
    }
  }
  if ((total - b) % c != 0) {
    throw std::invalid_argument("build_stream: remaining " + std::to_string(total - b) +
                                " classes are not divisible into tasks of " +
                                std::to_string(c));
  }

  // Validate labels and group examples by class.
  auto group = [&](const std::vector<LabeledExample>& src) {
    std::vector<std::vector<const LabeledExample*>> by_class(
        static_cast<std::size_t>(total));
    for (const auto& ex : src) {
      if (ex.label < 0 || ex.label >= total) {
        throw std::invalid_argument("build_stream: label " + std::to_string(ex.label) +
                                    " outside [0, " + std::to_string(total) + ")");
      }
      by_class[static_cast<std::size_t>(ex.label)].push_back(&ex);
    }
    return by_class;
  };
  const auto train_by_class = group(dataset.train);
  const auto test_by_class = group(dataset.test);

  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng(class_order_seed);
  rng.shuffle(order);

  TaskStream stream;
  stream.num_classes = total;
  stream.feature_dim = dataset.feature_dim;
  stream.class_order = order;
  const int num_tasks = 1 + (total - b) / c;
  std::size_t cursor = 0;
  for (int t = 1; t <= num_tasks; ++t) {
    Task task;
    task.index = t;
    const int width = (t == 1) ? b : c;
    for (int i = 0; i < width; ++i) {
      const int cls = order[cursor++];
      task.class_set.push_back(cls);
      for (const auto* ex : train_by_class[static_cast<std::size_t>(cls)]) {
        task.train.push_back(*ex);
      }
      for (const auto* ex : test_by_class[static_cast<std::size_t>(cls)]) {
        task.test.push_back(*ex);
      }
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

std::vector<double> Standardizer::apply(const std::vector<double>& features) const {
  if (features.size() != mean.size()) {
    throw std::invalid_argument("standardizer: feature length mismatch");
  }
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out[i] = (features[i] - mean[i]) / std_dev[i];
  }
  return out;
}

Standardizer standardize_stream(TaskStream& stream) {
  if (stream.tasks.empty()) throw std::invalid_argument("standardize_stream: empty stream");
  const auto& base = stream.tasks.front().train;
  if (base.empty()) throw std::invalid_argument("standardize_stream: task 1 has no train data");
  const std::size_t dim = base.front().features.size();

  Standardizer s;
  s.mean.assign(dim, 0.0);
  s.std_dev.assign(dim, 0.0);
  for (const auto& ex : base) {
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += ex.features[d];
  }
  for (std::size_t d = 0; d < dim; ++d) s.mean[d] /= static_cast<double>(base.size());
  for (const auto& ex : base) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = ex.features[d] - s.mean[d];
      s.std_dev[d] += diff * diff;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    s.std_dev[d] = std::sqrt(s.std_dev[d] / static_cast<double>(base.size()));
    if (s.std_dev[d] == 0.0) s.std_dev[d] = 1.0;
  }

  for (auto& task : stream.tasks) {
    for (auto& ex : task.train) ex.features = s.apply(ex.features);
    for (auto& ex : task.test) ex.features = s.apply(ex.features);
  }
  return s;
}

}  // namespace cscct
