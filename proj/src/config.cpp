#include "cscct/config.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cscct {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cur = trim(cur);
  if (!cur.empty()) out.push_back(cur);
  return out;
}

class FieldReader {
 public:
  explicit FieldReader(const IniData& data) : data_(data) {}

  bool has(const std::string& section, const std::string& key) const {
    auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) > 0;
  }

  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    auto s = data_.find(section);
    if (s == data_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }

  std::string require(const std::string& section, const std::string& key) const {
    if (!has(section, key)) {
      throw std::invalid_argument("config: missing required field [" + section + "] " + key);
    }
    return str(section, key, "");
  }

  double number(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = str(section, key, "");
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: [" + section + "] " + key + " = '" + raw +
                                  "' is not a number");
    }
  }

  long long integer(const std::string& section, const std::string& key,
                    long long fallback) const {
    const double v = number(section, key, static_cast<double>(fallback));
    const long long i = static_cast<long long>(std::llround(v));
    if (static_cast<double>(i) != v) {
      throw std::invalid_argument("config: [" + section + "] " + key + " must be an integer");
    }
    return i;
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = str(section, key, "");
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    throw std::invalid_argument("config: [" + section + "] " + key + " = '" + raw +
                                "' is not a boolean");
  }

 private:
  const IniData& data_;
};

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string preset_name(MethodPreset preset) {
  switch (preset) {
    case MethodPreset::kFinetuneReplay: return "finetune_replay";
    case MethodPreset::kBaseKd: return "base_kd";
    case MethodPreset::kBaseKdCsc: return "base_kd+csc";
    case MethodPreset::kBaseKdCt: return "base_kd+ct";
    case MethodPreset::kBaseKdCscct: return "base_kd+cscct";
  }
  throw std::logic_error("preset_name: unknown preset");
}

MethodPreset parse_preset(const std::string& name) {
  if (name == "finetune_replay") return MethodPreset::kFinetuneReplay;
  if (name == "base_kd") return MethodPreset::kBaseKd;
  if (name == "base_kd+csc") return MethodPreset::kBaseKdCsc;
  if (name == "base_kd+ct") return MethodPreset::kBaseKdCt;
  if (name == "base_kd+cscct") return MethodPreset::kBaseKdCscct;
  throw std::invalid_argument(
      "config: unknown preset '" + name +
      "' (expected finetune_replay, base_kd, base_kd+csc, base_kd+ct, base_kd+cscct)");
}

std::string DatasetSource::describe() const {
  if (kind == Kind::kCsv) {
    return "csv:path=" + csv_path + ",label=" + csv_schema.label_column;
  }
  std::ostringstream os;
  os << "synthetic:classes=" << synthetic.num_classes << ",dim=" << synthetic.dim
     << ",train=" << synthetic.per_class_train << ",test=" << synthetic.per_class_test
     << ",scale=" << format_number(synthetic.class_mean_scale)
     << ",std=" << format_number(synthetic.within_class_std);
  return os.str();
}

IniData parse_ini_text(const std::string& text, const std::string& origin) {
  IniData data;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                    ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      data[section];
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    data[section][key] = value;
  }
  return data;
}

IniData parse_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_ini_text(text, path);
}

void ExperimentConfig::apply_preset() {
  switch (preset) {
    case MethodPreset::kFinetuneReplay:
      train.weights.alpha = train.weights.beta = train.weights.base_kd_weight = 0.0;
      break;
    case MethodPreset::kBaseKd:
      train.weights.alpha = train.weights.beta = 0.0;
      break;
    case MethodPreset::kBaseKdCsc:
      train.weights.beta = 0.0;
      break;
    case MethodPreset::kBaseKdCt:
      train.weights.alpha = 0.0;
      break;
    case MethodPreset::kBaseKdCscct:
      break;
  }
}

void ExperimentConfig::validate() const {
  if (dataset.kind == DatasetSource::Kind::kSynthetic) {
    if (dataset.synthetic.num_classes < 1) {
      throw std::invalid_argument("config: [dataset] num_classes must be ≥ 1");
    }
  } else if (dataset.csv_path.empty() || dataset.csv_schema.label_column.empty()) {
    throw std::invalid_argument("config: [dataset] csv path and label_column are required");
  }
  if (protocol.first_task_classes < 1 || protocol.per_task_classes < 1) {
    throw std::invalid_argument("config: [protocol] task sizes must be positive");
  }
  if (hidden.empty()) {
    throw std::invalid_argument("config: [model] hidden must name at least one width");
  }
  for (std::size_t w : hidden) {
    if (w == 0) throw std::invalid_argument("config: [model] hidden widths must be positive");
  }
  if (feature_dim == 0) {
    throw std::invalid_argument("config: [model] feature_dim must be positive");
  }
  if (exemplars_per_class < 1) {
    throw std::invalid_argument("config: [memory] exemplars_per_class must be ≥ 1");
  }
  if (seeds.empty()) throw std::invalid_argument("config: [run] seeds must not be empty");
  if (output_dir.empty()) throw std::invalid_argument("config: [run] output_dir is required");
  train.validate();

  const auto& w = train.weights;
  switch (preset) {
    case MethodPreset::kFinetuneReplay:
      if (w.alpha != 0.0 || w.beta != 0.0 || w.base_kd_weight != 0.0) {
        throw std::invalid_argument("config: finetune_replay forces alpha=beta=base_kd=0");
      }
      break;
    case MethodPreset::kBaseKd:
      if (w.alpha != 0.0 || w.beta != 0.0) {
        throw std::invalid_argument("config: base_kd forces alpha=beta=0");
      }
      break;
    case MethodPreset::kBaseKdCsc:
      if (w.beta != 0.0) throw std::invalid_argument("config: base_kd+csc forces beta=0");
      break;
    case MethodPreset::kBaseKdCt:
      if (w.alpha != 0.0) throw std::invalid_argument("config: base_kd+ct forces alpha=0");
      break;
    case MethodPreset::kBaseKdCscct:
      break;
  }
}

std::string ExperimentConfig::canonical_string() const {
  std::map<std::string, std::string> kv;
  kv["dataset"] = dataset.describe();
  kv["protocol.variant"] =
      protocol.variant == StreamVariant::kHalfFirst ? "half_first" : "equal";
  kv["protocol.first_task_classes"] = std::to_string(protocol.first_task_classes);
  kv["protocol.per_task_classes"] = std::to_string(protocol.per_task_classes);
  {
    std::string h;
    for (std::size_t w : hidden) h += (h.empty() ? "" : ",") + std::to_string(w);
    kv["model.hidden"] = h;
  }
  kv["model.feature_dim"] = std::to_string(feature_dim);
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.learning_rate"] = format_number(train.learning_rate);
  {
    std::string m;
    for (int v : train.lr_decay_milestones) m += (m.empty() ? "" : ",") + std::to_string(v);
    kv["train.lr_decay_milestones"] = m;
  }
  kv["train.lr_decay_factor"] = format_number(train.lr_decay_factor);
  kv["train.weight_decay"] = format_number(train.weight_decay);
  kv["train.momentum"] = format_number(train.momentum);
  kv["train.classifier"] = train.classifier == ClassifierMode::kNme ? "nme" : "linear";
  kv["train.ct_detach_q"] = train.ct_detach_q ? "true" : "false";
  kv["loss.alpha"] = format_number(train.weights.alpha);
  kv["loss.beta"] = format_number(train.weights.beta);
  kv["loss.temperature"] = format_number(train.weights.temperature);
  kv["loss.base_kd_weight"] = format_number(train.weights.base_kd_weight);
  kv["memory.exemplars_per_class"] = std::to_string(exemplars_per_class);
  kv["run.preset"] = preset_name(preset);
  {
    std::string s;
    for (std::uint64_t v : seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
    kv["run.seeds"] = s;
  }
  kv["run.emit_embeddings"] = emit_embeddings ? "true" : "false";

  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  return os.str();
}

std::string ExperimentConfig::config_hash() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(canonical_string()));
  return buf;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  const IniData data = parse_ini(path);
  const FieldReader fields(data);
  ExperimentConfig config;

  const std::string kind = fields.str("dataset", "type", "synthetic");
  if (kind == "synthetic") {
    config.dataset.kind = DatasetSource::Kind::kSynthetic;
    auto& spec = config.dataset.synthetic;
    spec.num_classes = static_cast<int>(fields.integer("dataset", "num_classes", 10));
    spec.dim = static_cast<int>(fields.integer("dataset", "dim", 16));
    spec.per_class_train = static_cast<int>(fields.integer("dataset", "per_class_train", 60));
    spec.per_class_test = static_cast<int>(fields.integer("dataset", "per_class_test", 40));
    spec.class_mean_scale = fields.number("dataset", "class_mean_scale", 3.0);
    spec.within_class_std = fields.number("dataset", "within_class_std", 1.0);
  } else if (kind == "csv") {
    config.dataset.kind = DatasetSource::Kind::kCsv;
    config.dataset.csv_path = fields.require("dataset", "path");
    config.dataset.csv_schema.label_column = fields.require("dataset", "label_column");
  } else {
    throw std::invalid_argument("config: [dataset] type must be 'synthetic' or 'csv'");
  }

  const std::string variant = fields.str("protocol", "variant", "equal");
  if (variant == "equal") {
    config.protocol.variant = StreamVariant::kEqual;
  } else if (variant == "half_first") {
    config.protocol.variant = StreamVariant::kHalfFirst;
  } else {
    throw std::invalid_argument("config: [protocol] variant must be 'equal' or 'half_first'");
  }
  config.protocol.per_task_classes =
      static_cast<int>(fields.integer("protocol", "per_task_classes", 2));
  config.protocol.first_task_classes = static_cast<int>(fields.integer(
      "protocol", "first_task_classes",
      config.protocol.variant == StreamVariant::kEqual ? config.protocol.per_task_classes
                                                       : 0));

  auto parse_list_entry = [](const std::string& entry, const char* field) -> long long {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(entry, &used);
      if (used != entry.size()) throw std::invalid_argument(entry);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("config: ") + field + " entry '" + entry +
                                  "' is not an integer");
    }
  };

  config.hidden.clear();
  for (const auto& w : split_list(fields.str("model", "hidden", "64"))) {
    const long long v = parse_list_entry(w, "[model] hidden");
    if (v < 1) throw std::invalid_argument("config: [model] hidden widths must be positive");
    config.hidden.push_back(static_cast<std::size_t>(v));
  }
  config.feature_dim = static_cast<std::size_t>(fields.integer("model", "feature_dim", 32));

  auto& train = config.train;
  train.epochs = static_cast<int>(fields.integer("train", "epochs", 60));
  train.batch_size = static_cast<int>(fields.integer("train", "batch_size", 32));
  train.learning_rate = fields.number("train", "learning_rate", 0.05);
  train.lr_decay_milestones.clear();
  for (const auto& m : split_list(fields.str("train", "lr_decay_milestones", "30,45"))) {
    train.lr_decay_milestones.push_back(
        static_cast<int>(parse_list_entry(m, "[train] lr_decay_milestones")));
  }
  train.lr_decay_factor = fields.number("train", "lr_decay_factor", 0.1);
  train.weight_decay = fields.number("train", "weight_decay", 5e-4);
  train.momentum = fields.number("train", "momentum", 0.9);
  const std::string classifier = fields.str("train", "classifier", "nme");
  if (classifier == "nme") {
    train.classifier = ClassifierMode::kNme;
  } else if (classifier == "linear") {
    train.classifier = ClassifierMode::kLinear;
  } else {
    throw std::invalid_argument("config: [train] classifier must be 'nme' or 'linear'");
  }
  train.ct_detach_q = fields.boolean("train", "ct_detach_q", false);

  train.weights.alpha = fields.number("loss", "alpha", 0.3);
  train.weights.beta = fields.number("loss", "beta", 0.3);
  train.weights.temperature = fields.number("loss", "temperature", 2.0);
  train.weights.base_kd_weight = fields.number("loss", "base_kd_weight", 1.0);

  config.exemplars_per_class =
      static_cast<int>(fields.integer("memory", "exemplars_per_class", 20));

  config.preset = parse_preset(fields.str("run", "preset", "base_kd+cscct"));
  config.output_dir = fields.str("run", "output_dir", "out/run");
  config.seeds.clear();
  for (const auto& s : split_list(fields.str("run", "seeds", "1"))) {
    const long long v = parse_list_entry(s, "[run] seeds");
    if (v < 0) throw std::invalid_argument("config: [run] seeds must be non-negative");
    config.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  config.emit_embeddings = fields.boolean("run", "emit_embeddings", false);

  config.apply_preset();
  config.validate();
  return config;
}

}  // namespace cscct
