#include "cscct/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cscct {

namespace {

// Explicit little-endian encoding, independent of host byte order.

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void put_i64(std::ostream& out, std::int64_t v) {
  put_u64(out, static_cast<std::uint64_t>(v));
}

void put_i32(std::ostream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_f64_vec(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  for (double x : v) put_f64(out, x);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_u64(in)); }
std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_u32(in)); }

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::vector<double> get_f64_vec(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  std::vector<double> v(n);
  for (auto& x : v) x = get_f64(in);
  return v;
}

void put_layer(std::ostream& out, const Layer& layer) {
  put_u64(out, layer.in);
  put_u64(out, layer.out);
  put_f64_vec(out, layer.w);
  put_f64_vec(out, layer.b);
}

Layer get_layer(std::istream& in) {
  Layer layer;
  layer.in = get_u64(in);
  layer.out = get_u64(in);
  layer.w = get_f64_vec(in);
  layer.b = get_f64_vec(in);
  if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out) {
    throw std::runtime_error("checkpoint: inconsistent layer dimensions");
  }
  return layer;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");

  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, checkpoint.config_hash);
  put_u64(out, checkpoint.master_seed);
  put_i32(out, checkpoint.phase);

  put_f64_vec(out, checkpoint.standardizer.mean);
  put_f64_vec(out, checkpoint.standardizer.std_dev);

  put_u64(out, checkpoint.remap.order.size());
  for (int cls : checkpoint.remap.order) put_i32(out, cls);

  const Model& m = checkpoint.model;
  put_u64(out, m.input_dim);
  put_u64(out, m.feature_dim);
  put_u64(out, m.extractor.size());
  for (const auto& layer : m.extractor) put_layer(out, layer);
  put_layer(out, m.classifier);

  put_i32(out, checkpoint.exemplar_budget);
  put_u64(out, checkpoint.exemplar_ids.size());
  for (const auto& [cls, ids] : checkpoint.exemplar_ids) {
    put_i32(out, cls);
    put_u64(out, ids.size());
    for (std::int64_t id : ids) put_i64(out, id);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: '" + path + "' has a bad magic header");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }

  Checkpoint checkpoint;
  checkpoint.config_hash = get_u64(in);
  checkpoint.master_seed = get_u64(in);
  checkpoint.phase = get_i32(in);

  checkpoint.standardizer.mean = get_f64_vec(in);
  checkpoint.standardizer.std_dev = get_f64_vec(in);

  const std::uint64_t n_classes = get_u64(in);
  std::vector<int> order(n_classes);
  for (auto& cls : order) cls = get_i32(in);
  checkpoint.remap.append_classes(order);

  Model& m = checkpoint.model;
  m.input_dim = get_u64(in);
  m.feature_dim = get_u64(in);
  const std::uint64_t n_layers = get_u64(in);
  for (std::uint64_t i = 0; i < n_layers; ++i) m.extractor.push_back(get_layer(in));
  m.classifier = get_layer(in);

  checkpoint.exemplar_budget = get_i32(in);
  const std::uint64_t n_mem = get_u64(in);
  for (std::uint64_t i = 0; i < n_mem; ++i) {
    const int cls = get_i32(in);
    const std::uint64_t count = get_u64(in);
    auto& ids = checkpoint.exemplar_ids[cls];
    ids.resize(count);
    for (auto& id : ids) id = get_i64(in);
  }
  return checkpoint;
}

}  // namespace cscct
