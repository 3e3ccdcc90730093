#include "aircast/serialize.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aircast/ingest.hpp"

namespace aircast {

namespace {

constexpr char kMagic[6] = {'C', 'R', 'N', 'N', 'W', '1'};
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("weight container: truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("weight container: truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void payload_bytes(double v, unsigned char* b) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
}

double payload_value(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= kFnvPrime;
  }
  return h;
}

void write_weight_container(std::ostream& out, const std::vector<Param>& entries) {
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t checksum = kFnvOffset;
  for (const auto& p : entries) {
    if (p.name.empty()) throw DataError("weight container: parameter names must be nonempty");
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d = 0; d < p.value.rank(); ++d) put_u64(out, p.value.dim(d));
    unsigned char b[8];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      payload_bytes(p.value[i], b);
      checksum = fnv1a64(b, 8, checksum);
      out.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  put_u32(out, 0);  // end of entries
  put_u64(out, checksum);
}

std::vector<Param> read_weight_container(std::istream& in) {
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
    throw DataError("weight container: bad magic (expected CRNNW1)");
  std::vector<Param> entries;
  std::uint64_t checksum = kFnvOffset;
  while (true) {
    const std::uint32_t name_len = get_u32(in);
    if (name_len == 0) break;
    if (name_len > 4096) throw DataError("weight container: implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("weight container: truncated name");
    const std::uint32_t rank = get_u32(in);
    if (rank > 5) throw DataError("weight container: rank > 5");
    std::vector<std::size_t> shape;
    shape.reserve(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<std::size_t>(get_u64(in)));
    Tensor value(shape);
    unsigned char b[8];
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (!in.read(reinterpret_cast<char*>(b), 8))
        throw DataError("weight container: truncated payload for " + name);
      checksum = fnv1a64(b, 8, checksum);
      value[i] = payload_value(b);
    }
    entries.push_back({std::move(name), std::move(value)});
  }
  const std::uint64_t stored = get_u64(in);
  if (stored != checksum)
    throw DataError("weight container: checksum mismatch (file corrupt)");
  return entries;
}

namespace {

std::string format_double_meta(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::map<std::string, std::string> parse_meta_block(const std::string& text) {
  std::map<std::string, std::string> fields;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    fields[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return fields;
}

double meta_double(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("model file: missing metadata key '" + key + "'");
  return std::stod(it->second);
}

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
  return static_cast<int>(meta_double(meta, key));
}

}  // namespace

void save_frame_model(const std::string& path, const FrameModel& model, bool with_timestamp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open model file for writing: " + path);

  std::vector<Param> entries = model.params;
  if (model.kind == FrameModelKind::Crnn) {
    entries.push_back({"state.bn.running_mean", model.bn.running_mean});
    entries.push_back({"state.bn.running_var", model.bn.running_var});
    if (!model.crnn.geography.empty())
      entries.push_back({"static.geography", model.crnn.geography});
  }
  write_weight_container(out, entries);

  std::ostringstream meta;
  meta << "kind = " << to_string(model.kind) << '\n';
  meta << "rows = " << model.rows() << '\n';
  meta << "cols = " << model.cols() << '\n';
  meta << "t_in = " << model.t_in() << '\n';
  if (model.kind == FrameModelKind::Crnn) {
    meta << "block_filters = " << model.crnn.block_filters << '\n';
    meta << "penultimate_filters = " << model.crnn.penultimate_filters << '\n';
    meta << "kernel = " << model.crnn.kernel << '\n';
    meta << "bn_eps = " << format_double_meta(model.crnn.bn_eps) << '\n';
    meta << "bn_momentum = " << format_double_meta(model.crnn.bn_momentum) << '\n';
  } else {
    meta << "filters = " << model.comp.filters << '\n';
    meta << "hidden = " << model.comp.hidden << '\n';
    meta << "kernel = " << model.comp.kernel << '\n';
  }
  meta << "theta_max = " << format_double_meta(model.theta_max) << '\n';
  meta << "seed = " << model.seed << '\n';
  if (with_timestamp) {
    const auto now = std::chrono::system_clock::now();
    meta << "created_at = "
         << format_iso8601_utc(std::chrono::duration_cast<std::chrono::seconds>(
                                   now.time_since_epoch())
                                   .count())
         << '\n';
  }
  const std::string block = meta.str();
  out.write("META", 4);
  put_u32(out, static_cast<std::uint32_t>(block.size()));
  out.write(block.data(), static_cast<std::streamsize>(block.size()));
  if (!out) throw DataError("failed writing model file: " + path);
}

namespace {

std::map<std::string, std::string> read_meta_trailer(std::istream& in, const std::string& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "META", 4) != 0)
    throw DataError("model file: missing metadata trailer: " + path);
  const std::uint32_t len = get_u32(in);
  std::string block(len, '\0');
  if (!in.read(block.data(), len)) throw DataError("model file: truncated metadata: " + path);
  return parse_meta_block(block);
}

}  // namespace

FrameModel load_frame_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  std::vector<Param> entries = read_weight_container(in);
  auto meta = read_meta_trailer(in, path);

  auto kind_it = meta.find("kind");
  if (kind_it == meta.end()) throw DataError("model file: missing kind");
  auto kind = frame_model_kind_from(kind_it->second);
  if (!kind) throw DataError("model file: unknown kind '" + kind_it->second + "'");

  const auto seed = static_cast<std::uint64_t>(std::stoull(meta.at("seed")));
  FrameModel model;
  if (*kind == FrameModelKind::Crnn) {
    CrnnConfig cfg;
    cfg.rows = meta_int(meta, "rows");
    cfg.cols = meta_int(meta, "cols");
    cfg.t_in = meta_int(meta, "t_in");
    cfg.block_filters = meta_int(meta, "block_filters");
    cfg.penultimate_filters = meta_int(meta, "penultimate_filters");
    cfg.kernel = meta_int(meta, "kernel");
    cfg.bn_eps = meta_double(meta, "bn_eps");
    cfg.bn_momentum = meta_double(meta, "bn_momentum");
    for (const auto& e : entries)
      if (e.name == "static.geography") cfg.geography = e.value;
    model = build_crnn(cfg, seed);
  } else {
    ComparatorConfig cfg;
    cfg.kind = *kind;
    cfg.rows = meta_int(meta, "rows");
    cfg.cols = meta_int(meta, "cols");
    cfg.t_in = meta_int(meta, "t_in");
    cfg.filters = meta_int(meta, "filters");
    cfg.hidden = meta_int(meta, "hidden");
    cfg.kernel = meta_int(meta, "kernel");
    model = build_comparator(cfg, seed);
  }
  model.theta_max = meta_double(meta, "theta_max");

  // overlay stored tensors onto the freshly built layout
  std::map<std::string, const Tensor*> stored;
  for (const auto& e : entries) stored[e.name] = &e.value;
  for (auto& p : model.params) {
    auto it = stored.find(p.name);
    if (it == stored.end())
      throw DataError("model file: missing parameter '" + p.name + "'");
    if (!p.value.same_shape(*it->second))
      throw DataError("model file: shape mismatch for parameter '" + p.name + "'");
    p.value = *it->second;
  }
  if (model.kind == FrameModelKind::Crnn) {
    auto rm = stored.find("state.bn.running_mean");
    auto rv = stored.find("state.bn.running_var");
    if (rm == stored.end() || rv == stored.end())
      throw DataError("model file: missing batch-norm state");
    model.bn.running_mean = *rm->second;
    model.bn.running_var = *rv->second;
  }
  return model;
}

std::map<std::string, std::string> read_model_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  read_weight_container(in);
  return read_meta_trailer(in, path);
}

}  // namespace aircast
