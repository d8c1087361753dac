#include "pgds/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "pgds/common.hpp"
#include "pgds/config.hpp"

namespace pgds {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'D', 'S', 'C', 'K', 'P', '1'};

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
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in, std::size_t max_len) {
  const std::uint64_t len = get_u64(in);
  PGDS_CHECK_IO(in.good() && len <= max_len, "checkpoint: string length out of range");
  std::string s(static_cast<std::size_t>(len), '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  PGDS_CHECK_IO(out.good(), "cannot write checkpoint ", path);
  out.write(kMagic, 8);
  put_u32(out, data.version);
  put_u32(out, data.kind);
  put_str(out, data.config_text);
  put_u64(out, data.seed);
  put_u32(out, static_cast<std::uint32_t>(data.epoch));
  put_u64(out, static_cast<std::uint64_t>(data.step));
  out.put(data.pose_frozen ? '\1' : '\0');
  put_u64(out, data.tensors.size());
  for (const auto& [name, t] : data.tensors) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) put_u64(out, t.dim(i));
    // IEEE754 doubles, little-endian host layout.
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  PGDS_CHECK_IO(out.good(), "short write on checkpoint ", path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  PGDS_CHECK_IO(in.good(), "cannot open checkpoint ", path);
  char magic[8];
  in.read(magic, 8);
  PGDS_CHECK_IO(in.good() && std::memcmp(magic, kMagic, 8) == 0,
                "not a checkpoint file: ", path);
  CheckpointData data;
  data.version = get_u32(in);
  PGDS_CHECK_IO(data.version == 1, "unsupported checkpoint version ", data.version);
  data.kind = get_u32(in);
  data.config_text = get_str(in, 1 << 20);
  data.seed = get_u64(in);
  data.epoch = static_cast<std::int32_t>(get_u32(in));
  data.step = static_cast<std::int64_t>(get_u64(in));
  data.pose_frozen = in.get() == 1;
  const std::uint64_t count = get_u64(in);
  PGDS_CHECK_IO(in.good() && count < (1ULL << 20), "checkpoint tensor count out of range");
  data.tensors.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_str(in, 4096);
    const std::uint32_t rank = get_u32(in);
    PGDS_CHECK_IO(rank <= 8, "checkpoint tensor rank out of range");
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<std::size_t>(get_u64(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    PGDS_CHECK_IO(in.good(), "truncated checkpoint tensor ", name, " in ", path);
    data.tensors.emplace_back(name, std::move(t));
  }
  return data;
}

void pack_params(const std::vector<ParamRef>& refs,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  for (const auto& r : refs) out.emplace_back(r.name, *r.value);
}

void unpack_params(const CheckpointData& data, const std::vector<ParamRef>& refs) {
  for (const auto& r : refs) {
    const Tensor* t = data.find(r.name);
    PGDS_CHECK_IO(t, "checkpoint is missing tensor ", r.name);
    PGDS_CHECK_IO(t->same_shape(*r.value), "checkpoint tensor ", r.name,
                  " has mismatched shape");
    *r.value = *t;
  }
}

void save_pose_checkpoint(const std::string& path, PoseEncoder& enc, std::uint64_t seed) {
  CheckpointData data;
  data.kind = 1;
  std::ostringstream cfg;
  cfg << "[pose]\njoints = " << enc.joints() << "\nembedding_dim = " << enc.embedding_dim()
      << "\n";
  data.config_text = cfg.str();
  data.seed = seed;
  data.pose_frozen = enc.frozen();
  pack_params(enc.all_params(), data.tensors);
  save_checkpoint(path, data);
}

std::unique_ptr<PoseEncoder> load_pose_checkpoint(const std::string& path) {
  const CheckpointData data = load_checkpoint(path);
  PGDS_CHECK_IO(data.kind == 1, "checkpoint ", path, " does not hold a pose encoder");
  const auto kv = parse_ini(data.config_text);
  const auto joints_it = kv.find("pose.joints");
  const auto dim_it = kv.find("pose.embedding_dim");
  PGDS_CHECK_IO(joints_it != kv.end() && dim_it != kv.end(),
                "pose checkpoint lacks architecture keys");
  auto enc = std::make_unique<PoseEncoder>(std::stoi(joints_it->second),
                                           std::stoi(dim_it->second));
  unpack_params(data, enc->all_params());
  enc->set_frozen(data.pose_frozen);
  return enc;
}

}  // namespace pgds
