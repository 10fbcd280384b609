#include "trajcast/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace trajcast {

namespace {

constexpr char kMagic[8] = {'T', 'J', 'C', 'A', 'S', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) const {
    TRAJCAST_CHECK(pos + n <= data.size(), ErrorCode::Parse, path + ": truncated checkpoint");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(data[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(data[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

void append_tensor_data(std::string& buf, const ad::Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(buf, static_cast<float>(m(i, j)));
}

void read_tensor_data(Reader& r, ad::Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(r.f32());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  TRAJCAST_CHECK(in.good(), ErrorCode::Io, "cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

CheckpointState read_header(Reader& r) {
  const std::string magic = r.bytes(8);
  TRAJCAST_CHECK(std::memcmp(magic.data(), kMagic, 8) == 0, ErrorCode::Parse,
                 r.path + ": not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  TRAJCAST_CHECK(version == kVersion, ErrorCode::Parse,
                 r.path + ": unsupported checkpoint version " + std::to_string(version));
  CheckpointState st;
  st.config_text = r.bytes(r.u32());
  return st;
}

}  // namespace

void save_checkpoint(const std::string& path, const ad::ParamStore& store,
                     const CheckpointState& state) {
  std::string buf;
  buf.reserve(1 << 20);
  buf.append(kMagic, 8);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(state.config_text.size()));
  buf.append(state.config_text);

  put_u32(buf, static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(static_cast<int>(i));
    TRAJCAST_CHECK(e.name.size() < 0x10000, ErrorCode::InvalidArgument,
                   "tensor name too long: " + e.name);
    put_u16(buf, static_cast<std::uint16_t>(e.name.size()));
    buf.append(e.name);
    put_u32(buf, static_cast<std::uint32_t>(e.value.rows()));
    put_u32(buf, static_cast<std::uint32_t>(e.value.cols()));
    append_tensor_data(buf, e.value);
  }

  put_u32(buf, static_cast<std::uint32_t>(state.epoch));
  put_u64(buf, static_cast<std::uint64_t>(state.global_step));
  buf.push_back(state.has_opt_state ? 1 : 0);
  if (state.has_opt_state) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& e = store.entry(static_cast<int>(i));
      append_tensor_data(buf, e.m);
      append_tensor_data(buf, e.v);
    }
  }

  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    TRAJCAST_CHECK(out.good(), ErrorCode::Io, "cannot write checkpoint: " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    TRAJCAST_CHECK(out.good(), ErrorCode::Io, "short write: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  TRAJCAST_CHECK(!ec, ErrorCode::Io, "cannot move checkpoint into place: " + path);
}

CheckpointState load_checkpoint(const std::string& path, ad::ParamStore& store) {
  const std::string data = slurp(path);
  Reader r{data, 0, path};
  CheckpointState st = read_header(r);

  const std::uint32_t n = r.u32();
  TRAJCAST_CHECK(n == store.size(), ErrorCode::ShapeMismatch,
                 path + ": tensor count does not match the model registry");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& e = store.entry(static_cast<int>(i));
    const std::string name = r.bytes(r.u16());
    TRAJCAST_CHECK(name == e.name, ErrorCode::ShapeMismatch,
                   path + ": tensor '" + name + "' does not match registry entry '" + e.name + "'");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    TRAJCAST_CHECK(rows == e.value.rows() && cols == e.value.cols(), ErrorCode::ShapeMismatch,
                   path + ": tensor '" + name + "' shape mismatch");
    read_tensor_data(r, e.value);
  }

  st.epoch = static_cast<int>(r.u32());
  st.global_step = static_cast<std::int64_t>(r.u64());
  st.has_opt_state = r.bytes(1)[0] != 0;
  if (st.has_opt_state) {
    for (std::uint32_t i = 0; i < n; ++i) {
      auto& e = store.entry(static_cast<int>(i));
      read_tensor_data(r, e.m);
      read_tensor_data(r, e.v);
    }
  }
  TRAJCAST_CHECK(r.pos == data.size(), ErrorCode::Parse, path + ": trailing bytes in checkpoint");
  return st;
}

CheckpointState peek_checkpoint(const std::string& path) {
  const std::string data = slurp(path);
  Reader r{data, 0, path};
  return read_header(r);
}

}  // namespace trajcast
