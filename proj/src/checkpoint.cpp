#include "meshsmile/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "meshsmile/errors.hpp"

namespace meshsmile {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'W', 'T'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& data;
  const std::string& path;
  std::size_t pos = 0;

  void need(std::size_t n, ErrorKind kind) {
    require(pos + n <= data.size(), kind, path + ": file ends early");
  }
  std::uint16_t u16() {
    need(2, ErrorKind::MalformedHeader);
    std::uint16_t v = static_cast<std::uint8_t>(data[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(data[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32(ErrorKind kind) {
    need(4, kind);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32(ErrorKind::TruncatedPayload);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string text(std::uint32_t n) {
    need(n, ErrorKind::TruncatedPayload);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(ParamStore& store, const std::string& path) {
  std::string bytes;
  bytes.append(kMagic, 4);
  put_u16(bytes, kVersion);
  put_u32(bytes, static_cast<std::uint32_t>(store.count()));
  for (Parameter* p : store.all()) {
    put_u32(bytes, static_cast<std::uint32_t>(p->name.size()));
    bytes.append(p->name);
    put_u32(bytes, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t e : p->value.shape()) put_u32(bytes, static_cast<std::uint32_t>(e));
    for (std::size_t i = 0; i < p->value.size(); ++i)
      put_f32(bytes, static_cast<float>(p->value[i]));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoFailure, path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::IoFailure, path + ": write failed");
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::IoFailure, path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = std::move(buf).str();

  Reader r{data, path};
  r.need(4, ErrorKind::MalformedHeader);
  require(std::memcmp(data.data(), kMagic, 4) == 0, ErrorKind::MalformedHeader,
          path + ": bad magic bytes");
  r.pos = 4;
  const std::uint16_t version = r.u16();
  require(version == kVersion, ErrorKind::MalformedHeader,
          path + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32(ErrorKind::MalformedHeader);
  require(count == store.count(), ErrorKind::ShapeMismatch,
          path + ": holds " + std::to_string(count) + " parameters, model has " +
              std::to_string(store.count()));

  std::set<std::string> filled;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32(ErrorKind::TruncatedPayload);
    const std::string name = r.text(name_len);
    Parameter* p = store.find(name);
    require(p != nullptr, ErrorKind::ShapeMismatch, path + ": unknown parameter " + name);
    require(filled.insert(name).second, ErrorKind::MalformedHeader,
            path + ": duplicate parameter " + name);
    const std::uint32_t rank = r.u32(ErrorKind::TruncatedPayload);
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = r.u32(ErrorKind::TruncatedPayload);
    require(shape == p->value.shape(), ErrorKind::ShapeMismatch,
            path + ": shape mismatch for " + name);
    for (std::size_t v = 0; v < p->value.size(); ++v)
      p->value[v] = static_cast<double>(r.f32());
  }
}

}  // namespace meshsmile
