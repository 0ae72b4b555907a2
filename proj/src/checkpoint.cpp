#include "dva/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dva {

namespace {

const std::string kAdamM = "adam.m.";
const std::string kAdamV = "adam.v.";

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  std::ostream& os_;
};

class ByteReader {
 public:
  ByteReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}
  std::uint8_t u8() {
    const int c = is_.get();
    if (c == EOF) throw std::runtime_error("truncated checkpoint " + source_);
    return static_cast<std::uint8_t>(c);
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(u8()) << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) throw std::runtime_error("truncated checkpoint " + source_);
    return s;
  }

 private:
  std::istream& is_;
  std::string source_;
};

void write_tensor(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  if (name.size() > UINT16_MAX) throw std::invalid_argument("tensor name too long");
  if (t.rank() > UINT8_MAX) throw std::invalid_argument("tensor rank too large");
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.data()) w.f32(v);
}

}  // namespace

std::string metadata_text(const Metadata& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("metadata keys/values may not contain '=' or newlines");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

Metadata parse_metadata(const std::string& text) {
  Metadata meta;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed metadata line: " + line);
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

void store_arch(const ArchSpec& arch, Metadata& meta) {
  meta["view"] = std::string(to_string(arch.variant));
  meta["n_actions"] = std::to_string(arch.n_actions);
  meta["frame_size"] = std::to_string(arch.frame_size);
  meta["conv1"] = std::to_string(arch.conv1.channels) + "x" + std::to_string(arch.conv1.kernel) +
                  "s" + std::to_string(arch.conv1.stride);
  meta["conv2"] = std::to_string(arch.conv2.channels) + "x" + std::to_string(arch.conv2.kernel) +
                  "s" + std::to_string(arch.conv2.stride);
  meta["fc_units"] = std::to_string(arch.fc_units);
  meta["lstm_units"] = std::to_string(arch.lstm_units);
}

namespace {

ConvLayerSpec parse_conv(const std::string& s) {
  ConvLayerSpec c{};
  if (std::sscanf(s.c_str(), "%zux%zus%zu", &c.channels, &c.kernel, &c.stride) != 3) {
    throw std::runtime_error("malformed conv spec in checkpoint metadata: " + s);
  }
  return c;
}

}  // namespace

ArchSpec Checkpoint::arch() const {
  auto get = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error(std::string("checkpoint metadata lacks ") + key);
    return it->second;
  };
  ArchSpec a;
  a.variant = parse_view(get("view"));
  a.n_actions = std::stoul(get("n_actions"));
  a.frame_size = std::stoul(get("frame_size"));
  a.conv1 = parse_conv(get("conv1"));
  a.conv2 = parse_conv(get("conv2"));
  a.fc_units = std::stoul(get("fc_units"));
  a.lstm_units = std::stoul(get("lstm_units"));
  return a;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (ckpt.adam && (!ckpt.params.same_layout(ckpt.adam->m) ||
                    !ckpt.params.same_layout(ckpt.adam->v))) {
    throw ShapeError("optimizer state does not mirror parameters");
  }
  std::ostringstream buf(std::ios::binary);
  ByteWriter w(buf);
  buf.write(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  const std::size_t n = ckpt.params.size() * (ckpt.adam ? 3 : 1) + 1;
  w.u32(static_cast<std::uint32_t>(n));
  for (const auto& e : ckpt.params) write_tensor(w, e.name, e.tensor);
  if (ckpt.adam) {
    for (const auto& e : ckpt.adam->m) write_tensor(w, kAdamM + e.name, e.tensor);
    for (const auto& e : ckpt.adam->v) write_tensor(w, kAdamV + e.name, e.tensor);
  }
  Metadata meta = ckpt.meta;
  if (ckpt.adam) meta["adam.step"] = std::to_string(ckpt.adam->step);
  const std::string text = metadata_text(meta);
  std::vector<float> bytes;
  for (unsigned char ch : text) bytes.push_back(static_cast<float>(ch));
  if (bytes.empty()) bytes.push_back(static_cast<float>('\n'));
  const std::size_t n_bytes = bytes.size();
  write_tensor(w, kMetaRecord, Tensor<float>({n_bytes}, std::move(bytes)));

  // write to a sibling file first so readers never observe a partial file
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    const std::string data = buf.str();
    os.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  ByteReader r(is, path.string());
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) {
    throw std::runtime_error(path.string() + " is not a DVA3 checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  ParamSet<float> m, v;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u16());
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<float> data(shape_numel(shape));
    for (float& x : data) x = r.f32();
    Tensor<float> t(std::move(shape), std::move(data));
    if (name == kMetaRecord) {
      std::string text;
      for (float b : t.data()) text.push_back(static_cast<char>(static_cast<unsigned char>(b)));
      ckpt.meta = parse_metadata(text);
    } else if (name.starts_with(kAdamM)) {
      m.add(name.substr(kAdamM.size()), std::move(t));
    } else if (name.starts_with(kAdamV)) {
      v.add(name.substr(kAdamV.size()), std::move(t));
    } else {
      ckpt.params.add(name, std::move(t));
    }
  }
  if (!m.empty() || !v.empty()) {
    AdamState<float> adam{std::move(m), std::move(v), 0};
    if (!ckpt.params.same_layout(adam.m) || !ckpt.params.same_layout(adam.v)) {
      throw std::runtime_error("optimizer state in " + path.string() +
                               " does not mirror the parameters");
    }
    if (auto it = ckpt.meta.find("adam.step"); it != ckpt.meta.end()) {
      adam.step = std::stoull(it->second);
      ckpt.meta.erase(it);
    }
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

}  // namespace dva
