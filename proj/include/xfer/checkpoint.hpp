#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xfer/errors.hpp"
#include "xfer/net.hpp"
#include "xfer/rng.hpp"

namespace xfer {

inline constexpr char kCheckpointMagic[8] = {'X', 'F', 'R', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Provenance {
  std::string init_mode;                   // "random" for pretraining, else the run's init mode
  std::optional<std::string> source_task;  // task the weights were (pre)trained on
  std::uint64_t seed = 0;
  int epochs = 0;

  bool operator==(const Provenance&) const = default;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["init_mode"] = init_mode;
    if (source_task) {
      j["source_task"] = *source_task;
    } else {
      j["source_task"] = nullptr;
    }
    j["seed"] = seed;
    j["epochs"] = epochs;
    return j;
  }

  static Provenance from_json(const nlohmann::json& j) {
    Provenance p;
    p.init_mode = j.at("init_mode").get<std::string>();
    if (!j.at("source_task").is_null()) p.source_task = j.at("source_task").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.epochs = j.at("epochs").get<int>();
    return p;
  }
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string fingerprint;  // architecture fingerprint (hash of the layer-spec string)
  Provenance provenance;
  ParameterVector params;

  bool operator==(const Checkpoint& other) const {
    return version == other.version && fingerprint == other.fingerprint &&
           provenance == other.provenance && params == other.params;
  }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

struct ByteReader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CorruptCheckpointError("checkpoint file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(buf[pos]) |
                      (static_cast<std::uint32_t>(buf[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(buf[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(buf[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
};

}  // namespace detail

// Exact wire format: magic "XFRCKPT1", u32 version, u32 fingerprint length +
// fingerprint, u32 provenance-JSON length + JSON, u32 tensor count, then per
// tensor: u32 name length + name, u32 rank, rank u32 dims, float32 values.
// All integers and floats little-endian.
inline std::vector<std::uint8_t> checkpoint_bytes(const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  std::vector<std::uint8_t> out;
  detail::put_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, ckpt.version);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.fingerprint.size()));
  detail::put_bytes(out, ckpt.fingerprint.data(), ckpt.fingerprint.size());
  const std::string prov = ckpt.provenance.to_json().dump();
  detail::put_u32(out, static_cast<std::uint32_t>(prov.size()));
  detail::put_bytes(out, prov.data(), prov.size());
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params.params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    detail::put_bytes(out, p.name.data(), p.name.size());
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.shape.size()));
    for (int d : p.value.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    detail::put_bytes(out, p.value.data.data(), p.value.data.size() * sizeof(float));
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r{bytes};
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CorruptCheckpointError("bad magic bytes; not a checkpoint file");
  }
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw CorruptCheckpointError("unsupported checkpoint version " +
                                 std::to_string(ckpt.version));
  }
  ckpt.fingerprint = r.str(r.u32());
  std::string prov = r.str(r.u32());
  try {
    ckpt.provenance = Provenance::from_json(nlohmann::json::parse(prov));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(std::string("bad provenance JSON: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw CorruptCheckpointError("implausible tensor rank");
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 24)) throw CorruptCheckpointError("implausible tensor dim");
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    Tensor<float> value(shape);
    r.raw(value.data.data(), numel * sizeof(float));
    ckpt.params.params.push_back({std::move(name), std::move(value)});
  }
  if (r.pos != bytes.size()) {
    throw CorruptCheckpointError("trailing bytes after checkpoint payload");
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::vector<std::uint8_t> bytes = checkpoint_bytes(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

inline std::string checkpoint_hash_hex(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> bytes = checkpoint_bytes(ckpt);
  return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

// Architecture compatibility for continued use of a checkpoint (evaluation or
// further training with the same head).
inline void check_fingerprint(const Architecture& arch, const Checkpoint& ckpt) {
  if (arch.fingerprint() != ckpt.fingerprint) {
    throw IncompatibleArchitectureError("checkpoint fingerprint " + ckpt.fingerprint +
                                        " does not match architecture " + arch.fingerprint());
  }
}

}  // namespace xfer
