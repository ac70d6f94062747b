#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "moexda/autograd.hpp"
#include "moexda/errors.hpp"
#include "moexda/io.hpp"
#include "moexda/tensor.hpp"
#include "moexda/vit.hpp"

namespace moexda {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'E', 'X', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::string origin) : buf_(buf), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == buf_.size(); }

  void need(std::uint64_t n) const {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint " + origin_ + ": truncated");
  }

 private:
  unsigned char byte() { return static_cast<unsigned char>(buf_[pos_++]); }

  const std::string& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline std::string serialize_checkpoint(const std::string& config_json,
                                        const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, config_json.size());
  out.append(config_json);
  detail::put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::put_u64(out, name.size());
    out.append(name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::int64_t d : t.shape()) detail::put_u64(out, static_cast<std::uint64_t>(d));
    for (std::int64_t i = 0; i < t.size(); ++i) detail::put_f32(out, static_cast<float>(t[i]));
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& buf, const std::string& origin) {
  detail::ByteReader r(buf, origin);
  if (r.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw IoError("checkpoint " + origin + ": bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + origin + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_json = r.bytes(r.u64());
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u64());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError("checkpoint " + origin + ": implausible rank for " + name);
    Shape shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::int64_t>(r.u64());
      if (shape[d] < 0) throw IoError("checkpoint " + origin + ": negative dim for " + name);
      numel *= shape[d];
    }
    r.need(4 * static_cast<std::uint64_t>(numel));
    Tensor t(shape);
    for (std::int64_t k = 0; k < numel; ++k) t[k] = static_cast<double>(r.f32());
    ck.tensors.emplace_back(name, std::move(t));
  }
  if (!r.exhausted()) throw IoError("checkpoint " + origin + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::string& path, const std::string& config_json,
                            const std::vector<std::pair<std::string, ag::Var>>& params) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(params.size());
  for (const auto& [name, var] : params) tensors.emplace_back(name, var.value());
  const std::string buf = serialize_checkpoint(config_json, tensors);
  write_binary_file(path, std::vector<unsigned char>(buf.begin(), buf.end()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<unsigned char> raw = read_binary_file(path);
  return parse_checkpoint(std::string(raw.begin(), raw.end()), path);
}

// Copies checkpoint tensors into the model; the name sets and shapes must
// match exactly.
inline void load_into_model(TwoStreamModel& model, const Checkpoint& ck) {
  auto params = model.named_params();
  if (params.size() != ck.tensors.size()) {
    throw IoError("checkpoint: has " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  std::size_t cursor = 0;
  for (auto& [name, var] : params) {
    // Checkpoints written by save_checkpoint keep the model's iteration
    // order, so a linear scan from the last hit finds each name first try.
    std::size_t found = ck.tensors.size();
    for (std::size_t off = 0; off < ck.tensors.size(); ++off) {
      const std::size_t i = (cursor + off) % ck.tensors.size();
      if (ck.tensors[i].first == name) {
        found = i;
        break;
      }
    }
    if (found == ck.tensors.size()) throw IoError("checkpoint: missing tensor " + name);
    const Tensor& src = ck.tensors[found].second;
    if (src.shape() != var.value().shape()) {
      throw IoError("checkpoint: shape mismatch for " + name + ": " + shape_str(src.shape()) +
                    " vs " + shape_str(var.value().shape()));
    }
    var.mutable_value() = src;
    cursor = found + 1;
  }
}

}  // namespace moexda
