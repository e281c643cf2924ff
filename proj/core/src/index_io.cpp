#include "lodmsq/index_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "lodmsq/error.hpp"

static_assert(std::endian::native == std::endian::little, "index format assumes little endian");

namespace lodmsq {

namespace {

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_u32(std::size_t v) {
    if (v > 0xffffffffu) throw InvalidArgument("index field does not fit in 32 bits");
    put(static_cast<std::uint32_t>(v));
  }
  void put_floats(const std::vector<float>& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size() * sizeof(float));
  }
  // LSB-first bit stream, padded to a whole byte.
  void put_bits(std::size_t count, int bits, auto&& value_at) {
    if (bits == 0) return;
    std::uint64_t acc = 0;
    int have = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t v = static_cast<std::uint64_t>(value_at(i)) & ((1ull << bits) - 1);
      acc |= v << have;
      have += bits;
      while (have >= 8) {
        buf_.push_back(static_cast<std::uint8_t>(acc & 0xff));
        acc >>= 8;
        have -= 8;
      }
    }
    if (have > 0) buf_.push_back(static_cast<std::uint8_t>(acc & 0xff));
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw FormatError("index file truncated at byte " + std::to_string(pos_));
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t get_u32() { return get<std::uint32_t>(); }
  std::vector<float> get_floats(std::size_t count) {
    if (count > (n_ - pos_) / sizeof(float)) need(count * sizeof(float) + 1);
    std::vector<float> v(count);
    std::memcpy(v.data(), p_ + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
    return v;
  }
  std::vector<std::uint32_t> get_bits(std::size_t count, int bits) {
    std::vector<std::uint32_t> out(count, 0);
    if (bits == 0) return out;
    const std::size_t nbytes = (count * static_cast<std::size_t>(bits) + 7) / 8;
    need(nbytes);
    const std::uint8_t* src = p_ + pos_;
    std::size_t bit = 0;
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < bits; ++b, ++bit) {
        v |= static_cast<std::uint32_t>((src[bit >> 3] >> (bit & 7)) & 1u) << b;
      }
      out[i] = v;
    }
    pos_ += nbytes;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::int32_t sign_extend(std::uint32_t v, int bits) {
  const std::uint32_t sign = 1u << (bits - 1);
  return static_cast<std::int32_t>((v ^ sign)) - static_cast<std::int32_t>(sign);
}

}  // namespace

std::vector<std::uint8_t> index_to_bytes(const Index& idx) {
  const bool lod = uses_lod(idx.kind);
  const bool scaled = uses_scale(idx.kind);
  const auto& cfg = idx.config;
  const int code_bits = idx.pq.code_bits();

  Writer w;
  for (char c : kIndexMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kIndexVersion);
  w.put(static_cast<std::uint8_t>(idx.kind));
  w.put(static_cast<std::uint8_t>(idx.l2_transformed ? 1 : 0));
  w.put(std::uint16_t{0});
  w.put_u32(idx.dim);
  w.put_u32(idx.input_dim);
  w.put_u32(cfg.m);
  w.put_u32(cfg.n_B);
  w.put_u32(cfg.n_W);
  w.put(static_cast<std::uint32_t>(cfg.l_UQ));
  w.put(static_cast<std::uint32_t>(cfg.l_SQ));
  w.put(idx.l2_max_norm);
  w.put(idx.seed);

  if (idx.rotation.matrix.size() != idx.dim * idx.dim) throw InvalidArgument("rotation size mismatch");
  w.put_floats(idx.rotation.matrix);
  for (std::size_t off : idx.pq.offsets) w.put_u32(off);
  for (const auto& cb : idx.pq.codebooks) w.put_floats(cb);

  if (idx.partitions.size() != cfg.m) throw InvalidArgument("partition count != m");
  for (const auto& p : idx.partitions) {
    w.put_floats(p.center);
    if (lod) {
      w.put_floats(p.direction);
      w.put(p.uq.step);
      w.put(p.uq.offset);
    }
    if (scaled) {
      w.put_u32(p.sq.levels.size());
      for (double l : p.sq.levels) w.put(l);
    }
    w.put_u32(p.ids.size());
    for (auto id : p.ids) w.put(id);
    w.put_bits(p.pq_codes.size(), code_bits, [&](std::size_t i) { return p.pq_codes[i]; });
    if (scaled) w.put_bits(p.sq_codes.size(), cfg.l_SQ, [&](std::size_t i) { return p.sq_codes[i]; });
    if (lod) {
      w.put_bits(p.uq_codes.size(), cfg.l_UQ,
                 [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<std::int32_t>(p.uq_codes[i])); });
    }
  }
  auto& buf = w.bytes();
  w.put(fnv1a(buf.data(), buf.size()));
  return std::move(buf);
}

Index index_from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kIndexMagic.size() + 4) {
    if (bytes.size() >= kIndexMagic.size() &&
        !std::equal(kIndexMagic.begin(), kIndexMagic.end(), bytes.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
      throw VersionError("not an index file (bad magic)");
    }
    throw FormatError("index file truncated");
  }
  Reader r(bytes.data(), bytes.size());
  for (char c : kIndexMagic) {
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) {
      throw VersionError("not an index file (bad magic)");
    }
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion) {
    throw VersionError("unsupported index format version " + std::to_string(version));
  }
  if (bytes.size() < 8 + 4 + 8) throw FormatError("index file truncated");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);

  Index idx;
  const auto kind = r.get<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(IndexKind::kMipsLodMsq)) {
    throw FormatError("unknown index kind tag " + std::to_string(kind));
  }
  idx.kind = static_cast<IndexKind>(kind);
  const auto flags = r.get<std::uint8_t>();
  idx.l2_transformed = (flags & 1u) != 0;
  r.get<std::uint16_t>();
  idx.dim = r.get_u32();
  idx.input_dim = r.get_u32();
  idx.config.m = r.get_u32();
  idx.config.n_B = r.get_u32();
  idx.config.n_W = r.get_u32();
  idx.config.l_UQ = static_cast<int>(r.get<std::uint32_t>());
  idx.config.l_SQ = static_cast<int>(r.get<std::uint32_t>());
  idx.l2_max_norm = r.get<double>();
  idx.seed = r.get<std::uint64_t>();
  try {
    validate_config(idx.config, idx.kind, idx.dim);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("corrupt index header: ") + e.what());
  }
  const bool lod = uses_lod(idx.kind);
  const bool scaled = uses_scale(idx.kind);
  const std::size_t d = idx.dim;

  idx.rotation.dim = d;
  idx.rotation.matrix = r.get_floats(d * d);
  idx.pq.dim = d;
  idx.pq.n_B = idx.config.n_B;
  idx.pq.n_W = idx.config.n_W;
  idx.pq.offsets.resize(idx.pq.n_B + 1);
  for (auto& off : idx.pq.offsets) off = r.get_u32();
  if (idx.pq.offsets.front() != 0 || idx.pq.offsets.back() != d ||
      !std::is_sorted(idx.pq.offsets.begin(), idx.pq.offsets.end())) {
    throw FormatError("corrupt subspace offsets");
  }
  idx.pq.codebooks.resize(idx.pq.n_B);
  for (std::size_t b = 0; b < idx.pq.n_B; ++b) {
    idx.pq.codebooks[b] = r.get_floats(idx.pq.n_W * idx.pq.sub_dim(b));
  }
  const int code_bits = idx.pq.code_bits();

  idx.partitions.resize(idx.config.m);
  for (auto& p : idx.partitions) {
    p.center = r.get_floats(d);
    if (lod) {
      p.direction = r.get_floats(d);
      p.uq.step = r.get<double>();
      p.uq.offset = r.get<double>();
      p.uq.bits = idx.config.l_UQ;
    }
    if (scaled) {
      const std::size_t nl = r.get_u32();
      if (nl == 0 || nl > (std::size_t{1} << idx.config.l_SQ)) throw FormatError("corrupt SQ level count");
      p.sq.levels.resize(nl);
      for (auto& l : p.sq.levels) l = r.get<double>();
    }
    const std::size_t cnt = r.get_u32();
    r.need(cnt * 4);
    p.ids.resize(cnt);
    for (auto& id : p.ids) id = r.get<std::uint32_t>();
    const auto pq_codes = r.get_bits(cnt * idx.config.n_B, code_bits);
    p.pq_codes.assign(pq_codes.begin(), pq_codes.end());
    for (auto c : p.pq_codes) {
      if (c >= idx.config.n_W) throw FormatError("PQ code out of range");
    }
    if (scaled) {
      const auto sq = r.get_bits(cnt, idx.config.l_SQ);
      p.sq_codes.assign(sq.begin(), sq.end());
      for (auto c : p.sq_codes) {
        if (c >= p.sq.levels.size()) throw FormatError("SQ code out of range");
      }
    }
    if (lod) {
      const auto uq = r.get_bits(cnt, idx.config.l_UQ);
      p.uq_codes.resize(cnt);
      for (std::size_t e = 0; e < cnt; ++e) {
        p.uq_codes[e] = static_cast<std::int16_t>(sign_extend(uq[e], idx.config.l_UQ));
      }
    }
  }
  if (r.pos() != body) {
    throw FormatError(r.pos() > body ? "index file truncated" : "trailing bytes in index file");
  }
  if (fnv1a(bytes.data(), body) != stored) throw FormatError("index checksum mismatch");
  return idx;
}

void serialize_index(const Index& index, const std::filesystem::path& path) {
  const auto bytes = index_to_bytes(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Index deserialize_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return index_from_bytes(bytes);
}

}  // namespace lodmsq
