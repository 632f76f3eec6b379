#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "plt/database.hpp"

namespace plt {

using Bytes = std::vector<std::uint8_t>;

class Malformed : public std::runtime_error {
 public:
  explicit Malformed(const std::string& what) : std::runtime_error("Malformed: " + what) {}
};

class Overflow : public std::length_error {
 public:
  explicit Overflow(const std::string& what) : std::length_error("Overflow: " + what) {}
};

enum class MsgType : std::uint8_t { Query = 0x01, Answer = 0x02, Error = 0x03, LoadDb = 0x04 };

inline constexpr std::array<std::uint8_t, 4> kMagic{'P', 'L', 'T', '1'};
inline constexpr std::size_t kHeaderSize = 9;

/// Error codes carried in Error frames.
enum class WireError : std::uint32_t {
  Malformed = 1,
  NoDatabase = 2,
  Mismatch = 3,
  Internal = 4,
};

struct Frame {
  MsgType type = MsgType::Error;
  Bytes payload;
};

struct FrameHeader {
  bool magic_ok = false;
  std::uint8_t type = 0;
  std::uint32_t length = 0;
};

namespace wire_detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t to_u32(std::uint64_t v, const char* what) {
  if (v > 0xffffffffULL) throw Overflow(std::string(what) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  /// Field element; out-of-range values are rejected, not reduced.
  Elem element(std::uint64_t q) {
    std::uint64_t v = u64();
    if (v >= q) throw Malformed("element " + std::to_string(v) + " >= q");
    return v;
  }

  /// Guards allocations: `count` items of `size` bytes must still be available.
  void expect(std::uint64_t count, std::uint64_t size) const {
    if (size != 0 && count > remaining() / size) throw Malformed("truncated payload");
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::span<const std::uint8_t> rest() const { return data_.subspan(pos_); }
  void finish() const {
    if (remaining() != 0) throw Malformed("trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Malformed("truncated payload");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline PrimeField checked_field(std::uint64_t q) {
  try {
    return field_new(q);
  } catch (const std::exception& e) {
    throw Malformed(std::string("bad modulus: ") + e.what());
  }
}

}  // namespace wire_detail

inline Bytes encode_frame(MsgType type, const Bytes& payload) {
  Bytes out(kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(type));
  wire_detail::put_u32(out, wire_detail::to_u32(payload.size(), "payload length"));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline FrameHeader parse_header(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) throw Malformed("truncated header");
  FrameHeader h;
  h.magic_ok = std::equal(kMagic.begin(), kMagic.end(), header.begin());
  h.type = header[4];
  wire_detail::Reader r(header.subspan(5, 4));
  h.length = r.u32();
  return h;
}

inline bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x04; }

/// Exactly one frame spanning the whole buffer.
inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  FrameHeader h = parse_header(bytes);
  if (!h.magic_ok) throw Malformed("bad magic");
  if (!known_type(h.type)) throw Malformed("unknown message type " + std::to_string(h.type));
  if (bytes.size() - kHeaderSize < h.length) throw Malformed("truncated payload");
  if (bytes.size() - kHeaderSize > h.length) throw Malformed("trailing bytes after frame");
  return Frame{static_cast<MsgType>(h.type), Bytes(bytes.begin() + kHeaderSize, bytes.end())};
}

inline Bytes encode_query_payload(const QueryBundle& b) {
  using namespace wire_detail;
  if (b.q_vectors.size() != b.r || b.betas.size() != b.f) throw std::invalid_argument("bundle dimensions inconsistent");
  Bytes out;
  put_u64(out, b.q);
  put_u32(out, b.k);
  put_u32(out, to_u32(b.s, "S"));
  put_u32(out, b.r);
  put_u32(out, b.f);
  for (const Row& row : b.q_vectors) {
    if (row.size() != b.k) throw std::invalid_argument("Q row length must be K");
    for (Elem v : row) put_u64(out, v);
  }
  for (const Row& row : b.betas) {
    if (row.size() != b.r) throw std::invalid_argument("beta row length must be r");
    for (Elem v : row) put_u64(out, v);
  }
  put_u32(out, to_u32(b.expressions.size(), "expression count"));
  for (const Expression& e : b.expressions) {
    put_u32(out, to_u32(e.terms.size(), "term count"));
    for (const Term& t : e.terms) {
      put_u32(out, t.f);
      put_u32(out, t.s);
      put_u64(out, t.coeff);
    }
  }
  return out;
}

inline QueryBundle decode_query_payload(std::span<const std::uint8_t> payload) {
  using namespace wire_detail;
  Reader in(payload);
  QueryBundle b;
  b.q = in.u64();
  checked_field(b.q);
  b.k = in.u32();
  b.s = in.u32();
  b.r = in.u32();
  b.f = in.u32();
  if (b.k == 0 || b.s == 0 || b.r == 0 || b.f == 0) throw Malformed("zero dimension");
  if (b.r > b.k) throw Malformed("r exceeds K");
  in.expect(std::uint64_t{b.r} * b.k, 8);
  b.q_vectors.assign(b.r, Row(b.k));
  for (auto& row : b.q_vectors) {
    for (auto& v : row) v = in.element(b.q);
  }
  in.expect(std::uint64_t{b.f} * b.r, 8);
  b.betas.assign(b.f, Row(b.r));
  for (auto& row : b.betas) {
    for (auto& v : row) v = in.element(b.q);
  }
  std::uint32_t count = in.u32();
  in.expect(count, 4);
  b.expressions.resize(count);
  for (auto& e : b.expressions) {
    std::uint32_t terms = in.u32();
    in.expect(terms, 16);
    e.terms.resize(terms);
    for (auto& t : e.terms) {
      t.f = in.u32();
      t.s = in.u32();
      t.coeff = in.element(b.q);
      if (t.f >= b.f) throw Malformed("function index out of range");
      if (t.s >= b.s) throw Malformed("symbol index out of range");
      if (t.coeff == 0) throw Malformed("zero coefficient");
    }
    e.round = terms;
  }
  in.finish();
  return b;
}

inline Bytes encode_query(const QueryBundle& b) { return encode_frame(MsgType::Query, encode_query_payload(b)); }

inline QueryBundle decode_query(std::span<const std::uint8_t> bytes) {
  Frame frame = decode_frame(bytes);
  if (frame.type != MsgType::Query) throw Malformed("not a query frame");
  return decode_query_payload(frame.payload);
}

inline Bytes encode_answer_payload(const std::vector<Elem>& symbols) {
  Bytes out;
  wire_detail::put_u32(out, wire_detail::to_u32(symbols.size(), "answer length"));
  for (Elem v : symbols) wire_detail::put_u64(out, v);
  return out;
}

inline std::vector<Elem> decode_answer_payload(std::span<const std::uint8_t> payload) {
  wire_detail::Reader in(payload);
  std::uint32_t count = in.u32();
  in.expect(count, 8);
  std::vector<Elem> out(count);
  for (auto& v : out) v = in.u64();
  in.finish();
  return out;
}

inline Bytes encode_answer(const std::vector<Elem>& symbols) {
  return encode_frame(MsgType::Answer, encode_answer_payload(symbols));
}

inline std::vector<Elem> decode_answer(std::span<const std::uint8_t> bytes) {
  Frame frame = decode_frame(bytes);
  if (frame.type != MsgType::Answer) throw Malformed("not an answer frame");
  return decode_answer_payload(frame.payload);
}

struct ErrorPayload {
  std::uint32_t code = 0;
  std::string message;
};

inline Bytes encode_error_payload(std::uint32_t code, const std::string& message) {
  Bytes out;
  wire_detail::put_u32(out, code);
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

inline ErrorPayload decode_error_payload(std::span<const std::uint8_t> payload) {
  wire_detail::Reader in(payload);
  ErrorPayload e;
  e.code = in.u32();
  auto rest = in.rest();
  e.message.assign(rest.begin(), rest.end());
  return e;
}

inline Bytes encode_error(std::uint32_t code, const std::string& message) {
  return encode_frame(MsgType::Error, encode_error_payload(code, message));
}

/// Same layout for LoadDb frames and database files: q, K, S, then K*S symbols.
inline Bytes encode_db_payload(const Database& db) {
  using namespace wire_detail;
  Bytes out;
  out.reserve(16 + db.k * db.s * 8);
  put_u64(out, db.field.modulus());
  put_u32(out, db.k);
  put_u32(out, to_u32(db.s, "S"));
  for (const Row& row : db.symbols) {
    for (Elem v : row) put_u64(out, v);
  }
  return out;
}

inline Database decode_db_payload(std::span<const std::uint8_t> payload) {
  using namespace wire_detail;
  Reader in(payload);
  std::uint64_t q = in.u64();
  PrimeField field = checked_field(q);
  std::uint32_t k = in.u32();
  std::uint32_t s = in.u32();
  in.expect(std::uint64_t{k} * s, 8);
  Matrix data(k, Row(s));
  for (auto& row : data) {
    for (auto& v : row) v = in.element(q);
  }
  in.finish();
  return Database(field, k, s, std::move(data));
}

inline void save_db(const std::string& path, const Database& db) {
  Bytes bytes = encode_db_payload(db);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Database load_db(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_db_payload(bytes);
}

}  // namespace plt
