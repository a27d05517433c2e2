// ekd/io.hpp

// Copyright 2026  The ekd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ekd/common.hpp"
#include "ekd/data.hpp"
#include "ekd/distill.hpp"
#include "ekd/fusion.hpp"
#include "ekd/nn.hpp"

// All files share one layout: a text header of "key value..." lines closed by
// an "end_header" line, a little-endian binary payload whose size the header
// states, and a 4-byte little-endian CRC-32 of the payload.

namespace ekd {

inline constexpr std::uint32_t kFormatMajor = 1;
inline constexpr std::uint32_t kFormatMinor = 0;
inline constexpr std::string_view kModelMagic = "EKD-MODEL";
inline constexpr std::string_view kCacheMagic = "EKD-CACHE";
inline constexpr std::string_view kDataMagic = "EKD-DATA";

/// One soft label per training frame, keyed by (utt_id, frame_index).
struct CacheRecord {
  std::string utt_id;
  std::uint32_t frame_index = 0;
  SparseSoftLabel label;
  bool operator==(const CacheRecord &) const = default;
};

struct SoftLabelCache {
  std::size_t num_classes = 0;
  std::size_t k = 0;
  double temperature = 1.0;
  std::uint32_t teacher_fingerprint = 0;
  FusionWeights weights;
  std::vector<CacheRecord> records;  // sorted by (utt_id, frame_index)
  bool operator==(const SoftLabelCache &) const = default;
};

inline std::uint32_t crc32_of(std::string_view bytes, std::uint32_t seed = 0) {
  uLong crc = seed;
  // zlib takes uInt lengths; chunk to stay within range.
  while (!bytes.empty()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef *>(bytes.data()), n);
    bytes.remove_prefix(n);
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string &s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  const std::string &bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptionError("payload truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double parse_double(const std::string &tok) {
  char *end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size()) throw FormatError("bad number '" + tok + "' in header");
  return v;
}

inline std::uint64_t parse_uint(const std::string &tok) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError("bad count '" + tok + "' in header");
  return std::stoull(tok);
}

struct Header {
  std::vector<std::vector<std::string>> lines;  // tokenised, magic line excluded

  const std::vector<std::string> &get(const std::string &key, std::size_t arity) const {
    for (const auto &l : lines)
      if (!l.empty() && l[0] == key) {
        if (l.size() != arity + 1) throw FormatError("header field '" + key + "' has wrong arity");
        return l;
      }
    throw FormatError("header field '" + key + "' missing");
  }
  std::uint64_t uint(const std::string &key) const { return parse_uint(get(key, 1)[1]); }
};

inline std::string frame(std::string_view magic, const std::string &header_body, const std::string &payload) {
  std::ostringstream os;
  os << magic << ' ' << kFormatMajor << ' ' << kFormatMinor << '\n'
     << header_body << "payload_bytes " << payload.size() << "\nend_header\n";
  ByteWriter crc;
  crc.u32(crc32_of(payload));
  return os.str() + payload + crc.bytes();
}

// Splits a file into header and verified payload.
inline std::pair<Header, std::string_view> unframe(std::string_view magic, std::string_view file) {
  static constexpr std::string_view kEnd = "end_header\n";
  const auto end = file.find(kEnd);
  if (end == std::string_view::npos) {
    if (file.substr(0, magic.size()) != magic) throw FormatError("not a " + std::string(magic) + " file");
    throw CorruptionError("header truncated");
  }
  std::istringstream is{std::string(file.substr(0, end))};
  std::string line;
  Header h;
  bool first = true;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    if (first) {
      if (toks.size() != 3 || toks[0] != magic) throw FormatError("not a " + std::string(magic) + " file");
      if (parse_uint(toks[1]) != kFormatMajor)
        throw VersionError("unsupported format major version " + toks[1]);
      first = false;
      continue;
    }
    if (!toks.empty()) h.lines.push_back(std::move(toks));
  }
  if (first) throw FormatError("empty header");
  const auto payload_bytes = h.uint("payload_bytes");
  const auto body = file.substr(end + kEnd.size());
  if (body.size() < payload_bytes + 4) throw CorruptionError("file truncated");
  if (body.size() > payload_bytes + 4) throw CorruptionError("trailing bytes after checksum");
  const auto payload = body.substr(0, payload_bytes);
  ByteReader crc(body.substr(payload_bytes));
  if (crc.u32() != crc32_of(payload)) throw CorruptionError("checksum mismatch");
  return {std::move(h), payload};
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Writes via a sibling temp file and rename so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path &path, const std::string &bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// ---- models ----

inline std::string serialize_model(const Model &m) {
  m.spec.validate();
  detail::check_params(m.spec, m.params);
  std::ostringstream h;
  h << "feature_dim " << m.spec.feature_dim << '\n'
    << "context " << m.spec.context.left << ' ' << m.spec.context.right << '\n'
    << "num_classes " << m.spec.num_classes << '\n'
    << "layers " << m.spec.layers.size() << '\n';
  for (const auto &l : m.spec.layers)
    h << "layer " << l.input_dim << ' ' << l.output_dim << ' ' << to_string(l.activation) << '\n';
  detail::ByteWriter w;
  for (const auto &p : m.params.layers) {
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) w.f64(p.weights.data()[i]);
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) w.f64(p.bias[i]);
  }
  return detail::frame(kModelMagic, h.str(), w.bytes());
}

inline Model parse_model(std::string_view file) {
  auto [h, payload] = detail::unframe(kModelMagic, file);
  Model m;
  m.spec.feature_dim = h.uint("feature_dim");
  const auto &ctx = h.get("context", 2);
  m.spec.context = {detail::parse_uint(ctx[1]), detail::parse_uint(ctx[2])};
  m.spec.num_classes = h.uint("num_classes");
  const auto n_layers = h.uint("layers");
  for (const auto &l : h.lines) {
    if (l[0] != "layer") continue;
    if (l.size() != 4) throw FormatError("malformed layer line");
    m.spec.layers.push_back({detail::parse_uint(l[1]), detail::parse_uint(l[2]), activation_from_string(l[3])});
  }
  if (m.spec.layers.size() != n_layers) throw FormatError("layer count disagrees with layer lines");
  try {
    m.spec.validate();
  } catch (const ShapeError &e) {
    throw FormatError(std::string("inconsistent network header: ") + e.what());
  }
  if (payload.size() != 8 * m.spec.num_parameters()) throw FormatError("payload size does not match network shape");
  detail::ByteReader r(payload);
  for (const auto &l : m.spec.layers) {
    LayerParams p;
    p.weights.resize(static_cast<Eigen::Index>(l.input_dim), static_cast<Eigen::Index>(l.output_dim));
    p.bias.resize(static_cast<Eigen::Index>(l.output_dim));
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = r.f64();
    m.params.layers.push_back(std::move(p));
  }
  return m;
}

inline void save_model(const std::filesystem::path &path, const Model &m) { write_file_atomic(path, serialize_model(m)); }
inline Model load_model(const std::filesystem::path &path) { return parse_model(detail::read_file(path)); }

/// CRC-32 chained over the serialized teachers, in order.
inline std::uint32_t teacher_fingerprint(const std::vector<Model> &teachers) {
  std::uint32_t crc = 0;
  for (const auto &t : teachers) crc = crc32_of(serialize_model(t), crc);
  return crc;
}

// ---- soft-label caches ----

inline void validate_cache(const SoftLabelCache &c) {
  if (c.num_classes == 0 || c.k == 0) throw FormatError("cache has zero classes or k");
  const std::size_t arity = std::min(c.k, c.num_classes);
  const CacheRecord *prev = nullptr;
  for (const auto &rec : c.records) {
    const auto &e = rec.label.entries;
    if (e.size() != arity)
      throw FormatError("record (" + rec.utt_id + ", " + std::to_string(rec.frame_index) + ") has arity " +
                        std::to_string(e.size()) + ", header k implies " + std::to_string(arity));
    std::vector<bool> seen(c.num_classes, false);
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i].class_id >= c.num_classes || seen[e[i].class_id]) throw FormatError("bad class id in cache record");
      seen[e[i].class_id] = true;
      if (!(e[i].prob > 0.0) || e[i].prob > 1.0) throw FormatError("cache probability not in (0, 1]");
      if (i > 0 && e[i].prob > e[i - 1].prob) throw FormatError("cache record not sorted descending");
    }
    if (prev && !(std::tie(prev->utt_id, prev->frame_index) < std::tie(rec.utt_id, rec.frame_index)))
      throw FormatError("cache records out of (utt_id, frame_index) order");
    prev = &rec;
  }
}

inline std::string serialize_cache(const SoftLabelCache &c) {
  validate_cache(c);
  std::ostringstream h;
  h << "num_classes " << c.num_classes << '\n'
    << "k " << c.k << '\n'
    << "temperature " << detail::hex_double(c.temperature) << '\n';
  char fp[16];
  std::snprintf(fp, sizeof(fp), "%08x", c.teacher_fingerprint);
  h << "teacher_fingerprint " << fp << '\n' << "fusion_weights " << c.weights.size();
  for (double w : c.weights.weights) h << ' ' << detail::hex_double(w);
  h << '\n' << "records " << c.records.size() << '\n';
  detail::ByteWriter w;
  for (const auto &rec : c.records) {
    w.str(rec.utt_id);
    w.u32(rec.frame_index);
    w.u32(static_cast<std::uint32_t>(rec.label.entries.size()));
    for (const auto &e : rec.label.entries) {
      w.u32(e.class_id);
      w.f64(e.prob);
    }
  }
  return detail::frame(kCacheMagic, h.str(), w.bytes());
}

inline SoftLabelCache parse_cache(std::string_view file) {
  auto [h, payload] = detail::unframe(kCacheMagic, file);
  SoftLabelCache c;
  c.num_classes = h.uint("num_classes");
  c.k = h.uint("k");
  c.temperature = detail::parse_double(h.get("temperature", 1)[1]);
  const auto &fp = h.get("teacher_fingerprint", 1)[1];
  if (fp.size() != 8 || fp.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw FormatError("bad teacher fingerprint");
  c.teacher_fingerprint = static_cast<std::uint32_t>(std::stoul(fp, nullptr, 16));
  for (const auto &l : h.lines) {
    if (l[0] != "fusion_weights") continue;
    if (l.size() < 2 || detail::parse_uint(l[1]) + 2 != l.size()) throw FormatError("malformed fusion_weights");
    for (std::size_t i = 2; i < l.size(); ++i) c.weights.weights.push_back(detail::parse_double(l[i]));
  }
  const auto n_records = h.uint("records");
  detail::ByteReader r(payload);
  for (std::uint64_t n = 0; n < n_records; ++n) {
    CacheRecord rec;
    rec.utt_id = r.str();
    rec.frame_index = r.u32();
    const auto arity = r.u32();
    if (arity != std::min(c.k, c.num_classes))
      throw FormatError("record arity " + std::to_string(arity) + " disagrees with header k " + std::to_string(c.k));
    rec.label.k = c.k;
    for (std::uint32_t i = 0; i < arity; ++i) {
      SparseEntry e;
      e.class_id = r.u32();
      e.prob = r.f64();
      rec.label.retained_mass += e.prob;
      rec.label.entries.push_back(e);
    }
    c.records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("payload longer than header record count");
  validate_cache(c);
  return c;
}

inline void save_cache(const std::filesystem::path &path, const SoftLabelCache &c) {
  write_file_atomic(path, serialize_cache(c));
}
inline SoftLabelCache load_cache(const std::filesystem::path &path) { return parse_cache(detail::read_file(path)); }

// ---- datasets ----

inline std::string serialize_dataset(const Dataset &ds) {
  ds.validate();
  std::ostringstream h;
  h << "num_classes " << ds.num_classes << '\n'
    << "feature_dim " << ds.feature_dim << '\n'
    << "split " << to_string(ds.split) << '\n'
    << "utterances " << ds.utterances.size() << '\n';
  detail::ByteWriter w;
  for (const auto &u : ds.utterances) {
    w.str(u.utt_id);
    w.f64(u.speed_factor);
    w.u32(static_cast<std::uint32_t>(u.num_frames()));
    for (Eigen::Index i = 0; i < u.frames.size(); ++i) w.f64(u.frames.data()[i]);
    for (auto l : u.labels) w.u32(l);
  }
  return detail::frame(kDataMagic, h.str(), w.bytes());
}

inline Dataset parse_dataset(std::string_view file) {
  auto [h, payload] = detail::unframe(kDataMagic, file);
  Dataset ds;
  ds.num_classes = h.uint("num_classes");
  ds.feature_dim = h.uint("feature_dim");
  try {
    ds.split = split_from_string(h.get("split", 1)[1]);
  } catch (const ParameterError &e) {
    throw FormatError(e.what());
  }
  const auto n_utts = h.uint("utterances");
  detail::ByteReader r(payload);
  for (std::uint64_t n = 0; n < n_utts; ++n) {
    Utterance u;
    u.utt_id = r.str();
    u.speed_factor = r.f64();
    const auto frames = r.u32();
    u.frames.resize(frames, static_cast<Eigen::Index>(ds.feature_dim));
    for (Eigen::Index i = 0; i < u.frames.size(); ++i) u.frames.data()[i] = r.f64();
    u.labels.resize(frames);
    for (auto &l : u.labels) l = r.u32();
    ds.utterances.push_back(std::move(u));
  }
  if (!r.done()) throw FormatError("payload longer than header utterance count");
  try {
    ds.validate();
  } catch (const DataError &e) {
    throw FormatError(e.what());
  }
  return ds;
}

inline void save_dataset(const std::filesystem::path &path, const Dataset &ds) {
  write_file_atomic(path, serialize_dataset(ds));
}
inline Dataset load_dataset(const std::filesystem::path &path) { return parse_dataset(detail::read_file(path)); }

}  // namespace ekd
