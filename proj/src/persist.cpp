#include "armaid/persist.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace armaid {

std::string to_string(PersistErrorCode code) {
  switch (code) {
    case PersistErrorCode::Io: return "io";
    case PersistErrorCode::BadMagic: return "bad-magic";
    case PersistErrorCode::VersionMismatch: return "version-mismatch";
    case PersistErrorCode::Checksum: return "checksum";
    case PersistErrorCode::ShapeMismatch: return "shape-mismatch";
    case PersistErrorCode::HeaderParse: return "header-parse";
  }
  return "unknown";
}

PersistError::PersistError(PersistErrorCode code, const std::string& message)
    : std::runtime_error(to_string(code) + ": " + message), code_(code) {}

namespace {

constexpr std::string_view kCheckpointMagic = "ARID";
constexpr std::string_view kSuiteMagic = "ARTS";

enum class DType : std::uint32_t { F64 = 0, I32 = 1 };

struct RawTensor {
  DType dtype = DType::F64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::int32_t> i32;

  [[nodiscard]] std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

// ---- little-endian byte writer / reader

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
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
  std::string_view bytes(std::size_t n) {
    need(n);
    const std::string_view s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw PersistError(PersistErrorCode::Checksum, "file is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

// ---- header

using Header = std::vector<std::pair<std::string, std::string>>;

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class HeaderFields {
 public:
  HeaderFields(std::string_view text, std::initializer_list<std::string_view> expected) {
    for (auto k : expected) expected_.emplace_back(k);
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      const std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw PersistError(PersistErrorCode::HeaderParse, "header line without '=': '" + std::string(line) + "'");
      }
      std::string key(line.substr(0, eq));
      if (std::find(expected_.begin(), expected_.end(), key) == expected_.end()) {
        throw PersistError(PersistErrorCode::HeaderParse, "unknown header key '" + key + "'");
      }
      if (!values_.emplace(key, std::string(line.substr(eq + 1))).second) {
        throw PersistError(PersistErrorCode::HeaderParse, "duplicate header key '" + key + "'");
      }
    }
    for (const auto& k : expected_) {
      if (!values_.count(k)) throw PersistError(PersistErrorCode::HeaderParse, "missing header key '" + k + "'");
    }
  }

  const std::string& text(const std::string& key) const { return values_.at(key); }

  template <typename T>
  T integer(const std::string& key) const {
    const std::string& v = values_.at(key);
    T out{};
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v);
    return out;
  }

  double real(const std::string& key) const {
    const std::string& v = values_.at(key);
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v);
    return out;
  }

  template <typename F>
  auto parsed(const std::string& key, F&& parse) const {
    try {
      return parse(values_.at(key));
    } catch (const InvalidArgument&) {
      bad(key, values_.at(key));
    }
    throw std::logic_error("unreachable");
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& value) {
    throw PersistError(PersistErrorCode::HeaderParse, "invalid value '" + value + "' for header key '" + key + "'");
  }

 private:
  std::vector<std::string> expected_;
  std::map<std::string, std::string> values_;
};

std::string header_text(const Header& h) {
  std::string out;
  for (const auto& [k, v] : h) out += k + "=" + v + "\n";
  return out;
}

// ---- container

std::string encode_container(std::string_view magic, const Header& header, const std::vector<RawTensor>& tensors) {
  Writer payload;
  payload.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const RawTensor& t : tensors) {
    payload.u32(static_cast<std::uint32_t>(t.dtype));
    payload.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) payload.u64(d);
    if (t.dtype == DType::F64) {
      for (double v : t.f64) payload.f64(v);
    } else {
      for (std::int32_t v : t.i32) payload.u32(static_cast<std::uint32_t>(v));
    }
  }
  const std::string text = header_text(header);
  Writer out;
  out.bytes(magic);
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text);
  out.bytes(payload.str());
  out.u32(crc_of(payload.str()));
  return std::move(out.str());
}

struct Container {
  std::string header;
  std::vector<RawTensor> tensors;
};

Container decode_container(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic) {
    const std::string got(bytes.substr(0, std::min<std::size_t>(4, bytes.size())));
    throw PersistError(PersistErrorCode::BadMagic,
                       "expected magic '" + std::string(magic) + "', found '" + got + "'");
  }
  Reader r(bytes.substr(magic.size()));
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw PersistError(PersistErrorCode::VersionMismatch, "file version " + std::to_string(version) +
                                                              ", this build reads version " +
                                                              std::to_string(kFormatVersion));
  }
  const std::uint32_t header_len = r.u32();
  Container c;
  c.header = std::string(r.bytes(header_len));
  if (r.remaining() < 4) throw PersistError(PersistErrorCode::Checksum, "file is truncated");
  const std::string_view payload = r.bytes(r.remaining() - 4);
  const std::uint32_t stored = r.u32();
  if (crc_of(payload) != stored) throw PersistError(PersistErrorCode::Checksum, "payload CRC-32 mismatch");

  Reader p(payload);
  const std::uint32_t count = p.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    const std::uint32_t dtype = p.u32();
    if (dtype > 1) throw PersistError(PersistErrorCode::ShapeMismatch, "unknown tensor dtype");
    t.dtype = static_cast<DType>(dtype);
    const std::uint32_t nd = p.u32();
    for (std::uint32_t d = 0; d < nd; ++d) t.dims.push_back(p.u64());
    const std::uint64_t n = t.numel();
    const std::size_t width = t.dtype == DType::F64 ? 8 : 4;
    if (n > p.remaining() / width) throw PersistError(PersistErrorCode::ShapeMismatch, "tensor larger than payload");
    if (t.dtype == DType::F64) {
      t.f64.resize(n);
      for (auto& v : t.f64) v = p.f64();
    } else {
      t.i32.resize(n);
      for (auto& v : t.i32) v = static_cast<std::int32_t>(p.u32());
    }
    c.tensors.push_back(std::move(t));
  }
  if (p.remaining() != 0) throw PersistError(PersistErrorCode::ShapeMismatch, "trailing bytes after tensors");
  return c;
}

RawTensor f64_tensor(std::vector<std::uint64_t> dims, std::vector<double> values) {
  RawTensor t;
  t.dims = std::move(dims);
  t.f64 = std::move(values);
  return t;
}

void expect_shape(const RawTensor& t, DType dtype, const std::vector<std::uint64_t>& dims, const std::string& what) {
  if (t.dtype != dtype || t.dims != dims) {
    std::ostringstream s;
    s << what << ": stored shape [";
    for (std::size_t i = 0; i < t.dims.size(); ++i) s << (i ? "," : "") << t.dims[i];
    s << "] does not match the header configuration [";
    for (std::size_t i = 0; i < dims.size(); ++i) s << (i ? "," : "") << dims[i];
    s << "]";
    throw PersistError(PersistErrorCode::ShapeMismatch, s.str());
  }
}

std::string format_history(const std::vector<std::vector<int>>& history) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out += '|';
    for (std::size_t j = 0; j < history[i].size(); ++j) {
      if (j) out += ',';
      out += std::to_string(history[i][j]);
    }
  }
  return out;
}

std::vector<std::vector<int>> parse_history(const std::string& text) {
  std::vector<std::vector<int>> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('|', pos);
    if (end == std::string::npos) end = text.size();
    std::vector<int> range;
    std::size_t p = pos;
    while (p < end) {
      std::size_t comma = text.find(',', p);
      if (comma == std::string::npos || comma > end) comma = end;
      int v = 0;
      const auto r = std::from_chars(text.data() + p, text.data() + comma, v);
      if (r.ec != std::errc() || r.ptr != text.data() + comma || v < 0 || v > kMaxOrder) {
        throw InvalidArgument("bad constraint history");
      }
      range.push_back(v);
      p = comma + 1;
    }
    if (range.empty()) throw InvalidArgument("bad constraint history");
    out.push_back(std::move(range));
    pos = end + 1;
  }
  return out;
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::NAG ? "nag" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "nag") return OptimizerKind::NAG;
  if (s == "adam") return OptimizerKind::Adam;
  throw InvalidArgument("bad optimizer");
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  const Graph graph = network_graph(ck.config);
  if (!ck.params.matches(graph)) throw InvalidArgument("encode_checkpoint: parameters do not match the configuration");
  const Header header = {
      {"variant", to_string(ck.config.variant)},
      {"depth", std::to_string(ck.config.depth)},
      {"kW", std::to_string(ck.config.filter_width)},
      {"features", std::to_string(ck.config.features)},
      {"num_classes", std::to_string(ck.config.num_classes)},
      {"input_length", std::to_string(ck.config.input_length)},
      {"target", to_string(ck.target)},
      {"noise", to_string(ck.noise)},
      {"seed", std::to_string(ck.seed)},
      {"constraint_history", format_history(ck.constraint_history)},
      {"mean_error", fmt_double(ck.trace.final_mean_error)},
      {"total_batches", std::to_string(ck.trace.total_batches)},
      {"wall_seconds", fmt_double(ck.trace.wall_seconds)},
      {"optimizer", optimizer_name(ck.optimizer.config.kind)},
      {"momentum", fmt_double(ck.optimizer.config.momentum)},
      {"beta1", fmt_double(ck.optimizer.config.beta1)},
      {"beta2", fmt_double(ck.optimizer.config.beta2)},
      {"eps", fmt_double(ck.optimizer.config.eps)},
      {"optimizer_step", std::to_string(ck.optimizer.step)},
  };
  std::vector<RawTensor> tensors;
  const auto& v = ck.params.values;
  for (std::size_t l = 0; l < graph.layers.size(); ++l) {
    const LayerShape& s = graph.layers[l];
    const auto out = static_cast<std::uint64_t>(s.out_channels);
    const auto bn = static_cast<std::uint64_t>(s.bn_channels);
    tensors.push_back(f64_tensor({out, static_cast<std::uint64_t>(s.in_channels), static_cast<std::uint64_t>(s.kernel_width)},
                                 {v.begin() + s.weight, v.begin() + s.weight + s.weight_size()}));
    tensors.push_back(f64_tensor({out}, {v.begin() + s.bias, v.begin() + s.bias + out}));
    tensors.push_back(f64_tensor({bn}, {v.begin() + s.gamma, v.begin() + s.gamma + bn}));
    tensors.push_back(f64_tensor({bn}, {v.begin() + s.beta, v.begin() + s.beta + bn}));
    tensors.push_back(f64_tensor({bn}, ck.params.running_mean[l]));
    tensors.push_back(f64_tensor({bn}, ck.params.running_var[l]));
  }
  const auto nw = static_cast<std::uint64_t>(ck.trace.window_means.size());
  if (ck.trace.window_lr.size() != nw || ck.trace.window_wall_seconds.size() != nw) {
    throw InvalidArgument("encode_checkpoint: trace vectors differ in length");
  }
  tensors.push_back(f64_tensor({nw}, ck.trace.window_means));
  tensors.push_back(f64_tensor({nw}, ck.trace.window_lr));
  tensors.push_back(f64_tensor({nw}, ck.trace.window_wall_seconds));
  tensors.push_back(f64_tensor({ck.optimizer.first.size()}, ck.optimizer.first));
  tensors.push_back(f64_tensor({ck.optimizer.second.size()}, ck.optimizer.second));
  return encode_container(kCheckpointMagic, header, tensors);
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Container c = decode_container(bytes, kCheckpointMagic);
  const HeaderFields h(c.header, {"variant", "depth", "kW", "features", "num_classes", "input_length", "target",
                                  "noise", "seed", "constraint_history", "mean_error", "total_batches",
                                  "wall_seconds", "optimizer", "momentum", "beta1", "beta2", "eps",
                                  "optimizer_step"});
  Checkpoint ck;
  ck.config.variant = h.parsed("variant", [](const std::string& s) { return parse_variant(s); });
  ck.config.depth = h.integer<int>("depth");
  ck.config.filter_width = h.integer<int>("kW");
  ck.config.features = h.integer<int>("features");
  ck.config.num_classes = h.integer<int>("num_classes");
  ck.config.input_length = h.integer<int>("input_length");
  try {
    ck.config.validate();
  } catch (const InvalidArgument& e) {
    throw PersistError(PersistErrorCode::HeaderParse, std::string("network configuration in header: ") + e.what());
  }
  ck.target = h.parsed("target", [](const std::string& s) { return parse_target(s); });
  ck.noise = h.parsed("noise", [](const std::string& s) { return parse_noise_kind(s); });
  ck.seed = h.integer<std::uint64_t>("seed");
  ck.constraint_history = h.parsed("constraint_history", [](const std::string& s) { return parse_history(s); });
  ck.trace.final_mean_error = h.real("mean_error");
  ck.trace.total_batches = h.integer<std::int64_t>("total_batches");
  ck.trace.wall_seconds = h.real("wall_seconds");
  ck.optimizer.config.kind = h.parsed("optimizer", [](const std::string& s) { return parse_optimizer(s); });
  ck.optimizer.config.momentum = h.real("momentum");
  ck.optimizer.config.beta1 = h.real("beta1");
  ck.optimizer.config.beta2 = h.real("beta2");
  ck.optimizer.config.eps = h.real("eps");
  ck.optimizer.step = h.integer<std::int64_t>("optimizer_step");

  const Graph graph = network_graph(ck.config);
  const std::size_t expected = graph.layers.size() * 6 + 5;
  if (c.tensors.size() != expected) {
    throw PersistError(PersistErrorCode::ShapeMismatch, "file holds " + std::to_string(c.tensors.size()) +
                                                            " tensors, the header configuration needs " +
                                                            std::to_string(expected));
  }
  NetworkParams params(graph);
  std::size_t ti = 0;
  for (std::size_t l = 0; l < graph.layers.size(); ++l) {
    const LayerShape& s = graph.layers[l];
    const auto out = static_cast<std::uint64_t>(s.out_channels);
    const auto bn = static_cast<std::uint64_t>(s.bn_channels);
    const std::string name = "layer " + std::to_string(l);
    const RawTensor& w = c.tensors[ti++];
    expect_shape(w, DType::F64, {out, static_cast<std::uint64_t>(s.in_channels), static_cast<std::uint64_t>(s.kernel_width)},
                 name + " weight");
    std::copy(w.f64.begin(), w.f64.end(), params.values.begin() + s.weight);
    const RawTensor& b = c.tensors[ti++];
    expect_shape(b, DType::F64, {out}, name + " bias");
    std::copy(b.f64.begin(), b.f64.end(), params.values.begin() + s.bias);
    const RawTensor& g = c.tensors[ti++];
    expect_shape(g, DType::F64, {bn}, name + " gamma");
    std::copy(g.f64.begin(), g.f64.end(), params.values.begin() + s.gamma);
    const RawTensor& be = c.tensors[ti++];
    expect_shape(be, DType::F64, {bn}, name + " beta");
    std::copy(be.f64.begin(), be.f64.end(), params.values.begin() + s.beta);
    const RawTensor& rm = c.tensors[ti++];
    expect_shape(rm, DType::F64, {bn}, name + " running mean");
    params.running_mean[l] = rm.f64;
    const RawTensor& rv = c.tensors[ti++];
    expect_shape(rv, DType::F64, {bn}, name + " running variance");
    params.running_var[l] = rv.f64;
  }
  ck.params = std::move(params);
  const RawTensor& means = c.tensors[ti++];
  const std::uint64_t nw = means.dims.size() == 1 ? means.dims[0] : 0;
  expect_shape(means, DType::F64, {nw}, "trace window means");
  const RawTensor& lrs = c.tensors[ti++];
  expect_shape(lrs, DType::F64, {nw}, "trace window learning rates");
  const RawTensor& walls = c.tensors[ti++];
  expect_shape(walls, DType::F64, {nw}, "trace window wall times");
  ck.trace.window_means = means.f64;
  ck.trace.window_lr = lrs.f64;
  ck.trace.window_wall_seconds = walls.f64;
  const RawTensor& first = c.tensors[ti++];
  const RawTensor& second = c.tensors[ti++];
  const std::uint64_t np = first.dims.size() == 1 ? first.dims[0] : 0;
  if (np != 0) expect_shape(first, DType::F64, {graph.param_size}, "optimizer first moment");
  const bool adam = ck.optimizer.config.kind == OptimizerKind::Adam && np != 0;
  expect_shape(second, DType::F64, {adam ? graph.param_size : 0}, "optimizer second moment");
  ck.optimizer.first = first.f64;
  ck.optimizer.second = second.f64;
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

std::string encode_suite(const TestSuite& suite) {
  const auto n = static_cast<std::uint64_t>(suite.series.size());
  const auto len = static_cast<std::uint64_t>(suite.length);
  const Header header = {
      {"noise", to_string(suite.noise)},
      {"batches", std::to_string(suite.batches)},
      {"max_order", std::to_string(suite.max_order)},
      {"length", std::to_string(suite.length)},
      {"seed", std::to_string(suite.seed)},
      {"count", std::to_string(n)},
  };
  RawTensor labels;
  labels.dtype = DType::I32;
  labels.dims = {n, 2};
  RawTensor values;
  values.dims = {n, len};
  values.f64.reserve(n * len);
  for (const TimeSeries& s : suite.series) {
    if (s.values.size() != len) throw InvalidArgument("encode_suite: series length differs from the suite length");
    if (!s.label) throw InvalidArgument("encode_suite: unlabeled series");
    labels.i32.push_back(s.label->p);
    labels.i32.push_back(s.label->q);
    values.f64.insert(values.f64.end(), s.values.begin(), s.values.end());
  }
  return encode_container(kSuiteMagic, header, {labels, values});
}

TestSuite decode_suite(std::string_view bytes) {
  const Container c = decode_container(bytes, kSuiteMagic);
  const HeaderFields h(c.header, {"noise", "batches", "max_order", "length", "seed", "count"});
  TestSuite suite;
  suite.noise = h.parsed("noise", [](const std::string& s) { return parse_noise_kind(s); });
  suite.batches = h.integer<int>("batches");
  suite.max_order = h.integer<int>("max_order");
  suite.length = h.integer<int>("length");
  suite.seed = h.integer<std::uint64_t>("seed");
  const auto n = h.integer<std::uint64_t>("count");
  if (suite.max_order < 0 || suite.max_order > kMaxOrder) HeaderFields::bad("max_order", h.text("max_order"));
  if (suite.length < 1) HeaderFields::bad("length", h.text("length"));
  if (c.tensors.size() != 2) throw PersistError(PersistErrorCode::ShapeMismatch, "suite file must hold 2 tensors");
  const auto len = static_cast<std::uint64_t>(suite.length);
  expect_shape(c.tensors[0], DType::I32, {n, 2}, "suite labels");
  expect_shape(c.tensors[1], DType::F64, {n, len}, "suite values");
  suite.series.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    TimeSeries& s = suite.series[i];
    const int p = c.tensors[0].i32[2 * i], q = c.tensors[0].i32[2 * i + 1];
    if (p < 0 || p > kMaxOrder || q < 0 || q > kMaxOrder) {
      throw PersistError(PersistErrorCode::ShapeMismatch, "suite label out of range at series " + std::to_string(i));
    }
    s.label = OrderPair{p, q};
    s.values.assign(c.tensors[1].f64.begin() + static_cast<std::ptrdiff_t>(i * len),
                    c.tensors[1].f64.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
  }
  return suite;
}

void save_suite(const TestSuite& suite, const std::string& path) { write_file(path, encode_suite(suite)); }

TestSuite load_suite(const std::string& path) { return decode_suite(read_file(path)); }

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "window_index,mean_error,lr,wall_seconds\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.window_means.size(); ++i) {
    out << i << ',' << trace.window_means[i] << ',' << trace.window_lr[i] << ',' << trace.window_wall_seconds[i]
        << '\n';
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistError(PersistErrorCode::Io, "cannot open '" + path + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  if (in.bad()) throw PersistError(PersistErrorCode::Io, "read error on '" + path + "'");
  return std::move(s).str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistError(PersistErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw PersistError(PersistErrorCode::Io, "write error on '" + path + "'");
}

}  // namespace armaid
