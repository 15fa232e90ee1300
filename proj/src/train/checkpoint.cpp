#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lpsn/error.hpp"
#include "lpsn/trainer.hpp"

namespace lpsn {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'N', 'C'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) { uint<std::uint64_t>(v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void floats(const std::vector<float>& v) {
    u64(v.size());
    for (float x : v) uint<std::uint32_t>(std::bit_cast<std::uint32_t>(x));
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::uint64_t u64(const char* what) { return uint<std::uint64_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t count(const char* what, std::size_t element_bytes) {
    const std::size_t at = pos_;
    const std::uint64_t n = u64(what);
    if (element_bytes > 0 && n > (bytes_.size() - pos_) / element_bytes) {
      throw FormatError(std::string("PSNC: truncated ") + what + ", declared " + std::to_string(n) + " entries", at);
    }
    return static_cast<std::size_t>(n);
  }
  std::string str(const char* what) {
    const std::size_t n = count(what, 1);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(const char* what) {
    const std::size_t n = count(what, 4);
    std::vector<float> v(n);
    for (float& x : v) x = std::bit_cast<float>(uint<std::uint32_t>(what));
    return v;
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("PSNC: truncated ") + what, bytes_.size());
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

void write_strings(Writer& w, const std::vector<std::string>& v) {
  w.u64(v.size());
  for (const auto& s : v) w.str(s);
}

std::vector<std::string> read_strings(Reader& r, const char* what) {
  std::vector<std::string> v(r.count(what, 8));
  for (auto& s : v) s = r.str(what);
  return v;
}

void write_values(Writer& w, const std::vector<std::vector<float>>& v) {
  w.u64(v.size());
  for (const auto& t : v) w.floats(t);
}

std::vector<std::vector<float>> read_values(Reader& r, const char* what) {
  std::vector<std::vector<float>> v(r.count(what, 8));
  for (auto& t : v) t = r.floats(what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, 4);
  w.uint<std::uint16_t>(kVersion);

  const auto config = ck.config.to_key_values();
  w.u64(config.size());
  for (const auto& [k, v] : config) {
    w.str(k);
    w.str(v);
  }

  write_strings(w, ck.categorical_fields);
  write_strings(w, ck.continuous_fields);
  w.u64(ck.vocabulary.items().size());
  for (const auto& [field, value] : ck.vocabulary.items()) {
    w.str(field);
    w.str(value);
  }
  w.u64(ck.vocabulary.continuous.size());
  for (const auto& c : ck.vocabulary.continuous) {
    w.str(c.name);
    w.f64(c.min);
    w.f64(c.max);
    w.f64(c.mean);
    w.f64(c.std);
  }
  w.f64(ck.time_scale.min);
  w.f64(ck.time_scale.max);

  if (ck.param_shapes.size() != ck.param_names.size() || ck.param_values.size() != ck.param_names.size()) {
    throw UsageError("checkpoint parameter lists have different lengths");
  }
  w.u64(ck.param_names.size());
  for (std::size_t i = 0; i < ck.param_names.size(); ++i) {
    w.str(ck.param_names[i]);
    w.u64(ck.param_shapes[i].size());
    for (std::size_t d : ck.param_shapes[i]) w.u64(d);
    w.floats(ck.param_values[i]);
  }

  w.u64(ck.optimizer.step);
  write_values(w, ck.optimizer.m);
  write_values(w, ck.optimizer.v);

  w.u64(ck.epoch);
  w.str(ck.rng_state);
  w.u64(ck.history.size());
  for (const auto& e : ck.history) {
    w.u64(e.epoch);
    w.f64(e.lr);
    w.f64(e.train_loss);
    w.f64(e.val_mse);
    w.f64(e.val_c_index);
  }
  w.uint<std::uint8_t>(ck.best_epoch ? 1 : 0);
  w.u64(ck.best_epoch.value_or(0));
  w.f64(ck.best_val_c_index);
  w.f64(ck.best_val_mse);
  write_values(w, ck.best_values);
  w.u64(ck.censored_gradient_samples);

  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw PipelineError("PSNC: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.uint<std::uint8_t>("magic"));
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("PSNC: bad magic, expected \"PSNC\"", 0);
  const auto version = r.uint<std::uint16_t>("version");
  if (version != kVersion) {
    throw FormatError("PSNC: unsupported version " + std::to_string(version) + ", expected 1", 4);
  }

  Checkpoint ck;
  std::vector<std::pair<std::string, std::string>> config(r.count("config", 16));
  for (auto& [k, v] : config) {
    k = r.str("config key");
    v = r.str("config value");
  }
  const std::size_t config_end = r.offset();
  try {
    ck.config = TrainConfig::from_key_values(config);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("PSNC: bad config snapshot: ") + e.what(), config_end);
  }

  ck.categorical_fields = read_strings(r, "categorical fields");
  ck.continuous_fields = read_strings(r, "continuous fields");
  const std::size_t items = r.count("vocabulary", 16);
  for (std::size_t i = 0; i < items; ++i) {
    std::string field = r.str("vocabulary field");
    std::string value = r.str("vocabulary value");
    ck.vocabulary.add(field, value);
  }
  ck.vocabulary.continuous.resize(r.count("continuous statistics", 40));
  for (auto& c : ck.vocabulary.continuous) {
    c.name = r.str("continuous statistics");
    c.min = r.f64("continuous statistics");
    c.max = r.f64("continuous statistics");
    c.mean = r.f64("continuous statistics");
    c.std = r.f64("continuous statistics");
  }
  ck.time_scale.min = r.f64("time scale");
  ck.time_scale.max = r.f64("time scale");

  const std::size_t params = r.count("parameters", 24);
  for (std::size_t i = 0; i < params; ++i) {
    ck.param_names.push_back(r.str("parameter name"));
    Shape shape(r.count("parameter shape", 8));
    for (auto& d : shape) d = r.u64("parameter shape");
    const std::size_t at = r.offset();
    ck.param_values.push_back(r.floats("parameter values"));
    if (ck.param_values.back().size() != shape_numel(shape)) {
      throw FormatError("PSNC: parameter '" + ck.param_names.back() + "' holds " +
                            std::to_string(ck.param_values.back().size()) + " values for shape " + shape_string(shape),
                        at);
    }
    ck.param_shapes.push_back(std::move(shape));
  }

  ck.optimizer.step = r.u64("optimizer step");
  ck.optimizer.m = read_values(r, "optimizer moments");
  ck.optimizer.v = read_values(r, "optimizer moments");

  ck.epoch = r.u64("epoch");
  ck.rng_state = r.str("generator state");
  ck.history.resize(r.count("history", 40));
  for (auto& e : ck.history) {
    e.epoch = r.u64("history");
    e.lr = r.f64("history");
    e.train_loss = r.f64("history");
    e.val_mse = r.f64("history");
    e.val_c_index = r.f64("history");
  }
  const bool has_best = r.uint<std::uint8_t>("best epoch") != 0;
  const std::uint64_t best = r.u64("best epoch");
  if (has_best) ck.best_epoch = best;
  ck.best_val_c_index = r.f64("best metrics");
  ck.best_val_mse = r.f64("best metrics");
  ck.best_values = read_values(r, "best parameters");
  ck.censored_gradient_samples = r.u64("censored counter");
  if (!r.done()) throw FormatError("PSNC: trailing bytes after checkpoint", r.offset());
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PipelineError("cannot open " + path + " for writing");
  write_checkpoint(out, ck);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace lpsn
