#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tsc/common/error.hpp"
#include "tsc/common/hash.hpp"
#include "tsc/ppo/trainer.hpp"

namespace tsc::ppo {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void matrix(const nn::Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    buf_.append(reinterpret_cast<const char*>(m.data()),
                static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  nn::Matrix matrix() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0 || (r > 0 && c > (1LL << 40) / r))
      throw ValidationError("checkpoint: corrupt matrix header");
    const auto bytes = static_cast<std::size_t>(r * c) * sizeof(double);
    need(bytes);
    nn::Matrix m(r, c);
    std::memcpy(m.data(), buf_.data() + pos_, bytes);
    pos_ += bytes;
    return m;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw ValidationError("checkpoint: truncated file");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void write_policy(Writer& w, const nn::PolicyParams& p) {
  w.pod<std::int32_t>(p.dims.vocab);
  w.pod<std::int32_t>(p.dims.features);
  w.pod<std::int32_t>(p.dims.embed);
  w.pod<std::int32_t>(p.dims.hidden);
  w.pod<std::int32_t>(p.dims.history);
  for (const nn::Matrix* m : p.tensors()) w.matrix(*m);
}

void check_shape(const nn::Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ValidationError(std::string("checkpoint: tensor '") + what + "' has the wrong shape");
}

nn::PolicyParams read_policy(Reader& r) {
  nn::PolicyParams p;
  p.dims.vocab = r.pod<std::int32_t>();
  p.dims.features = r.pod<std::int32_t>();
  p.dims.embed = r.pod<std::int32_t>();
  p.dims.hidden = r.pod<std::int32_t>();
  p.dims.history = r.pod<std::int32_t>();
  p.dims.validate();
  for (nn::Matrix* m : p.tensors()) *m = r.matrix();
  const auto& d = p.dims;
  check_shape(p.embedding, d.vocab, d.embed, "embedding");
  check_shape(p.ctx_w, d.features, d.hidden, "ctx_w");
  check_shape(p.hist_w, d.embed, d.hidden, "hist_w");
  check_shape(p.b1, 1, d.hidden, "b1");
  check_shape(p.w2, d.hidden, d.hidden, "w2");
  check_shape(p.b2, 1, d.hidden, "b2");
  check_shape(p.out_w, d.hidden, d.vocab, "out_w");
  check_shape(p.out_b, 1, d.vocab, "out_b");
  return p;
}

void write_value(Writer& w, const nn::ValueParams& v) {
  w.pod<std::int32_t>(v.features);
  for (const nn::Matrix* m : v.tensors()) w.matrix(*m);
}

nn::ValueParams read_value(Reader& r) {
  nn::ValueParams v;
  v.features = r.pod<std::int32_t>();
  for (nn::Matrix* m : v.tensors()) *m = r.matrix();
  check_shape(v.w1, v.features, 2 * v.features, "value.w1");
  check_shape(v.b1, 1, 2 * v.features, "value.b1");
  check_shape(v.w2, 2 * v.features, 1, "value.w2");
  check_shape(v.b2, 1, 1, "value.b2");
  return v;
}

void write_adam(Writer& w, const AdamW& a) {
  w.pod(a.lr);
  w.pod(a.weight_decay);
  w.pod(a.beta1);
  w.pod(a.beta2);
  w.pod(a.eps);
  w.pod<std::int64_t>(a.steps);
  w.pod<std::uint64_t>(a.m.size());
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    w.matrix(a.m[i]);
    w.matrix(a.v[i]);
  }
}

AdamW read_adam(Reader& r) {
  AdamW a;
  a.lr = r.pod<double>();
  a.weight_decay = r.pod<double>();
  a.beta1 = r.pod<double>();
  a.beta2 = r.pod<double>();
  a.eps = r.pod<double>();
  a.steps = r.pod<std::int64_t>();
  const auto n = r.pod<std::uint64_t>();
  if (n > 64) throw ValidationError("checkpoint: corrupt optimizer state");
  for (std::uint64_t i = 0; i < n; ++i) {
    a.m.push_back(r.matrix());
    a.v.push_back(r.matrix());
  }
  return a;
}

template <class T>
void write_vector(Writer& w, const std::vector<T>& v) {
  w.pod<std::uint64_t>(v.size());
  for (const T& x : v) w.pod(x);
}

template <class T>
std::vector<T> read_vector(Reader& r) {
  const auto n = r.pod<std::uint64_t>();
  if (n > (1u << 24)) throw ValidationError("checkpoint: corrupt vector length");
  std::vector<T> v;
  v.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(r.pod<T>());
  return v;
}

void write_experience(Writer& w, const Experience& e) {
  w.pod<std::int64_t>(e.time);
  write_vector(w, e.features);
  write_vector(w, e.tokens);
  write_vector(w, e.old_logprobs);
  write_vector(w, e.rewards);
  w.pod(e.old_value);
}

Experience read_experience(Reader& r) {
  Experience e;
  e.time = r.pod<std::int64_t>();
  e.features = read_vector<double>(r);
  e.tokens = read_vector<int>(r);
  e.old_logprobs = read_vector<double>(r);
  e.rewards = read_vector<double>(r);
  e.old_value = r.pod<double>();
  if (e.tokens.size() != e.old_logprobs.size() || e.tokens.size() != e.rewards.size())
    throw ValidationError("checkpoint: corrupt buffered trajectory");
  return e;
}

}  // namespace

std::string content_hash(const nn::PolicyParams& policy, const nn::ValueParams& value) {
  Fnv1a h;
  for (const nn::Matrix* m : policy.tensors())
    h.update(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  for (const nn::Matrix* m : value.tensors())
    h.update(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  return h.hex();
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(c.config_hash);
  w.str(c.rng_state);
  w.pod<std::int64_t>(c.global_step);
  w.pod<std::int64_t>(c.update_count);
  write_policy(w, c.policy);
  write_policy(w, c.reference);
  write_value(w, c.value);
  write_adam(w, c.actor);
  write_adam(w, c.critic);
  w.pod<std::uint64_t>(c.buffer.size());
  for (const Experience& e : c.buffer) write_experience(w, e);
  Fnv1a h;
  h.update(w.bytes());
  w.pod<std::uint64_t>(h.digest());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path, int expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t header = sizeof(kMagic) + sizeof(std::uint32_t);
  if (buf.size() < header + sizeof(std::uint64_t) || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw ValidationError("checkpoint: '" + path + "' is not a checkpoint file");
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + 4, sizeof(version));
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  Fnv1a h;
  h.update(buf.data(), body);
  if (h.digest() != stored) throw ValidationError("checkpoint: checksum mismatch, file is corrupt");

  Reader r(buf, body);
  r.pod<std::uint32_t>();  // magic
  r.pod<std::uint32_t>();  // version
  Checkpoint c;
  c.config_hash = r.str();
  c.rng_state = r.str();
  c.global_step = r.pod<std::int64_t>();
  c.update_count = r.pod<std::int64_t>();
  c.policy = read_policy(r);
  c.reference = read_policy(r);
  c.value = read_value(r);
  c.actor = read_adam(r);
  c.critic = read_adam(r);
  const auto records = r.pod<std::uint64_t>();
  if (records > (1u << 20)) throw ValidationError("checkpoint: corrupt buffer length");
  for (std::uint64_t i = 0; i < records; ++i) c.buffer.push_back(read_experience(r));
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");

  if (expected_vocab > 0 && c.policy.dims.vocab != expected_vocab)
    throw ValidationError("checkpoint: vocabulary size " + std::to_string(c.policy.dims.vocab) +
                          " does not match expected " + std::to_string(expected_vocab));
  return c;
}

}  // namespace tsc::ppo
