#include <cstring>
#include <fstream>
#include <iterator>

#include "stgan/config.hpp"
#include "stgan/train.hpp"

namespace stgan {
namespace {

constexpr char kMagic[8] = {'S', 'T', 'G', 'A', 'N', 'C', 'K', 'P'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void params(const Params& p) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
    for (const auto& e : p) {
      str(e.name);
      const Shape& s = e.value.shape();
      for (int d : {s.n, s.c, s.h, s.w}) pod<std::int32_t>(d);
      bytes(e.value.data(), e.value.size() * sizeof(float));
    }
  }
  void adam(const AdamState& a) {
    params(a.m);
    params(a.v);
    pod<std::int64_t>(a.t);
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::filesystem::path path) : buf_(buf), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Params params() {
    const auto count = pod<std::uint32_t>();
    std::vector<NamedTensor<float>> entries;
    for (std::uint32_t k = 0; k < count; ++k) {
      std::string name = str();
      Shape s;
      s.n = pod<std::int32_t>();
      s.c = pod<std::int32_t>();
      s.h = pod<std::int32_t>();
      s.w = pod<std::int32_t>();
      if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) corrupt("negative tensor extent");
      need(s.numel() * sizeof(float));
      Tensor<float> t(s);
      take(t.data(), t.size() * sizeof(float));
      entries.push_back({std::move(name), std::move(t)});
    }
    return Params(std::move(entries));
  }
  AdamState adam() {
    AdamState a;
    a.m = params();
    a.v = params();
    a.t = pod<std::int64_t>();
    return a;
  }
  bool done() const { return pos_ == buf_.size(); }
  [[noreturn]] void corrupt(const std::string& why) const { throw CorruptFileError(path_, why); }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) corrupt("truncated payload");
  }
  void take(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  const std::string& buf_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const json meta{{"config", ckpt.config},
                  {"arch", ckpt.bundle.arch},
                  {"epoch", ckpt.epoch},
                  {"step", ckpt.bundle.step},
                  {"rng_seed", ckpt.bundle.rng_seed}};
  Writer w;
  w.str(meta.dump());
  for (const Params* p : {&ckpt.bundle.g1, &ckpt.bundle.g2, &ckpt.bundle.d1, &ckpt.bundle.d2,
                          &ckpt.bundle.s}) {
    w.params(*p);
  }
  for (const AdamState* a : {&ckpt.optimizer.g1, &ckpt.optimizer.g2, &ckpt.optimizer.d1,
                             &ckpt.optimizer.d2, &ckpt.optimizer.s}) {
    w.adam(*a);
  }
  const std::string& payload = w.buffer();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot write checkpoint");
    const std::uint32_t version = ckpt.format_version;
    const std::uint64_t length = payload.size();
    const std::uint64_t sum = fnv1a(payload);
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
    if (!out) throw IoError(path, "short write");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t kHeader = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (file.size() < sizeof kMagic || std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptFileError(path, "not a checkpoint file");
  }
  if (file.size() < kHeader) throw CorruptFileError(path, "truncated header");
  std::uint32_t version;
  std::uint64_t length;
  std::memcpy(&version, file.data() + sizeof kMagic, sizeof version);
  std::memcpy(&length, file.data() + sizeof kMagic + sizeof version, sizeof length);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint " + path.string() + " has format version " +
                               std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  }
  if (file.size() - kHeader < length || file.size() - kHeader - length < sizeof(std::uint64_t)) {
    throw CorruptFileError(path, "truncated payload");
  }
  if (file.size() != kHeader + length + sizeof(std::uint64_t)) {
    throw CorruptFileError(path, "trailing bytes after checksum");
  }
  const std::string payload = file.substr(kHeader, length);
  std::uint64_t sum;
  std::memcpy(&sum, file.data() + kHeader + length, sizeof sum);
  if (sum != fnv1a(payload)) throw CorruptFileError(path, "checksum mismatch");

  Reader r(payload, path);
  Checkpoint ckpt;
  ckpt.format_version = version;
  try {
    const json meta = json::parse(r.str());
    meta.at("config").get_to(ckpt.config);
    meta.at("arch").get_to(ckpt.bundle.arch);
    ckpt.epoch = meta.at("epoch").get<int>();
    ckpt.bundle.step = meta.at("step").get<std::int64_t>();
    ckpt.bundle.rng_seed = meta.at("rng_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    r.corrupt(std::string("bad metadata: ") + e.what());
  }
  for (Params* p : {&ckpt.bundle.g1, &ckpt.bundle.g2, &ckpt.bundle.d1, &ckpt.bundle.d2,
                    &ckpt.bundle.s}) {
    *p = r.params();
  }
  for (AdamState* a : {&ckpt.optimizer.g1, &ckpt.optimizer.g2, &ckpt.optimizer.d1,
                       &ckpt.optimizer.d2, &ckpt.optimizer.s}) {
    *a = r.adam();
  }
  if (!r.done()) r.corrupt("unexpected data after optimizer state");
  try {
    validate_bundle(ckpt.bundle, false);
  } catch (const ValidationError& e) {
    r.corrupt(e.what());
  }
  return ckpt;
}

}  // namespace stgan
