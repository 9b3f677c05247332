#include "ncsc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ncsc/errors.hpp"

namespace ncsc {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ValidationError("checkpoint truncated while reading " + std::string(what) +
                            " at byte offset " + std::to_string(pos_));
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors) {
  std::vector<std::uint8_t> out{'N', 'C', 'S', 'C'};
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, t.rank());
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.text(4, "magic") != "NCSC") throw ValidationError("checkpoint has wrong magic at byte offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  NamedTensors out;
  while (!r.done()) {
    const std::uint64_t len = r.u64("name length");
    std::string name = r.text(len, "name");
    const std::uint64_t rank = r.u64("rank");
    if (rank > 8) {
      throw ValidationError("implausible rank " + std::to_string(rank) + " for '" + name +
                            "' at byte offset " + std::to_string(r.offset()));
    }
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(r.u64("dimension"));
    const std::size_t count = numel(shape);
    r.need(count * 8, "values");
    std::vector<double> values(count);
    for (auto& v : values) v = std::bit_cast<double>(r.u64("value"));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

NamedTensors snapshot(const ad::ParameterStore& store) {
  NamedTensors out;
  for (const auto* p : store.all()) out.emplace_back(p->name(), p->value());
  return out;
}

std::size_t restore(ad::ParameterStore& store, const NamedTensors& tensors) {
  std::size_t restored = 0;
  for (const auto& [name, t] : tensors) {
    ad::Parameter* p = store.find(name);
    if (!p) continue;
    if (p->value().shape() != t.shape()) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_string(t.shape()) +
                            ", model expects " + shape_string(p->value().shape()));
    }
    p->value() = t;
    ++restored;
  }
  return restored;
}

}  // namespace ncsc
