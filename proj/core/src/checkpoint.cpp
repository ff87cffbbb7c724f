#include "nedb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace nedb {
namespace {

constexpr const char* kMagic = "NEDB-CHECKPOINT 1";

struct Blob {
  Shape shape;
  std::vector<float> values;
};

void append(std::vector<std::uint8_t>& out, const std::string& text) { out.insert(out.end(), text.begin(), text.end()); }

void append_blob(std::vector<std::uint8_t>& out, const std::string& name, Shape shape, std::span<const double> values) {
  append(out, fmt::format("param {} {} {} {} {}\n", name, shape.n, shape.c, shape.h, shape.w));
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  out.push_back('\n');
}

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  bool done() const { return pos_ >= end_; }

  std::string line() {
    const std::size_t start = pos_;
    while (pos_ < end_ && bytes_[pos_] != '\n') ++pos_;
    if (pos_ >= end_) throw CheckpointError(fmt::format("byte {}: unterminated line", start));
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(start), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_));
    ++pos_;
    return s;
  }

  std::vector<float> floats(std::size_t count) {
    if (end_ - pos_ < count * 4 + 1) throw CheckpointError(fmt::format("byte {}: truncated blob", pos_));
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes_[pos_ + 4 * i + b]) << (8 * b);
      out[i] = std::bit_cast<float>(bits);
    }
    pos_ += count * 4;
    if (bytes_[pos_] != '\n') throw CheckpointError(fmt::format("byte {}: blob not newline-terminated", pos_));
    ++pos_;
    return out;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(NedbModel& model) {
  std::vector<std::uint8_t> out;
  append(out, std::string(kMagic) + "\n[config]\n");
  for (const auto& [k, v] : to_key_values(model.config())) append(out, k + "=" + v + "\n");
  append(out, "[params]\n");
  model.visit_parameters([&](const std::string& name, Tensor& t) { append_blob(out, name, t.shape(), t.data()); });
  model.visit_buffers([&](const std::string& name, std::vector<double>& b) {
    append_blob(out, name, {1, static_cast<std::int64_t>(b.size()), 1, 1}, b);
  });
  if (model.config().noise != NoiseFrontEnd::kNone) {
    const auto& bank = model.bank();
    for (std::size_t i = 0; i < bank.kernel_count(); ++i) {
      const Kernel& k = bank.kernel(i);
      append_blob(out, fmt::format("constrained.kernel{}", i), {1, 1, k.size, k.size}, k.weights);
    }
  }
  append(out, fmt::format("checksum fnv1a64 {:016x}\n", fnv1a64(out.data(), out.size())));
  return out;
}

NedbModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  // The checksum line is the last line of the file.
  if (bytes.empty() || bytes.back() != '\n') throw CheckpointError("checkpoint does not end with a checksum line");
  std::size_t start = bytes.size() - 1;
  while (start > 0 && bytes[start - 1] != '\n') --start;
  const std::string tail(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end() - 1);
  std::istringstream tail_in(tail);
  std::string word, algo, hex;
  tail_in >> word >> algo >> hex;
  if (word != "checksum" || algo != "fnv1a64") throw CheckpointError("missing checksum line");
  const std::uint64_t expected = std::stoull(hex, nullptr, 16);
  const std::uint64_t actual = fnv1a64(bytes.data(), start);
  if (expected != actual) {
    throw CheckpointError(fmt::format("checksum mismatch: file says {:016x}, content hashes to {:016x}", expected, actual));
  }

  Cursor cur(bytes, start);
  if (cur.line() != kMagic) throw CheckpointError("byte 0: not a checkpoint (bad magic line)");
  if (cur.line() != "[config]") throw CheckpointError("missing [config] section");
  NedbConfig config;
  for (std::string l = cur.line(); l != "[params]"; l = cur.line()) {
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw CheckpointError("config line without '=': " + l);
    if (!apply_key_value(config, l.substr(0, eq), l.substr(eq + 1))) {
      throw CheckpointError("unknown config key in checkpoint: " + l.substr(0, eq));
    }
  }

  std::map<std::string, Blob> blobs;
  while (!cur.done()) {
    std::istringstream header(cur.line());
    std::string tag, name;
    Shape s;
    if (!(header >> tag >> name >> s.n >> s.c >> s.h >> s.w) || tag != "param") {
      throw CheckpointError("malformed param header");
    }
    blobs[name] = {s, cur.floats(static_cast<std::size_t>(s.numel()))};
  }

  NedbModel model(config);
  auto take = [&](const std::string& name, Shape shape) -> const Blob& {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw CheckpointError("checkpoint lacks " + name);
    if (it->second.shape != shape) {
      throw CheckpointError(fmt::format("{} stored as {}, model expects {}", name, it->second.shape.str(), shape.str()));
    }
    return it->second;
  };
  model.visit_parameters([&](const std::string& name, Tensor& t) {
    const Blob& b = take(name, t.shape());
    t = Tensor::parameter(t.shape(), std::vector<double>(b.values.begin(), b.values.end()));
  });
  model.visit_buffers([&](const std::string& name, std::vector<double>& buf) {
    const Blob& b = take(name, {1, static_cast<std::int64_t>(buf.size()), 1, 1});
    buf.assign(b.values.begin(), b.values.end());
  });
  if (config.noise != NoiseFrontEnd::kNone) {
    auto& bank = model.bank();
    for (std::size_t i = 0; i < bank.kernel_count(); ++i) {
      Kernel& k = bank.kernel(i);
      const Blob& b = take(fmt::format("constrained.kernel{}", i), {1, 1, k.size, k.size});
      k.weights.assign(b.values.begin(), b.values.end());
    }
  }
  return model;
}

void save_checkpoint(NedbModel& model, const std::string& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NedbModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace nedb
