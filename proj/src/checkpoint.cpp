#include "l2lws/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "l2lws/errors.hpp"

namespace l2lws::model {

namespace {

constexpr std::array<char, 8> kMagic{'L', '2', 'L', 'W', 'S', 'C', 'K', 'P'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void read_exact(std::istream& in, char* buf, std::size_t n) {
  in.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw InputError("checkpoint truncated");
  }
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::string get_string(std::istream& in, std::uint64_t limit = 1ULL << 32) {
  const auto n = get_u64(in);
  if (n > limit) throw InputError("checkpoint string length out of range");
  std::string s(n, '\0');
  read_exact(in, s.data(), n);
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const DualModel& model,
                      nlohmann::json metadata) {
  metadata["model_config"] = model.config();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_string(out, metadata.dump());
  const auto params = model.parameters();
  put_u64(out, params.size());
  for (const auto& p : params) {
    put_string(out, p.name);
    put_u64(out, p.tensor.rank());
    for (auto d : p.tensor.shape()) put_u64(out, d);
    for (double v : p.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw InputError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  read_exact(in, magic.data(), magic.size());
  if (magic != kMagic) throw InputError("not a checkpoint file (bad magic)");
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  auto metadata = nlohmann::json::parse(get_string(in));
  if (!metadata.contains("model_config")) {
    throw InputError("checkpoint metadata lacks model_config");
  }
  const auto config = metadata.at("model_config").get<ModelConfig>();
  Rng scratch(0);
  Checkpoint ck{DualModel::create(config, scratch), std::move(metadata)};

  std::map<std::string, ad::Tensor> by_name;
  for (auto& p : ck.model.parameters()) by_name.emplace(p.name, p.tensor);

  const auto count = get_u64(in);
  if (count != by_name.size()) {
    throw InputError("checkpoint holds " + std::to_string(count) +
                     " tensors, model expects " + std::to_string(by_name.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = get_string(in, 4096);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("unexpected tensor '" + name + "'");
    const auto rank = get_u64(in);
    if (rank > 8) throw InputError("tensor '" + name + "' rank out of range");
    ad::Shape shape(rank);
    for (auto& d : shape) d = get_u64(in);
    ad::Tensor& t = it->second;
    if (shape != t.shape()) {
      throw InputError("tensor '" + name + "' has shape " + ad::shape_string(shape) +
                       ", expected " + ad::shape_string(t.shape()));
    }
    for (double& v : t.mutable_data()) v = std::bit_cast<double>(get_u64(in));
  }
  return ck;
}

void save_checkpoint(const std::string& path, const DualModel& model,
                     nlohmann::json metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path);
  write_checkpoint(out, model, std::move(metadata));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace l2lws::model
