#include "hdl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "hdl/error.hpp"
#include "hdl/io.hpp"

namespace hdl {

namespace {

constexpr std::array<char, 8> kMagic = {'H', 'D', 'L', 'N', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("corrupt_checkpoint", path_.string() + ": truncated file");
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

struct Header {
  ModelKind kind;
  std::array<std::uint32_t, 3> dims;
};

Header header_of(const AnyModel& model) {
  return std::visit(
      [](const auto& m) -> Header {
        using M = std::decay_t<decltype(m)>;
        const auto& d = m.dims();
        if constexpr (M::kind == ModelKind::hdln) {
          return {M::kind,
                  {static_cast<std::uint32_t>(d.input), static_cast<std::uint32_t>(d.global_hidden),
                   static_cast<std::uint32_t>(d.local_hidden)}};
        } else {
          return {M::kind, {static_cast<std::uint32_t>(d.input), static_cast<std::uint32_t>(d.hidden), 0}};
        }
      },
      model);
}

template <typename M>
void read_tensors(M& model, Reader& reader, const std::filesystem::path& path) {
  std::size_t expected = 0;
  auto params = model.parameters();
  for (const auto& p : params) expected += p.values.size();
  if (reader.remaining() != expected * 4) {
    throw Error("corrupt_checkpoint", path.string() + ": expected " + std::to_string(expected * 4) +
                                          " tensor bytes, found " + std::to_string(reader.remaining()));
  }
  for (auto& p : params) {
    for (auto& v : p.values) v = reader.get_f32();
  }
}

}  // namespace

ModelKind kind_of(const AnyModel& model) { return header_of(model).kind; }

std::size_t input_dim(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.dims().input; }, model);
}

void save_checkpoint(const std::filesystem::path& path, const AnyModel& model, std::uint64_t seed) {
  const auto header = header_of(model);
  std::string out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, schema().hash());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.kind));
  for (auto d : header.dims) put_le<std::uint32_t>(out, d);
  put_le<std::uint64_t>(out, seed);
  std::visit(
      [&](const auto& m) {
        for (const auto& p : m.parameters()) {
          for (float v : p.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
        }
      },
      model);
  auto file = open_output(path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("io_error", "failed to write checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader reader(bytes, path);
  reader.need(kMagic.size());
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error("corrupt_checkpoint", path.string() + ": bad magic");
  }
  for (std::size_t i = 0; i < kMagic.size(); ++i) reader.get<std::uint8_t>();

  const auto version = reader.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error("incompatible_checkpoint", path.string() + ": format version " + std::to_string(version) +
                                               ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto schema_hash = reader.get<std::uint64_t>();
  if (schema_hash != schema().hash()) {
    throw Error("incompatible_checkpoint", path.string() + ": label schema hash mismatch");
  }
  const auto kind = reader.get<std::uint32_t>();
  std::array<std::uint32_t, 3> dims{};
  for (auto& d : dims) d = reader.get<std::uint32_t>();
  const auto seed = reader.get<std::uint64_t>();
  constexpr std::uint32_t kMaxDim = 1u << 16;
  for (std::size_t i = 0; i < 2; ++i) {
    if (dims[i] == 0 || dims[i] > kMaxDim) {
      throw Error("corrupt_checkpoint", path.string() + ": implausible dimension " + std::to_string(dims[i]));
    }
  }

  if (kind == static_cast<std::uint32_t>(ModelKind::embed_mlp)) {
    auto m = EmbedMlpModel<float>::create({dims[0], dims[1]}, 0);
    read_tensors(m, reader, path);
    return {std::move(m), seed};
  }
  if (kind == static_cast<std::uint32_t>(ModelKind::hdln)) {
    if (dims[2] == 0) throw Error("corrupt_checkpoint", path.string() + ": zero dimension");
    auto m = HdlnModel<float>::create({dims[0], dims[1], dims[2]}, 0);
    read_tensors(m, reader, path);
    return {std::move(m), seed};
  }
  throw Error("corrupt_checkpoint", path.string() + ": unknown model kind " + std::to_string(kind));
}

}  // namespace hdl
