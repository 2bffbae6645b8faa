#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tpgm/errors.hpp"
#include "tpgm/models.hpp"

namespace tpgm {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'P', 'G', 'M', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNameLength = 4096;

enum class ArchTag : std::uint8_t { Linear = 0, Mlp = 1 };

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bytes.begin(), bytes.end());
    }
    out_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }

  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get() {
    std::array<unsigned char, sizeof(T)> bytes{};
    in_.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in_) throw ContractError("model file truncated");
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    if (len > kMaxNameLength) throw ContractError("model file: group name too long");
    std::string s(len, '\0');
    in_.read(s.data(), len);
    if (!in_) throw ContractError("model file truncated");
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_model(std::ostream& out, const Model& model) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kVersion);

  std::vector<std::size_t> widths;
  if (const auto* lin = std::get_if<LinearArch>(&model.architecture())) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ArchTag::Linear));
    widths = lin->slice_widths;
  } else {
    const auto& mlp = std::get<MlpArch>(model.architecture());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ArchTag::Mlp));
    widths = mlp.widths;
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(widths.size()));
  for (std::size_t v : widths) w.put<std::uint64_t>(v);
  const auto* mlp = std::get_if<MlpArch>(&model.architecture());
  w.put<std::uint8_t>(mlp && mlp->activation == Activation::Identity ? 1 : 0);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.group_count()));
  for (const auto& g : model.groups()) {
    w.put_string(g.name);
    w.put<std::uint8_t>(g.kind == ParamKind::Bias ? 1 : 0);
    w.put<std::int32_t>(g.layer_index);
    w.put<std::int32_t>(g.block_id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(g.tensor.rank()));
    for (std::size_t e : g.tensor.shape()) w.put<std::uint64_t>(e);
  }
  for (const auto& g : model.groups()) {
    for (double v : g.tensor.data()) w.put<double>(v);
  }
  if (!out) throw Error("failed writing model");
}

Model load_model(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ContractError("not a TPGM model file (bad magic)");
  Reader r(in);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw ContractError("unsupported model file version " + std::to_string(version));
  }
  const auto tag = r.get<std::uint8_t>();
  const auto width_count = r.get<std::uint32_t>();
  if (width_count == 0 || width_count > 1024) throw ContractError("model file: bad width count");
  std::vector<std::size_t> widths(width_count);
  for (auto& v : widths) v = static_cast<std::size_t>(r.get<std::uint64_t>());
  const auto act = r.get<std::uint8_t>();

  Architecture arch;
  if (tag == static_cast<std::uint8_t>(ArchTag::Linear)) {
    arch = LinearArch{widths};
  } else if (tag == static_cast<std::uint8_t>(ArchTag::Mlp)) {
    arch = MlpArch{widths, act == 1 ? Activation::Identity : Activation::Tanh};
  } else {
    throw ContractError("model file: unknown architecture tag");
  }

  const auto group_count = r.get<std::uint32_t>();
  std::vector<ParamGroup> groups(group_count);
  std::vector<std::vector<std::size_t>> shapes(group_count);
  for (std::uint32_t i = 0; i < group_count; ++i) {
    groups[i].name = r.get_string();
    groups[i].kind = r.get<std::uint8_t>() == 1 ? ParamKind::Bias : ParamKind::Weight;
    groups[i].layer_index = r.get<std::int32_t>();
    groups[i].block_id = r.get<std::int32_t>();
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 2) throw ContractError("model file: bad tensor rank");
    shapes[i].resize(rank);
    for (auto& e : shapes[i]) e = static_cast<std::size_t>(r.get<std::uint64_t>());
  }
  for (std::uint32_t i = 0; i < group_count; ++i) {
    std::size_t count = 1;
    for (std::size_t e : shapes[i]) count *= e;
    std::vector<double> values(count);
    for (auto& v : values) v = r.get<double>();
    groups[i].tensor = Tensor(shapes[i], std::move(values));
  }

  if (group_count == 0) throw ContractError("model file: no parameter groups");
  // Validate the manifest against a freshly built model of the same architecture.
  Model model(arch, std::move(groups));
  const Model expected = [&] {
    if (const auto* mlp = std::get_if<MlpArch>(&arch)) {
      Rng rng(0);
      return Model::mlp(widths, mlp->activation, rng);
    }
    if (widths.size() == 1 && model.groups().front().name == "theta") {
      return Model::linear(widths.front());
    }
    return Model::linear_blocks(widths);
  }();
  if (!model.same_architecture(expected)) {
    throw ContractError("model file: group manifest does not match architecture");
  }
  return model;
}

void save_model(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_model(out, model);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open model file '" + path + "'");
  return load_model(in);
}

}  // namespace tpgm
