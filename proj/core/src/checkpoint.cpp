#include "moincl/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moincl/error.hpp"

namespace moincl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {
constexpr const char* kMagic = "MOINCL-CKPT 1";
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const CheckpointManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  nlohmann::ordered_json m;
  m["dims"] = {{"embed", manifest.dims.embed},   {"layers", manifest.dims.layers},
               {"heads", manifest.dims.heads},   {"context", manifest.dims.context},
               {"rank", manifest.dims.rank},     {"feature", manifest.dims.feature}};
  m["vocab_size"] = manifest.vocab_size;
  m["vocab_fingerprint"] = manifest.vocab_fingerprint;
  m["task_index"] = manifest.task_index;
  m["method"] = manifest.method;
  m["tensors"] = state.params().size();
  out << kMagic << '\n' << m.dump() << '\n';
  for (const auto& [name, p] : state.params()) {
    out << name << ' ' << p.value.rows() << ' ' << p.value.cols() << ' ' << to_string(p.group) << '\n';
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw Error("not a checkpoint: " + path.string());
  if (!std::getline(in, line)) throw Error("truncated checkpoint manifest");
  CheckpointManifest man;
  std::size_t count = 0;
  try {
    const auto m = nlohmann::json::parse(line);
    const auto& d = m.at("dims");
    man.dims = {d.at("embed").get<int>(), d.at("layers").get<int>(), d.at("heads").get<int>(),
                d.at("context").get<int>(), d.at("rank").get<int>(), d.at("feature").get<int>()};
    man.vocab_size = m.at("vocab_size").get<int>();
    man.vocab_fingerprint = m.at("vocab_fingerprint").get<std::uint64_t>();
    man.task_index = m.at("task_index").get<int>();
    man.method = m.at("method").get<std::string>();
    count = m.at("tensors").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad checkpoint manifest: ") + e.what());
  }
  ParamMap params;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw Error("truncated checkpoint at tensor " + std::to_string(i));
    std::istringstream hs(line);
    std::string name, group;
    Eigen::Index rows = 0, cols = 0;
    if (!(hs >> name >> rows >> cols >> group) || rows < 0 || cols < 0) {
      throw Error("bad tensor header: " + line);
    }
    Matrix value(rows, cols);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(value.size())));
    if (!in) throw Error("truncated tensor data for " + name);
    params.emplace(name, Parameter{std::move(value), ParamGroup::LmBase, std::nullopt});
  }
  return {man, ModelState::from_parts(man.dims, man.vocab_size, std::move(params))};
}

}  // namespace moincl
