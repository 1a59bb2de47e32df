#include "star/checkpoint.hpp"

#include <map>
#include <set>
#include <string>

#include "star/errors.hpp"
#include "star/run_config.hpp"
#include "star/stf.hpp"

namespace star {

namespace {

constexpr const char* kFormat = "star-checkpoint/1";

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint) {
  std::filesystem::create_directories(dir);
  nlohmann::json params = nlohmann::json::array();
  StarModelParams::fields(checkpoint.params, [&](const std::string& name, const Tensor& t) {
    const std::string file = name + ".stf";
    write_stf(dir / file, t);
    params.push_back({{"name", name}, {"file", file}, {"shape", t.shape()}});
  });
  const nlohmann::json manifest{{"format", kFormat},
                                {"seed", checkpoint.seed},
                                {"backbone_seed", checkpoint.backbone_seed},
                                {"model", to_json(checkpoint.model)},
                                {"backbone", to_json(checkpoint.backbone)},
                                {"parameters", std::move(params)}};
  const std::string text = manifest.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto where = (dir / "manifest.json").string();
  const auto bytes = read_file_bytes(dir / "manifest.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kFormat)
    throw FormatError(where + ": not a " + std::string(kFormat) + " manifest");
  for (const char* key : {"seed", "backbone_seed"})
    if (!doc.contains(key) || !doc[key].is_number_unsigned())
      throw FormatError(where + ": missing unsigned '" + key + "'");
  if (!doc.contains("parameters") || !doc["parameters"].is_array())
    throw FormatError(where + ": missing 'parameters' array");

  Checkpoint out;
  out.seed = doc["seed"].get<std::uint64_t>();
  out.backbone_seed = doc["backbone_seed"].get<std::uint64_t>();
  try {
    out.model = model_config_from_json(doc.at("model"));
    out.backbone = backbone_config_from_json(doc.at("backbone"));
    out.model.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  }

  std::map<std::string, std::string> files;
  for (const auto& entry : doc["parameters"]) {
    if (!entry.contains("name") || !entry.contains("file") || !entry["name"].is_string() ||
        !entry["file"].is_string())
      throw FormatError(where + ": parameter entry needs 'name' and 'file'");
    files[entry["name"].get<std::string>()] = entry["file"].get<std::string>();
  }
  // The config fixes the structure; every tensor must be present with its shape.
  out.params = init_model(out.model, 0);
  std::set<std::string> used;
  StarModelParams::fields(out.params, [&](const std::string& name, Tensor& t) {
    const auto it = files.find(name);
    if (it == files.end()) throw FormatError(where + ": missing parameter " + name);
    Tensor loaded = read_stf(dir / it->second);
    if (loaded.shape() != t.shape())
      throw FormatError(where + ": parameter " + name + " has shape " +
                        shape_string(loaded.shape()) + ", expected " + shape_string(t.shape()));
    t = std::move(loaded);
    used.insert(name);
  });
  for (const auto& [name, file] : files)
    if (!used.count(name)) throw FormatError(where + ": unexpected parameter " + name);
  return out;
}

}  // namespace star
