#include "star/run_config.hpp"

#include <functional>
#include <map>

#include "star/errors.hpp"
#include "star/random.hpp"

namespace star {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object into fields, rejecting anything unknown.
class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void size(const char* key, std::size_t& out) {
    field(key, [&](const json& v, const std::string& where) {
      if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
      out = v.get<std::size_t>();
    });
  }
  void u64(const char* key, std::uint64_t& out) {
    field(key, [&](const json& v, const std::string& where) {
      if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
      out = v.get<std::uint64_t>();
    });
  }
  void number(const char* key, double& out) {
    field(key, [&](const json& v, const std::string& where) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      out = v.get<double>();
    });
  }
  void structure(const char* key, AttentionKind& out) {
    field(key, [&](const json& v, const std::string& where) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string such as \"F-Z\"");
      try {
        out = parse_structure_label(v.get<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
      }
    });
  }
  void object(const char* key, const std::function<void(const json&, const std::string&)>& fn) {
    field(key, fn);
  }

  /// Call after all fields were read.
  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(path_ + "." + it.key() + ": unknown key");
  }

 private:
  void field(const char* key, const std::function<void(const json&, const std::string&)>& fn) {
    seen_[key] = true;
    if (doc_.contains(key)) fn(doc_.at(key), path_ + "." + key);
  }

  const json& doc_;
  std::string path_;
  std::map<std::string, bool> seen_;
};

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"global_channels", c.global_channels},
          {"local_channels", c.local_channels},
          {"joints", c.joints},
          {"dim", c.model_dim},
          {"heads", c.heads},
          {"layers", c.layers},
          {"classes", c.num_classes},
          {"sigma", c.sigma},
          {"encoder", structure_label(c.encoder_sta)},
          {"decoder", structure_label(c.decoder_sta)}};
}

json to_json(const BackboneConfig& c) {
  return {{"global_channels", c.global_channels},
          {"local_channels", c.local_channels},
          {"patch", c.patch},
          {"pool", c.pool}};
}

json to_json(const DataConfig& c) {
  return {{"classes", c.classes},
          {"clips_per_class", c.clips_per_class},
          {"frames", c.frames},
          {"joints", c.joints},
          {"height", c.height},
          {"width", c.width},
          {"window_start", c.window_start},
          {"window_length", c.window_length},
          {"noise", c.noise},
          {"jitter", c.jitter},
          {"blob_radius", c.blob_radius},
          {"light", c.light}};
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs}};
}

ModelConfig model_config_from_json(const json& doc, const std::string& path) {
  ModelConfig c;
  ObjectReader r(doc, path);
  r.size("global_channels", c.global_channels);
  r.size("local_channels", c.local_channels);
  r.size("joints", c.joints);
  r.size("dim", c.model_dim);
  r.size("heads", c.heads);
  r.size("layers", c.layers);
  r.size("classes", c.num_classes);
  r.number("sigma", c.sigma);
  r.structure("encoder", c.encoder_sta);
  r.structure("decoder", c.decoder_sta);
  r.finish();
  return c;
}

BackboneConfig backbone_config_from_json(const json& doc, const std::string& path) {
  BackboneConfig c;
  ObjectReader r(doc, path);
  r.size("global_channels", c.global_channels);
  r.size("local_channels", c.local_channels);
  r.size("patch", c.patch);
  r.size("pool", c.pool);
  r.finish();
  return c;
}

DataConfig data_config_from_json(const json& doc, const std::string& path) {
  DataConfig c;
  ObjectReader r(doc, path);
  r.size("classes", c.classes);
  r.size("clips_per_class", c.clips_per_class);
  r.size("frames", c.frames);
  r.size("joints", c.joints);
  r.size("height", c.height);
  r.size("width", c.width);
  r.size("window_start", c.window_start);
  r.size("window_length", c.window_length);
  r.number("noise", c.noise);
  r.number("jitter", c.jitter);
  r.number("blob_radius", c.blob_radius);
  r.number("light", c.light);
  r.finish();
  return c;
}

TrainConfig train_config_from_json(const json& doc, const std::string& path) {
  TrainConfig c;
  ObjectReader r(doc, path);
  r.number("learning_rate", c.learning_rate);
  r.number("momentum", c.momentum);
  r.size("batch_size", c.batch_size);
  r.size("epochs", c.epochs);
  r.finish();
  return c;
}

std::uint64_t RunConfig::data_seed() const { return derive_seed(seed, "data"); }
std::uint64_t RunConfig::init_seed() const { return derive_seed(seed, "init"); }
std::uint64_t RunConfig::shuffle_seed() const { return derive_seed(seed, "shuffle"); }
std::uint64_t RunConfig::backbone_seed() const { return derive_seed(seed, "backbone"); }

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
  if (backbone.patch == 0 || backbone.pool == 0)
    throw ConfigError("backbone.patch and backbone.pool must be positive");
  if (model.joints != data.joints)
    throw ConfigError("model.joints (" + std::to_string(model.joints) + ") must equal data.joints (" +
                      std::to_string(data.joints) + ")");
  if (model.num_classes != data.classes)
    throw ConfigError("model.classes (" + std::to_string(model.num_classes) +
                      ") must equal data.classes (" + std::to_string(data.classes) + ")");
  if (model.global_channels != backbone.global_channels ||
      model.local_channels != backbone.local_channels)
    throw ConfigError("model channel counts must match the backbone's");
  const std::size_t cell = backbone.patch * backbone.pool;
  if (data.height % cell != 0 || data.width % cell != 0)
    throw ConfigError("data frame size " + std::to_string(data.height) + "x" +
                      std::to_string(data.width) + " must be divisible by patch*pool = " +
                      std::to_string(cell));
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"model", star::to_json(model)},
          {"backbone", star::to_json(backbone)},
          {"data", star::to_json(data)},
          {"train", star::to_json(train)}};
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig c;
  ObjectReader r(doc, "config");
  r.u64("seed", c.seed);
  r.object("model", [&](const json& v, const std::string& p) { c.model = model_config_from_json(v, p); });
  r.object("backbone",
           [&](const json& v, const std::string& p) { c.backbone = backbone_config_from_json(v, p); });
  r.object("data", [&](const json& v, const std::string& p) { c.data = data_config_from_json(v, p); });
  r.object("train", [&](const json& v, const std::string& p) { c.train = train_config_from_json(v, p); });
  r.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

}  // namespace star
