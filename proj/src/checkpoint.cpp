#include "wmdrive/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wmdrive/errors.hpp"

namespace wmdrive {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");

namespace {

constexpr char kMagic[8] = {'W', 'M', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr const char* kSchema = "wmdrive.checkpoint";

using nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ordered_json tensor_entry(const nn::Param& p, const std::string& prefix) {
  return {{"name", prefix + p.name}, {"shape", p.shape}};
}

void append_floats(std::string& out, const nn::Param& p, const std::string& what) {
  for (double v : p.value) {
    const float f = static_cast<float>(v);
    if (static_cast<double>(f) != v && std::isfinite(v))
      throw NumericalError("checkpoint: " + what + p.name + " holds a value that is not float-representable");
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
  }
}

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw LoadError("checkpoint field '" + field + "': " + why);
}

const ordered_json& require(const ordered_json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) bad_field(path + key, "missing");
  return j.at(key);
}

std::int64_t require_int(const ordered_json& j, const std::string& key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_number_integer()) bad_field(path + key, "expected an integer");
  return v.get<std::int64_t>();
}

std::string require_string(const ordered_json& j, const std::string& key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_string()) bad_field(path + key, "expected a string");
  return v.get<std::string>();
}

std::vector<const nn::Param*> optimizer_params(const Model& model, int stage) {
  return stage == 1 ? nn::param_list(model.net) : nn::param_list(model.net.planner);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const Model& model, int stage,
                     std::int64_t step, const nn::Adam* adam) {
  if (stage != 1 && stage != 2) throw ConfigError("checkpoint stage must be 1 or 2");
  ordered_json header;
  header["schema"] = kSchema;
  header["version"] = kCheckpointVersion;
  ordered_json conf = ordered_json::object();
  RunConfig stored = cfg;
  stored.workers = 0;  // execution setting, not part of the result
  for (const auto& [k, v] : config_entries(stored)) conf[k] = v;
  header["config"] = conf;
  header["encoder"] = {{"seed", model.enc.seed},
                       {"input_dim", model.enc.input_dim()},
                       {"dim", model.enc.dim},
                       {"checksum", hex64(checksum(model.enc))}};
  header["stage"] = stage;
  header["step"] = step;
  header["rng"] = {{"seed", cfg.train.seed}, {"step", step}};
  header["adam_steps"] = adam ? adam->steps() : 0;
  header["optimizer"] = adam != nullptr;

  ordered_json tensors = ordered_json::array();
  std::string payload;
  for (const nn::Param* p : nn::param_list(model.net)) {
    tensors.push_back(tensor_entry(*p, ""));
    append_floats(payload, *p, "");
  }
  if (adam) {
    const auto owned = optimizer_params(model, stage);
    if (owned.size() != adam->first_moments().size())
      throw InputError("checkpoint: optimizer does not cover the stage's parameters");
    for (const auto& m : adam->first_moments()) {
      tensors.push_back(tensor_entry(m, "adam.m/"));
      append_floats(payload, m, "adam.m/");
    }
    for (const auto& v : adam->second_moments()) {
      tensors.push_back(tensor_entry(v, "adam.v/"));
      append_floats(payload, v, "adam.v/");
    }
  }
  header["tensors"] = tensors;

  const std::string text = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  f.write(kMagic, 8);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();

  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) bad_field("magic", "not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&len, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) bad_field("version", "unsupported version " + std::to_string(version));
  if (len > bytes.size() - 20) bad_field("header_length", "exceeds file size");

  ordered_json h;
  try {
    h = ordered_json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    bad_field("header", std::string("malformed JSON: ") + e.what());
  }
  if (require_string(h, "schema", "") != kSchema) bad_field("schema", "unexpected value");
  if (require_int(h, "version", "") != kCheckpointVersion) bad_field("version", "does not match the preamble");

  Checkpoint ck;
  const auto& conf = require(h, "config", "");
  if (!conf.is_object()) bad_field("config", "expected an object");
  for (const auto& [k, v] : conf.items()) {
    if (!v.is_string()) bad_field("config." + k, "expected a string");
    try {
      set_config_value(ck.config, k, v.get<std::string>());
    } catch (const ConfigError& e) {
      bad_field("config." + k, e.what());
    }
  }
  try {
    ck.config.finalize();
  } catch (const ConfigError& e) {
    bad_field("config", e.what());
  }

  ck.stage = static_cast<int>(require_int(h, "stage", ""));
  if (ck.stage != 1 && ck.stage != 2) bad_field("stage", "must be 1 or 2");
  ck.step = require_int(h, "step", "");
  if (ck.step < 0) bad_field("step", "negative");
  ck.adam_steps = require_int(h, "adam_steps", "");
  const auto& rng = require(h, "rng", "");
  const std::uint64_t rng_seed = static_cast<std::uint64_t>(require_int(rng, "seed", "rng."));
  if (rng_seed != ck.config.train.seed) bad_field("rng.seed", "does not match train.seed");
  if (require_int(rng, "step", "rng.") != ck.step) bad_field("rng.step", "does not match step");

  ck.model = init_model(ck.config.model);
  const auto& enc = require(h, "encoder", "");
  if (static_cast<std::uint64_t>(require_int(enc, "seed", "encoder.")) != ck.model.enc.seed)
    bad_field("encoder.seed", "does not match model.encoder_seed");
  if (require_int(enc, "input_dim", "encoder.") != ck.model.enc.input_dim()) bad_field("encoder.input_dim", "mismatch");
  if (require_int(enc, "dim", "encoder.") != ck.model.enc.dim) bad_field("encoder.dim", "mismatch");
  if (require_string(enc, "checksum", "encoder.") != hex64(checksum(ck.model.enc)))
    bad_field("encoder.checksum", "rebuilt encoder differs from the stored one");

  std::vector<nn::Param*> targets = nn::param_list(ck.model.net);
  std::vector<std::string> prefixes(targets.size(), "");
  const auto& has_opt = require(h, "optimizer", "");
  if (!has_opt.is_boolean()) bad_field("optimizer", "expected a boolean");
  if (has_opt.get<bool>()) {
    for (const nn::Param* p : optimizer_params(ck.model, ck.stage)) {
      ck.adam_m.push_back(nn::Param{p->name, p->shape, std::vector<double>(p->size(), 0.0)});
      ck.adam_v.push_back(nn::Param{p->name, p->shape, std::vector<double>(p->size(), 0.0)});
    }
    for (auto& m : ck.adam_m) targets.push_back(&m), prefixes.push_back("adam.m/");
    for (auto& v : ck.adam_v) targets.push_back(&v), prefixes.push_back("adam.v/");
  }

  const auto& tensors = require(h, "tensors", "");
  if (!tensors.is_array()) bad_field("tensors", "expected an array");
  if (tensors.size() != targets.size())
    bad_field("tensors", "expected " + std::to_string(targets.size()) + " entries, found " +
                             std::to_string(tensors.size()));
  std::size_t offset = 20 + len;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::string where = "tensors[" + std::to_string(i) + "]";
    const std::string name = require_string(tensors[i], "name", where + ".");
    if (name != prefixes[i] + targets[i]->name)
      bad_field(where + ".name", "expected '" + prefixes[i] + targets[i]->name + "', found '" + name + "'");
    const auto& shape = require(tensors[i], "shape", where + ".");
    if (!shape.is_array() || shape.get<std::vector<std::size_t>>() != targets[i]->shape)
      bad_field(where + ".shape", "does not match the configured model for " + name);
    const std::size_t n = targets[i]->size();
    if (bytes.size() < offset + 4 * n) bad_field("payload", "truncated at " + name);
    for (std::size_t k = 0; k < n; ++k) {
      float v;
      std::memcpy(&v, bytes.data() + offset + 4 * k, 4);
      targets[i]->value[k] = v;
    }
    offset += 4 * n;
  }
  if (offset != bytes.size()) bad_field("payload", "trailing bytes after the last tensor");
  return ck;
}

void restore_optimizer(const Checkpoint& ck, nn::Adam& adam) {
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  if (ck.adam_m.empty()) {
    adam.set_steps(ck.adam_steps);
    return;
  }
  if (m.size() != ck.adam_m.size()) throw LoadError("checkpoint optimizer state does not match this stage");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape != ck.adam_m[i].shape) throw LoadError("checkpoint optimizer tensor " + m[i].name + " shape mismatch");
    m[i].value = ck.adam_m[i].value;
    v[i].value = ck.adam_v[i].value;
  }
  adam.set_steps(ck.adam_steps);
}

}  // namespace wmdrive
