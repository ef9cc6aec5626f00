#include "cli_support.hpp"

#include <algorithm>
#include <cstdio>

#include "mtlm/corpus_io.hpp"
#include "mtlm/error.hpp"
#include "mtlm/format.hpp"
#include "mtlm/rng.hpp"

namespace mtlm::cli {

ConfigFlags::Binding& ConfigFlags::bind(const std::string& name, const std::string& pointer, char kind) {
  Binding& b = bindings_.emplace_back();
  b.name = name;
  b.pointer = pointer;
  b.kind = kind;
  return b;
}

void ConfigFlags::count(CLI::App* app, const std::string& name, const std::string& pointer,
                        const std::string& help) {
  Binding& b = bind(name, pointer, 'u');
  b.option = app->add_option(name, b.raw, help);
}

void ConfigFlags::real(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
  Binding& b = bind(name, pointer, 'f');
  b.option = app->add_option(name, b.raw, help);
}

void ConfigFlags::text(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
  Binding& b = bind(name, pointer, 's');
  b.option = app->add_option(name, b.raw, help);
}

void ConfigFlags::reals(CLI::App* app, const std::string& name, const std::string& pointer,
                        const std::string& help) {
  Binding& b = bind(name, pointer, 'l');
  b.option = app->add_option(name, b.raw, help);
}

void ConfigFlags::toggle(CLI::App* app, const std::string& name, const std::string& pointer, bool value,
                         const std::string& help) {
  Binding& b = bind(name, pointer, 'b');
  b.value = value;
  b.option = app->add_flag(name, b.seen, help);
}

namespace {

double flag_number(const std::string& name, const std::string& raw) {
  try {
    return parse_number(raw);
  } catch (const ParseError&) {
    throw ConfigError(name + ": expected a number, got '" + raw + "'");
  }
}

}  // namespace

void ConfigFlags::apply(json& config) const {
  for (const Binding& b : bindings_) {
    if (b.option->count() == 0) continue;
    const json::json_pointer ptr(b.pointer);
    switch (b.kind) {
      case 'u': {
        std::size_t v = 0;
        const auto res = std::from_chars(b.raw.data(), b.raw.data() + b.raw.size(), v);
        if (res.ec != std::errc() || res.ptr != b.raw.data() + b.raw.size()) {
          throw ConfigError(b.name + ": expected a non-negative integer, got '" + b.raw + "'");
        }
        config[ptr] = v;
        break;
      }
      case 'f':
        config[ptr] = flag_number(b.name, b.raw);
        break;
      case 'l': {
        json list = json::array();
        std::size_t start = 0;
        while (start <= b.raw.size()) {
          const std::size_t end = std::min(b.raw.find(',', start), b.raw.size());
          list.push_back(flag_number(b.name, b.raw.substr(start, end - start)));
          start = end + 1;
        }
        config[ptr] = list;
        break;
      }
      case 'b':
        config[ptr] = b.value;
        break;
      default:
        config[ptr] = b.raw;
    }
  }
}

void merge_config(json& base, const json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError("config " + (where.empty() ? "file" : "'" + where + "'") + " must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string name = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, name);
    } else {
      slot = value;
    }
  }
}

json read_json(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

namespace {

const json& lookup(const json& config, const std::string& pointer) {
  const json::json_pointer ptr(pointer);
  if (!config.contains(ptr)) throw ConfigError("missing config value '" + pointer + "'");
  return config.at(ptr);
}

[[noreturn]] void wrong_type(const std::string& pointer, const char* expected, const json& v) {
  throw ConfigError("config value '" + pointer + "' must be " + expected + ", got " + v.dump());
}

}  // namespace

std::size_t get_count(const json& config, const std::string& pointer) {
  const json& v = lookup(config, pointer);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
    wrong_type(pointer, "a non-negative integer", v);
  }
  return v.get<std::size_t>();
}

double get_real(const json& config, const std::string& pointer) {
  const json& v = lookup(config, pointer);
  if (!v.is_number()) wrong_type(pointer, "a number", v);
  return v.get<double>();
}

bool get_bool(const json& config, const std::string& pointer) {
  const json& v = lookup(config, pointer);
  if (!v.is_boolean()) wrong_type(pointer, "true or false", v);
  return v.get<bool>();
}

std::string get_text(const json& config, const std::string& pointer) {
  const json& v = lookup(config, pointer);
  if (!v.is_string()) wrong_type(pointer, "a string", v);
  return v.get<std::string>();
}

std::vector<double> get_reals(const json& config, const std::string& pointer) {
  const json& v = lookup(config, pointer);
  if (!v.is_array()) wrong_type(pointer, "an array of numbers", v);
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number()) wrong_type(pointer, "an array of numbers", v);
    out.push_back(x.get<double>());
  }
  return out;
}

std::string checksum_bytes(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(hash_string(bytes)));
  return buf;
}

std::string checksum_path(const fs::path& path) {
  if (!fs::is_directory(path)) return checksum_bytes(read_text_file(path));
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::string listing;
  for (const auto& n : names) listing += n + '\t' + checksum_bytes(read_text_file(path / n)) + '\n';
  return checksum_bytes(listing);
}

void Artifacts::write(const std::string& name, std::string_view bytes) {
  write_text_file(dir_ / name, bytes);
  checksums_[name] = checksum_bytes(bytes);
}

void Artifacts::record(const std::string& name) { checksums_[name] = checksum_bytes(read_text_file(dir_ / name)); }

json input_records(const Inputs& inputs) {
  json in = json::object();
  for (const auto& [name, path] : inputs) in[name] = {{"path", path.string()}, {"checksum", checksum_path(path)}};
  return in;
}

json manifest_json(const std::string& command, const json& config, const json& inputs, const fs::path& out,
                   const Artifacts* artifacts) {
  json m = {{"tool", "mtlm"},
            {"format", 1},
            {"command", command},
            {"config", config},
            {"seed", config.contains("seed") ? config["seed"] : json(nullptr)},
            {"inputs", inputs},
            {"out", out.string()},
            {"status", artifacts ? "complete" : "running"},
            {"artifacts", artifacts ? json(artifacts->checksums()) : json::object()}};
  return m;
}

void write_manifest(const fs::path& out, const json& manifest) {
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace mtlm::cli
