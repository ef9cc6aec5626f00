#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace mtlm::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Flags that override one entry of the resolved config, addressed by JSON pointer.
class ConfigFlags {
 public:
  void count(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help);
  void real(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help);
  void text(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help);
  // Comma-separated numbers.
  void reals(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help);
  // Sets the entry to `value` when present.
  void toggle(CLI::App* app, const std::string& name, const std::string& pointer, bool value,
              const std::string& help);

  void apply(json& config) const;

 private:
  struct Binding {
    std::string name;
    std::string pointer;
    char kind = 's';
    bool value = false;
    std::string raw;
    bool seen = false;
    CLI::Option* option = nullptr;
  };
  Binding& bind(const std::string& name, const std::string& pointer, char kind);
  std::deque<Binding> bindings_;
};

// Overlays a config file onto the defaults; unknown keys are config errors.
void merge_config(json& base, const json& overlay, const std::string& where = "");

json read_json(const fs::path& path);

// Typed access to the resolved config.
std::size_t get_count(const json& config, const std::string& pointer);
double get_real(const json& config, const std::string& pointer);
bool get_bool(const json& config, const std::string& pointer);
std::string get_text(const json& config, const std::string& pointer);
std::vector<double> get_reals(const json& config, const std::string& pointer);

std::string checksum_bytes(std::string_view bytes);
// Files hash their bytes; directories hash the sorted (name, checksum) list of
// their regular files, manifests excluded.
std::string checksum_path(const fs::path& path);

using Inputs = std::map<std::string, fs::path>;

// Named output files of one command, in write order.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}
  const fs::path& dir() const noexcept { return dir_; }
  void write(const std::string& name, std::string_view bytes);
  // For files a library routine wrote itself.
  void record(const std::string& name);
  const std::map<std::string, std::string>& checksums() const noexcept { return checksums_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> checksums_;
};

// {name: {"path", "checksum"}} for every input.
json input_records(const Inputs& inputs);
json manifest_json(const std::string& command, const json& config, const json& inputs, const fs::path& out,
                   const Artifacts* artifacts);
void write_manifest(const fs::path& out, const json& manifest);

}  // namespace mtlm::cli
