#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mtlm/error.hpp"
#include "mtlm/model.hpp"

namespace mtlm {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "MTLM1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

json config_to_json(const ModelConfig& c) {
  return {{"embedding_dim", c.embedding_dim},
          {"hidden_dim", c.hidden_dim},
          {"layers", c.layers},
          {"tie_embeddings", c.tie_embeddings},
          {"variant", std::string(to_string(c.variant))},
          {"init_scale", c.init_scale},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.tie_embeddings = j.at("tie_embeddings").get<bool>();
  c.variant = parse_encoder_variant(j.at("variant").get<std::string>());
  c.init_scale = j.at("init_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const MultiTaskModel& model) {
  const ParamSet& params = model.params();
  json arrays = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    arrays.push_back({{"name", params.name(i)},
                      {"rows", params.value(i).rows()},
                      {"cols", params.value(i).cols()}});
  }
  const json manifest = {{"config", config_to_json(model.config())},
                         {"vocab", model.vocab().ordinary_tokens()},
                         {"intents", model.intents().names()},
                         {"slots", model.slots().names()},
                         {"arrays", arrays}};
  const std::string text = manifest.dump();

  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * params.total_size());
  for (std::size_t i = 0; i < params.size(); ++i)
    for (double v : params.value(i).data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

MultiTaskModel deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError("missing MTLM1 magic header");
  }
  const std::uint64_t manifest_len = get_u64(bytes, kMagic.size());
  std::size_t pos = kMagic.size() + 8;
  if (manifest_len > bytes.size() - pos) throw CheckpointError("truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, manifest_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
  pos += manifest_len;

  try {
    const ModelConfig config = config_from_json(manifest.at("config"));
    const Vocabulary vocab(manifest.at("vocab").get<std::vector<std::string>>());
    LabelSet intents(manifest.at("intents").get<std::vector<std::string>>());
    LabelSet slots(manifest.at("slots").get<std::vector<std::string>>());
    ParamSet params;
    for (const auto& a : manifest.at("arrays")) {
      const auto rows = a.at("rows").get<std::size_t>();
      const auto cols = a.at("cols").get<std::size_t>();
      if (rows * cols > (bytes.size() - pos) / 8) throw CheckpointError("truncated array data");
      std::vector<double> data(rows * cols);
      for (double& v : data) {
        v = std::bit_cast<double>(get_u64(bytes, pos));
        pos += 8;
      }
      params.add(a.at("name").get<std::string>(), Matrix(rows, cols, std::move(data)));
    }
    if (pos != bytes.size()) throw CheckpointError("trailing bytes after array data");
    return MultiTaskModel::assemble(vocab, std::move(intents), std::move(slots), config, std::move(params));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
}

void save_checkpoint(const MultiTaskModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

MultiTaskModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace mtlm
