#include "mtlm/corpus_io.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "mtlm/error.hpp"
#include "mtlm/vocabulary.hpp"

namespace mtlm {
namespace {

using nlohmann::json;

constexpr std::string_view kSplits[] = {"train_nlu", "train_trans", "dev", "test_gen", "test_rare"};

template <typename Bundle>
auto& split_ref(Bundle& b, std::string_view name) {
  if (name == "train_nlu") return b.train_nlu;
  if (name == "train_trans") return b.train_trans;
  if (name == "dev") return b.dev;
  if (name == "test_gen") return b.test_gen;
  return b.test_rare;
}

[[noreturn]] void fail(std::string_view source, std::size_t line, const std::string& msg) {
  throw ParseError(std::string(source) + ":" + std::to_string(line) + ": " + msg);
}

// Calls fn(json, line_number) for every nonblank line.
template <typename Fn>
void for_each_record(std::string_view text, std::string_view source, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      fail(source, line_no, std::string("malformed record: ") + e.what());
    }
    if (!record.is_object()) fail(source, line_no, "record is not an object");
    try {
      fn(record, line_no);
    } catch (const json::exception& e) {
      fail(source, line_no, std::string("bad field: ") + e.what());
    }
  }
}

std::string required_string(const json& j, const char* key, std::string_view source, std::size_t line) {
  if (!j.contains(key)) fail(source, line, std::string("missing field '") + key + "'");
  if (!j.at(key).is_string()) fail(source, line, std::string("field '") + key + "' is not a string");
  return j.at(key).get<std::string>();
}

json fillers_json(const std::vector<std::string>& v) { return json(v); }

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::string utterance_record(const AnnotatedUtterance& utt) {
  json j = {{"id", utt.id}, {"text", join_tokens(utt.tokens)}};
  if (utt.intent) {
    j["intent"] = *utt.intent;
    j["slots"] = join_tokens(utt.slots);
  }
  return j.dump();
}

std::string format_utterances(std::span<const AnnotatedUtterance> utts) {
  std::string out;
  for (const AnnotatedUtterance& u : utts) {
    out += utterance_record(u);
    out += '\n';
  }
  return out;
}

std::vector<AnnotatedUtterance> parse_utterances(std::string_view text, std::string_view source,
                                                 const LabelInventory* labels) {
  std::unordered_set<std::string> intents, slots;
  if (labels) {
    intents.insert(labels->intents.begin(), labels->intents.end());
    slots.insert(labels->slots.begin(), labels->slots.end());
  }
  std::vector<AnnotatedUtterance> out;
  std::unordered_set<std::string> ids;
  for_each_record(text, source, [&](const json& j, std::size_t line) {
    AnnotatedUtterance u;
    u.id = required_string(j, "id", source, line);
    if (!ids.insert(u.id).second) fail(source, line, "duplicate id '" + u.id + "'");
    u.tokens = split_whitespace(required_string(j, "text", source, line));
    if (u.tokens.empty()) fail(source, line, "empty text");
    const bool has_intent = j.contains("intent");
    if (has_intent != j.contains("slots")) fail(source, line, "intent and slots must appear together");
    if (has_intent) {
      u.intent = required_string(j, "intent", source, line);
      u.slots = split_whitespace(required_string(j, "slots", source, line));
      if (u.slots.size() != u.tokens.size()) {
        throw AlignmentError(std::string(source) + ":" + std::to_string(line) + ": " +
                             std::to_string(u.tokens.size()) + " tokens but " + std::to_string(u.slots.size()) +
                             " slot labels");
      }
      if (labels) {
        if (!intents.contains(*u.intent)) {
          throw LabelError(std::string(source) + ":" + std::to_string(line) + ": unknown intent label '" +
                           *u.intent + "'");
        }
        for (const std::string& s : u.slots) {
          if (!slots.contains(s)) {
            throw LabelError(std::string(source) + ":" + std::to_string(line) + ": unknown slot label '" + s +
                             "'");
          }
        }
      }
    }
    out.push_back(std::move(u));
  });
  return out;
}

void write_utterances(const std::filesystem::path& path, std::span<const AnnotatedUtterance> utts) {
  write_text_file(path, format_utterances(utts));
}

std::vector<AnnotatedUtterance> read_utterances(const std::filesystem::path& path, const LabelInventory* labels) {
  return parse_utterances(read_text_file(path), path.string(), labels);
}

std::string format_labels(const LabelInventory& labels) {
  return json{{"intents", labels.intents}, {"slots", labels.slots}}.dump(2) + "\n";
}

LabelInventory parse_labels(std::string_view text, std::string_view source) {
  try {
    const json j = json::parse(text);
    return {j.at("intents").get<std::vector<std::string>>(), j.at("slots").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    throw ParseError(std::string(source) + ": malformed label inventory: " + e.what());
  }
}

void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / "labels.json", format_labels({bundle.intents, bundle.slot_labels}));
  for (std::string_view split : kSplits)
    write_utterances(dir / (std::string(split) + ".jsonl"), split_ref(bundle, split));
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  const LabelInventory labels = parse_labels(read_text_file(dir / "labels.json"), (dir / "labels.json").string());
  DatasetBundle b;
  b.intents = labels.intents;
  b.slot_labels = labels.slots;
  for (std::string_view split : kSplits)
    split_ref(b, split) = read_utterances(dir / (std::string(split) + ".jsonl"), &labels);
  return b;
}

std::string format_nbest(std::span<const NBestList> lists) {
  std::string out;
  for (const NBestList& list : lists) {
    json hyps = json::array();
    for (const Hypothesis& h : list.hypotheses)
      hyps.push_back({{"text", join_tokens(h.tokens)}, {"score", h.first_pass_logprob}});
    out += json{{"id", list.id}, {"ref", join_tokens(list.reference)}, {"hyps", hyps}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<NBestList> parse_nbest(std::string_view text, std::string_view source) {
  std::vector<NBestList> out;
  std::unordered_set<std::string> ids;
  for_each_record(text, source, [&](const json& j, std::size_t line) {
    NBestList list;
    list.id = required_string(j, "id", source, line);
    if (!ids.insert(list.id).second) fail(source, line, "duplicate id '" + list.id + "'");
    list.reference = split_whitespace(required_string(j, "ref", source, line));
    if (!j.contains("hyps") || !j.at("hyps").is_array()) fail(source, line, "missing hypothesis array 'hyps'");
    for (const json& h : j.at("hyps")) {
      if (!h.is_object() || !h.contains("score") || !h.at("score").is_number()) {
        fail(source, line, "hypothesis without a numeric 'score'");
      }
      list.hypotheses.push_back({split_whitespace(required_string(h, "text", source, line)), h.at("score").get<double>()});
    }
    try {
      list.validate();
    } catch (const DomainError& e) {
      fail(source, line, e.what());
    }
    out.push_back(std::move(list));
  });
  return out;
}

void write_nbest(const std::filesystem::path& path, std::span<const NBestList> lists) {
  write_text_file(path, format_nbest(lists));
}

std::vector<NBestList> read_nbest(const std::filesystem::path& path) {
  return parse_nbest(read_text_file(path), path.string());
}

std::string format_rescored(std::span<const NBestList> lists, std::span<const RescoreResult> results,
                            double lambda) {
  if (lists.size() != results.size()) throw DimensionError("rescoring results do not match the n-best lists");
  std::string out;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const NBestList& list = lists[i];
    const RescoreResult& r = results[i];
    json hyps = json::array();
    for (std::size_t k = 0; k < list.hypotheses.size(); ++k) {
      hyps.push_back({{"text", join_tokens(list.hypotheses[k].tokens)},
                      {"score", list.hypotheses[k].first_pass_logprob},
                      {"lm", r.lm_scores.at(k)},
                      {"combined", r.combined.at(k)}});
    }
    out += json{{"id", list.id},
                {"ref", join_tokens(list.reference)},
                {"hyps", hyps},
                {"lambda", lambda},
                {"chosen", r.chosen}}
               .dump();
    out += '\n';
  }
  return out;
}

std::string grammar_to_json(const GrammarSpec& spec) {
  json intents = json::array();
  for (const IntentTemplates& it : spec.intents) intents.push_back({{"name", it.intent}, {"templates", it.templates}});
  json slots = json::array();
  for (const SlotFillers& s : spec.slots) slots.push_back({{"name", s.slot}, {"fillers", fillers_json(s.fillers)}});
  return json{{"intents", intents},
              {"slots", slots},
              {"zipf_exponent", spec.zipf_exponent},
              {"other_label", spec.other_label},
              {"seed", spec.seed}}
             .dump(2) +
         "\n";
}

GrammarSpec grammar_from_json(std::string_view text, std::string_view source) {
  GrammarSpec spec;
  try {
    const json j = json::parse(text);
    for (const json& it : j.at("intents"))
      spec.intents.push_back({it.at("name").get<std::string>(), it.at("templates").get<std::vector<std::string>>()});
    for (const json& s : j.at("slots"))
      spec.slots.push_back({s.at("name").get<std::string>(), s.at("fillers").get<std::vector<std::string>>()});
    spec.zipf_exponent = j.value("zipf_exponent", spec.zipf_exponent);
    spec.other_label = j.value("other_label", spec.other_label);
    spec.seed = j.value("seed", spec.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string(source) + ": malformed grammar: " + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace mtlm
