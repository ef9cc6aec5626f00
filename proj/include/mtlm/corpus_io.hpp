#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtlm/corpus.hpp"
#include "mtlm/rescorer.hpp"

namespace mtlm {

// Whole-file helpers; failures raise IoError naming the path.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

struct LabelInventory {
  std::vector<std::string> intents;
  std::vector<std::string> slots;
};

// One JSON object per line: {"id", "text", "intent", "slots"} with the slot
// labels space-aligned to the text. Transcription-only records omit intent
// and slots.
std::string utterance_record(const AnnotatedUtterance& utt);
std::string format_utterances(std::span<const AnnotatedUtterance> utts);
// `source` names the input in error messages. With `labels`, unknown intent or
// slot labels raise LabelError.
std::vector<AnnotatedUtterance> parse_utterances(std::string_view text, std::string_view source,
                                                 const LabelInventory* labels = nullptr);
void write_utterances(const std::filesystem::path& path, std::span<const AnnotatedUtterance> utts);
std::vector<AnnotatedUtterance> read_utterances(const std::filesystem::path& path,
                                                const LabelInventory* labels = nullptr);

std::string format_labels(const LabelInventory& labels);
LabelInventory parse_labels(std::string_view text, std::string_view source);

// Directory layout: labels.json plus one <split>.jsonl per split.
void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::filesystem::path& dir);

// {"id", "ref", "hyps": [{"text", "score"}]} per line.
std::string format_nbest(std::span<const NBestList> lists);
std::vector<NBestList> parse_nbest(std::string_view text, std::string_view source);
void write_nbest(const std::filesystem::path& path, std::span<const NBestList> lists);
std::vector<NBestList> read_nbest(const std::filesystem::path& path);

// N-best records with per-hypothesis "lm" and "combined" scores and the "chosen" index.
std::string format_rescored(std::span<const NBestList> lists, std::span<const RescoreResult> results,
                            double lambda);

std::string grammar_to_json(const GrammarSpec& spec);
GrammarSpec grammar_from_json(std::string_view text, std::string_view source);

}  // namespace mtlm
