#include "figphm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "figphm/error.hpp"

namespace figphm {

namespace {

constexpr std::string_view kDiseaseNames[] = {"alzheimers", "heart_attack", "parkinsons", "cancer",
                                              "depression", "stroke",       "other"};

struct CodePoint {
  char32_t value;
  std::size_t length;
};

CodePoint decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) -> int {
    if (pos + i >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + i]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0)
      return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
  }
  // Invalid sequence: pass the byte through as an ordinary character.
  return {0xFFFD, 1};
}

bool is_space(char32_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// ASCII punctuation and symbols, Latin-1 punctuation, General Punctuation,
// CJK symbols, and the common emoji/pictograph blocks.
bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  if (c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB || c == 0xBF) return true;
  if (c >= 0x2010 && c <= 0x205E) return true;
  if (c >= 0x3000 && c <= 0x303F) return true;
  if (c >= 0x2600 && c <= 0x27BF) return true;
  if (c >= 0x1F300 && c <= 0x1FAFF) return true;
  return false;
}

bool is_mention_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

bool starts_with(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.substr(pos, prefix.size()) == prefix;
}

std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  };
  std::size_t i = 0;
  while (i < chunk.size()) {
    if (word.empty()) {
      if (starts_with(chunk, i, kUrlToken) || starts_with(chunk, i, kUserToken)) {
        const auto& sentinel = starts_with(chunk, i, kUrlToken) ? kUrlToken : kUserToken;
        out.emplace_back(sentinel);
        i += sentinel.size();
        continue;
      }
      if (starts_with(chunk, i, "http://") || starts_with(chunk, i, "https://") ||
          starts_with(chunk, i, "www.")) {
        out.emplace_back(kUrlToken);
        return;
      }
      if (chunk[i] == '@' && i + 1 < chunk.size() && is_mention_char(chunk[i + 1])) {
        ++i;
        while (i < chunk.size() && is_mention_char(chunk[i])) ++i;
        out.emplace_back(kUserToken);
        continue;
      }
      if (chunk[i] == '#') {
        std::size_t j = i;
        while (j < chunk.size() && chunk[j] == '#') ++j;
        if (j < chunk.size() && !is_punct(decode_utf8(chunk, j).value)) {
          i = j;
          continue;
        }
      }
    }
    const CodePoint cp = decode_utf8(chunk, i);
    if (is_punct(cp.value)) {
      flush();
      out.emplace_back(chunk.substr(i, cp.length));
    } else {
      word.append(chunk.substr(i, cp.length));
    }
    i += cp.length;
  }
  flush();
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

std::string_view to_string(Disease d) { return kDiseaseNames[static_cast<std::size_t>(d)]; }

std::string_view to_string(PhmLabel l) { return l == PhmLabel::phm ? "PHM" : "NonPHM"; }

std::string_view to_string(UsageLabel l) { return l == UsageLabel::figurative ? "figurative" : "literal"; }

Disease parse_disease(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kDiseaseNames); ++i) {
    if (kDiseaseNames[i] == s) return static_cast<Disease>(i);
  }
  throw DataError("unknown disease '" + std::string(s) + "'");
}

PhmLabel parse_phm_label(std::string_view s) {
  if (s == "PHM") return PhmLabel::phm;
  if (s == "NonPHM") return PhmLabel::non_phm;
  throw DataError("unknown label '" + std::string(s) + "'");
}

UsageLabel parse_usage_label(std::string_view s) {
  if (s == "figurative") return UsageLabel::figurative;
  if (s == "literal") return UsageLabel::literal;
  throw DataError("unknown usage label '" + std::string(s) + "'");
}

bool is_sentinel(std::string_view token) { return token == kUrlToken || token == kUserToken; }

std::vector<std::string> tokenize(std::string_view raw_text) {
  const std::string text = lowercase_ascii(raw_text);
  const std::string_view view(text);
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < view.size()) {
    while (i < view.size() && is_space(static_cast<unsigned char>(view[i]))) ++i;
    std::size_t j = i;
    while (j < view.size() && !is_space(static_cast<unsigned char>(view[j]))) ++j;
    if (j > i) tokenize_chunk(view.substr(i, j - i), tokens);
    i = j;
  }
  return tokens;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<Document> parse_dataset(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim_cr(line);
    if (row.empty()) continue;
    auto fields = split_tabs(row);
    if (fields.size() != 4) {
      throw DataError("line " + std::to_string(line_no) + ": expected 4 fields");
    }
    Document doc;
    try {
      doc.id = std::move(fields[0]);
      doc.disease = parse_disease(fields[1]);
      doc.raw_text = std::move(fields[2]);
      doc.label = parse_phm_label(fields[3]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    doc.tokens = tokenize(doc.raw_text);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> load_dataset(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  try {
    return parse_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, std::span<const Document> docs) {
  for (const auto& doc : docs) {
    for (const auto* field : {&doc.id, &doc.raw_text}) {
      if (field->find_first_of("\t\n\r") != std::string::npos) {
        throw DataError("document " + doc.id + ": field contains a tab or newline");
      }
    }
    out << doc.id << '\t' << to_string(doc.disease) << '\t' << doc.raw_text << '\t'
        << to_string(doc.label) << '\n';
  }
}

std::vector<Document> drop_garbled(std::vector<Document> docs) {
  std::erase_if(docs, [](const Document& d) { return d.tokens.empty(); });
  return docs;
}

void mark_symptoms(Document& doc, const std::vector<std::string>& keywords) {
  doc.symptom_indices.clear();
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (std::find(keywords.begin(), keywords.end(), doc.tokens[i]) != keywords.end()) {
      doc.symptom_indices.push_back(i);
    }
  }
}

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

std::size_t Vocabulary::add(std::string_view word) {
  std::string key(word);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const std::size_t idx = words_.size();
  words_.push_back(key);
  index_.emplace(std::move(key), idx);
  return idx;
}

std::size_t Vocabulary::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(std::string(word)); }

Vocabulary Vocabulary::from_documents(std::span<const Document> docs) {
  Vocabulary vocab;
  for (const auto& doc : docs) {
    for (const auto& t : doc.tokens) vocab.add(t);
  }
  return vocab;
}

PaddedSequence pad(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  if (tokens.empty()) throw std::invalid_argument("cannot pad an empty token list");
  PaddedSequence seq;
  seq.true_length = std::min(tokens.size(), max_len);
  seq.token_ids.assign(max_len, Vocabulary::kPad);
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.token_ids[i] = vocab.lookup(tokens[i]);
  return seq;
}

std::vector<AnnotationPair> parse_annotations(std::istream& in) {
  std::vector<AnnotationPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim_cr(line);
    if (row.empty()) continue;
    auto fields = split_tabs(row);
    if (fields.size() != 3) {
      throw DataError("line " + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      pairs.push_back({std::move(fields[0]), parse_usage_label(fields[1]), parse_usage_label(fields[2])});
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

std::vector<AnnotationPair> load_annotations(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_annotations(in);
}

double observed_agreement(std::span<const AnnotationPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("no annotation pairs");
  const auto agree = std::count_if(pairs.begin(), pairs.end(),
                                   [](const AnnotationPair& p) { return p.label_a == p.label_b; });
  return static_cast<double>(agree) / static_cast<double>(pairs.size());
}

double cohen_kappa(std::span<const AnnotationPair> pairs) {
  const double p_o = observed_agreement(pairs);
  if (p_o == 1.0) return 1.0;
  const auto n = static_cast<double>(pairs.size());
  double lit_a = 0, lit_b = 0;
  for (const auto& p : pairs) {
    lit_a += p.label_a == UsageLabel::literal;
    lit_b += p.label_b == UsageLabel::literal;
  }
  lit_a /= n;
  lit_b /= n;
  const double p_e = lit_a * lit_b + (1 - lit_a) * (1 - lit_b);
  if (p_e == 1.0) throw DataError("degenerate marginals");
  return (p_o - p_e) / (1 - p_e);
}

}  // namespace figphm
