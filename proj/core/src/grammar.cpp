#include "ton/grammar.hpp"

#include <algorithm>
#include <array>
#include <json.hpp>

namespace ton {

namespace {

constexpr std::array<std::string_view, tok::kVocabSize> kNames = {
    "<bos>", "<eos>", "<think>", "</think>", "<answer>", "</answer>", "<empty>", "<hybrid>",
    "<sep>", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "-",
    "<count>", "<arith>", "<grid>", "cube", "sphere", "cylinder", "cone", "add", "sub", "dbl",
    "UP", "DOWN", "LEFT", "RIGHT", "CLICK", "STOP", "AT_GOAL", "AGENT", "GOAL",
};

bool in_vocab(int t) { return t >= 0 && t < tok::kVocabSize; }

}  // namespace

bool is_structural(int token) {
  switch (token) {
    case tok::kBos:
    case tok::kEos:
    case tok::kThinkOpen:
    case tok::kThinkClose:
    case tok::kAnswerOpen:
    case tok::kAnswerClose:
    case tok::kHybridHint:
      return true;
    default:
      return false;
  }
}

std::string_view token_name(int token) {
  if (!in_vocab(token)) return "<unk>";
  return kNames[static_cast<std::size_t>(token)];
}

int token_id(std::string_view name) {
  const auto it = std::find(kNames.begin(), kNames.end(), name);
  if (it == kNames.end()) throw std::out_of_range("unknown token name: " + std::string(name));
  return static_cast<int>(it - kNames.begin());
}

std::string detokenize(std::span<const int> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += token_name(tokens[i]);
  }
  return out;
}

std::string vocab_manifest_json() {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int t = 0; t < tok::kVocabSize; ++t) j[std::string(token_name(t))] = t;
  return j.dump(2);
}

std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kMissingTag: return "missing_tag";
    case FormatErrorKind::kOutOfOrder: return "out_of_order";
    case FormatErrorKind::kTrailingTokens: return "trailing_tokens";
    case FormatErrorKind::kNoEos: return "no_eos";
    case FormatErrorKind::kStrayToken: return "stray_token";
    case FormatErrorKind::kEmptyAnswer: return "empty_answer";
  }
  return "unknown";
}

bool is_skip_thought(std::span<const int> thought) {
  return thought.empty() || (thought.size() == 1 && thought[0] == tok::kSkip);
}

std::vector<int> render(std::span<const int> thought, std::span<const int> answer) {
  auto check = [](std::span<const int> seg, const char* what) {
    for (int t : seg) {
      if (!in_vocab(t) || is_structural(t)) {
        throw GrammarError(std::string("render: ") + what + " segment contains token " +
                           std::string(token_name(t)) + " (" + std::to_string(t) + ")");
      }
    }
  };
  check(thought, "thought");
  check(answer, "answer");

  std::vector<int> out;
  out.reserve(thought.size() + answer.size() + 5);
  out.push_back(tok::kThinkOpen);
  out.insert(out.end(), thought.begin(), thought.end());
  out.push_back(tok::kThinkClose);
  out.push_back(tok::kAnswerOpen);
  out.insert(out.end(), answer.begin(), answer.end());
  out.push_back(tok::kAnswerClose);
  out.push_back(tok::kEos);
  return out;
}

ParseResult parse(std::span<const int> tokens) {
  const auto eos = std::find(tokens.begin(), tokens.end(), tok::kEos);
  if (eos == tokens.end()) return FormatError{FormatErrorKind::kNoEos, tokens.size()};
  const std::size_t end = static_cast<std::size_t>(eos - tokens.begin());
  if (end + 1 != tokens.size()) return FormatError{FormatErrorKind::kTrailingTokens, end + 1};

  const std::span<const int> body = tokens.first(end);
  for (std::size_t i = 0; i < body.size(); ++i) {
    const int t = body[i];
    if (!in_vocab(t) || t == tok::kBos || t == tok::kHybridHint) {
      return FormatError{FormatErrorKind::kStrayToken, i};
    }
  }

  constexpr std::array<int, 4> kTags = {tok::kThinkOpen, tok::kThinkClose, tok::kAnswerOpen,
                                        tok::kAnswerClose};
  std::array<std::size_t, 4> pos{};
  for (std::size_t k = 0; k < kTags.size(); ++k) {
    const auto n = std::count(body.begin(), body.end(), kTags[k]);
    const auto first = std::find(body.begin(), body.end(), kTags[k]);
    if (n == 0) return FormatError{FormatErrorKind::kMissingTag, end};
    if (n > 1) {
      const auto second = std::find(first + 1, body.end(), kTags[k]);
      return FormatError{FormatErrorKind::kOutOfOrder, static_cast<std::size_t>(second - body.begin())};
    }
    pos[k] = static_cast<std::size_t>(first - body.begin());
  }
  const auto [think_open, think_close, answer_open, answer_close] = pos;
  if (!(think_open < think_close && think_close < answer_open && answer_open < answer_close)) {
    return FormatError{FormatErrorKind::kOutOfOrder, std::min({think_close, answer_open, answer_close})};
  }
  if (think_open != 0) return FormatError{FormatErrorKind::kStrayToken, 0};
  if (answer_open != think_close + 1) return FormatError{FormatErrorKind::kStrayToken, think_close + 1};
  if (answer_close + 1 != end) return FormatError{FormatErrorKind::kTrailingTokens, answer_close + 1};
  if (answer_close == answer_open + 1) return FormatError{FormatErrorKind::kEmptyAnswer, answer_close};

  Response r;
  r.thought.assign(body.begin() + static_cast<std::ptrdiff_t>(think_open + 1),
                   body.begin() + static_cast<std::ptrdiff_t>(think_close));
  r.answer.assign(body.begin() + static_cast<std::ptrdiff_t>(answer_open + 1),
                  body.begin() + static_cast<std::ptrdiff_t>(answer_close));
  r.is_skip = is_skip_thought(r.thought);
  return r;
}

int format_reward(const ParseResult& result) { return parsed(result) ? 1 : 0; }

}  // namespace ton
