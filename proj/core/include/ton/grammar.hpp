#pragma once

// Token vocabulary and the think/answer response format:
//
//   <think> thought </think> <answer> answer </answer> <eos>
//
// A thought that is empty or exactly the single empty-thought marker is a
// skip response.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ton {

namespace tok {

inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kThinkOpen = 2;
inline constexpr int kThinkClose = 3;
inline constexpr int kAnswerOpen = 4;
inline constexpr int kAnswerClose = 5;
inline constexpr int kSkip = 6;  // the empty thought
inline constexpr int kHybridHint = 7;
inline constexpr int kSep = 8;
inline constexpr int kDigit0 = 9;  // digits occupy 9..18
inline constexpr int kMinus = 19;
inline constexpr int kTaskCount = 20;
inline constexpr int kTaskArith = 21;
inline constexpr int kTaskGrid = 22;
inline constexpr int kSymbol0 = 23;  // four counting symbols, 23..26
inline constexpr int kNumSymbols = 4;
inline constexpr int kOpAdd = 27;
inline constexpr int kOpSub = 28;
inline constexpr int kOpDouble = 29;
inline constexpr int kUp = 30;
inline constexpr int kDown = 31;
inline constexpr int kLeft = 32;
inline constexpr int kRight = 33;
inline constexpr int kClick = 34;
inline constexpr int kStop = 35;
inline constexpr int kAtGoal = 36;
inline constexpr int kAgent = 37;
inline constexpr int kGoal = 38;
inline constexpr int kVocabSize = 39;

constexpr int digit(int d) { return kDigit0 + d; }
constexpr bool is_digit(int t) { return t >= kDigit0 && t < kDigit0 + 10; }
constexpr int digit_value(int t) { return t - kDigit0; }
constexpr int symbol(int s) { return kSymbol0 + s; }
constexpr bool is_symbol(int t) { return t >= kSymbol0 && t < kSymbol0 + kNumSymbols; }

}  // namespace tok

// Tokens that delimit the response or belong to the prompt only. They may not
// appear inside a thought or answer segment.
bool is_structural(int token);

std::string_view token_name(int token);
// Throws std::out_of_range for unknown names.
int token_id(std::string_view name);
// Space-separated token names, for logs and error messages.
std::string detokenize(std::span<const int> tokens);
// {token name -> id} in id order.
std::string vocab_manifest_json();

class GrammarError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FormatErrorKind {
  kMissingTag,
  kOutOfOrder,
  kTrailingTokens,
  kNoEos,
  kStrayToken,  // prompt-only or unknown token, or tokens outside both blocks
  kEmptyAnswer,
};

std::string_view to_string(FormatErrorKind kind);

struct FormatError {
  FormatErrorKind kind;
  std::size_t position = 0;  // index of the first offending token when known

  bool operator==(const FormatError&) const = default;
};

struct Response {
  std::vector<int> thought;
  std::vector<int> answer;
  bool is_skip = false;

  bool operator==(const Response&) const = default;
};

using ParseResult = std::variant<Response, FormatError>;

inline bool parsed(const ParseResult& r) { return std::holds_alternative<Response>(r); }

bool is_skip_thought(std::span<const int> thought);

// <think> thought </think> <answer> answer </answer> <eos>. Throws
// GrammarError if either segment holds a structural token.
std::vector<int> render(std::span<const int> thought, std::span<const int> answer);

// Total on arbitrary input; never throws.
ParseResult parse(std::span<const int> tokens);

// 1 iff the response parsed (skip responses included).
int format_reward(const ParseResult& result);

}  // namespace ton
