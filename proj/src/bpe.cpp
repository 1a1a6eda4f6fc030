#include "gazeprobe/bpe.hpp"

#include <unicode/uchar.h>

#include <fstream>
#include <limits>
#include "json.hpp"

#include "gazeprobe/errors.hpp"

namespace gazeprobe::bpe {
namespace {

struct CodePoint {
  char32_t value;
  std::size_t length;
};

// Invalid sequences decode as one "other" byte.
CodePoint decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0 && b0 >= 0xC2 && cont(1)) {
    return {(static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1), 2};
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    const char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
    if (cp >= 0x800 && (cp < 0xD800 || cp > 0xDFFF)) return {cp, 3};
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    const char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
    if (cp >= 0x10000 && cp <= 0x10FFFF) return {cp, 4};
  }
  return {0xFFFD, 1};
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

enum class CharClass { Letter, Number, Space, Other };

CharClass classify(char32_t cp) {
  const auto c = static_cast<UChar32>(cp);
  if (u_isUWhiteSpace(c)) return CharClass::Space;
  const auto mask = U_GET_GC_MASK(c);
  if (mask & U_GC_L_MASK) return CharClass::Letter;
  if (mask & U_GC_N_MASK) return CharClass::Number;
  return CharClass::Other;
}

struct Scanner {
  std::string_view text;

  std::size_t size() const { return text.size(); }
  CodePoint at(std::size_t i) const { return decode_utf8(text, i); }
  CharClass cls(std::size_t i) const { return classify(at(i).value); }

  // End of the maximal run of `c` starting at i.
  std::size_t run(std::size_t i, CharClass c) const {
    while (i < size() && cls(i) == c) i += at(i).length;
    return i;
  }
};

std::size_t match_contraction(std::string_view text, std::size_t i) {
  if (text[i] != '\'') return 0;
  static constexpr std::string_view kSuffixes[] = {"re", "ve", "ll", "s", "t", "m", "d"};
  const auto rest = text.substr(i + 1);
  for (auto suffix : kSuffixes) {
    if (rest.starts_with(suffix)) return 1 + suffix.size();
  }
  return 0;
}

}  // namespace

const std::array<char32_t, 256>& byte_to_unicode() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = printable[b] ? static_cast<char32_t>(b) : next++;
    return t;
  }();
  return table;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  const Scanner sc{text};
  std::size_t i = 0;
  while (i < sc.size()) {
    std::size_t end = i;
    if (const auto n = match_contraction(text, i)) {
      end = i + n;
    } else {
      const CharClass here = sc.cls(i);
      std::size_t body = i;
      CharClass body_class = here;
      if (text[i] == ' ' && i + 1 < sc.size() && sc.cls(i + 1) != CharClass::Space) {
        body = i + 1;
        body_class = sc.cls(body);
      }
      if (body_class != CharClass::Space) {
        end = sc.run(body, body_class);
      } else {
        // \s+(?!\S) keeps the last space for the next word; \s+ otherwise.
        const std::size_t ws_end = sc.run(i, CharClass::Space);
        if (ws_end == sc.size()) {
          end = ws_end;
        } else {
          std::size_t last = i;
          for (std::size_t k = i; k < ws_end; k += sc.at(k).length) last = k;
          end = last > i ? last : ws_end;
        }
      }
    }
    out.push_back(text.substr(i, end - i));
    i = end;
  }
  return out;
}

BpeTokenizer::BpeTokenizer(std::unordered_map<std::string, TokenId> vocab, std::vector<Merge> merges)
    : vocab_(std::move(vocab)) {
  TokenId max_id = -1;
  for (const auto& [tok, id] : vocab_) {
    if (id < 0) throw ModelError("tokenizer: negative id for token \"" + tok + "\"");
    max_id = std::max(max_id, id);
  }
  id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
  for (const auto& [tok, id] : vocab_) id_to_token_[static_cast<std::size_t>(id)] = tok;

  const auto& b2u = byte_to_unicode();
  for (int b = 0; b < 256; ++b) {
    unicode_to_byte_[b2u[b]] = static_cast<unsigned char>(b);
    std::string sym;
    append_utf8(sym, b2u[b]);
    if (!vocab_.contains(sym)) {
      throw ModelError("tokenizer: vocab lacks the symbol for byte " + std::to_string(b));
    }
  }
  for (std::size_t r = 0; r < merges.size(); ++r) {
    ranks_.emplace(merges[r].first + " " + merges[r].second, static_cast<int>(r));
  }
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& vocab_path,
                                const std::filesystem::path& merges_path) {
  std::ifstream vf(vocab_path);
  if (!vf) throw ModelError("cannot open vocab file " + vocab_path.string());
  nlohmann::json j;
  try {
    vf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("vocab file " + vocab_path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ModelError("vocab file must hold a JSON object");
  std::unordered_map<std::string, TokenId> vocab;
  for (auto it = j.begin(); it != j.end(); ++it) vocab.emplace(it.key(), it.value().get<TokenId>());

  std::ifstream mf(merges_path);
  if (!mf) throw ModelError("cannot open merges file " + merges_path.string());
  std::vector<Merge> merges;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && line.starts_with("#")) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
      throw ModelError("merges line " + std::to_string(lineno) + ": expected two symbols");
    }
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return BpeTokenizer(std::move(vocab), std::move(merges));
}

void BpeTokenizer::encode_piece(std::string_view piece, std::vector<TokenId>& out) const {
  const auto& b2u = byte_to_unicode();
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (char c : piece) {
    std::string s;
    append_utf8(s, b2u[static_cast<unsigned char>(c)]);
    symbols.push_back(std::move(s));
  }
  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::string best;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      std::string key = symbols[k] + " " + symbols[k + 1];
      const auto it = ranks_.find(key);
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = std::move(key);
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const auto sp = best.find(' ');
    const std::string_view left(best.data(), sp);
    const std::string_view right(best.data() + sp + 1, best.size() - sp - 1);
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size();) {
      if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
        merged.push_back(symbols[k] + symbols[k + 1]);
        k += 2;
      } else {
        merged.push_back(std::move(symbols[k]));
        ++k;
      }
    }
    symbols = std::move(merged);
  }
  for (const auto& s : symbols) {
    const auto it = vocab_.find(s);
    if (it == vocab_.end()) throw ModelError("tokenizer: merged symbol \"" + s + "\" missing from vocab");
    out.push_back(it->second);
  }
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (auto piece : pretokenize(text)) encode_piece(piece, ids);
  return ids;
}

std::string BpeTokenizer::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ModelError("tokenizer: id " + std::to_string(id) + " out of range");
  }
  const std::string& tok = id_to_token_[static_cast<std::size_t>(id)];
  std::string out;
  for (std::size_t i = 0; i < tok.size();) {
    const auto cp = decode_utf8(tok, i);
    const auto it = unicode_to_byte_.find(cp.value);
    if (it == unicode_to_byte_.end()) {
      throw ModelError("tokenizer: token " + std::to_string(id) + " has an unmapped character");
    }
    out += static_cast<char>(it->second);
    i += cp.length;
  }
  return out;
}

std::string BpeTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) out += token_bytes(id);
  return out;
}

std::optional<TokenId> BpeTokenizer::token_id(const std::string& token) const {
  const auto it = vocab_.find(token);
  if (it == vocab_.end()) return std::nullopt;
  return it->second;
}

}  // namespace gazeprobe::bpe
