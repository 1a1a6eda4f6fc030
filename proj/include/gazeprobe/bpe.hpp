#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gazeprobe::bpe {

using TokenId = int;

// GPT-2's reversible map from raw bytes to printable code points.
const std::array<char32_t, 256>& byte_to_unicode();

// Splits text into pre-tokens with the GPT-2 pattern
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// The pieces concatenate back to the input byte-for-byte. Invalid UTF-8 bytes
// are classified as "other" and kept.
std::vector<std::string_view> pretokenize(std::string_view text);

class BpeTokenizer {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeTokenizer(std::unordered_map<std::string, TokenId> vocab, std::vector<Merge> merges);

  // vocab: JSON object token -> id; merges: one "a b" pair per line, a
  // leading "#" line is a header.
  static BpeTokenizer load(const std::filesystem::path& vocab_path,
                           const std::filesystem::path& merges_path);

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  // Raw bytes one token stands for. May be a partial UTF-8 sequence.
  std::string token_bytes(TokenId id) const;

  std::optional<TokenId> token_id(const std::string& token) const;
  // One past the largest id.
  std::size_t vocab_size() const { return id_to_token_.size(); }
  std::size_t merge_count() const { return ranks_.size(); }

 private:
  void encode_piece(std::string_view piece, std::vector<TokenId>& out) const;

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> ranks_;  // "left right" -> rank
  std::unordered_map<char32_t, unsigned char> unicode_to_byte_;
};

}  // namespace gazeprobe::bpe
