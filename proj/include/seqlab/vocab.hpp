#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqlab {

using TokenSeq = std::vector<int>;

// Token table with the four reserved ids at fixed positions.
class Vocab {
 public:
  static constexpr int PAD = 0;
  static constexpr int BOS = 1;
  static constexpr int EOS = 2;
  static constexpr int UNK = 3;

  Vocab() { for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) append(t); }

  explicit Vocab(const std::vector<std::string>& tokens) {
    if (tokens.size() < 4) throw std::runtime_error("Vocab: needs at least the 4 reserved tokens");
    for (const auto& t : tokens) append(t);
  }

  void append(const std::string& tok) {
    if (index_.count(tok)) throw std::runtime_error("Vocab: duplicate token '" + tok + "'");
    index_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(tok);
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? UNK : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw std::runtime_error("Vocab: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace seqlab
