#include "ccnl/vocab.hpp"

#include "ccnl/error.hpp"

namespace ccnl {

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    for (auto& t : tokens) add(t);
}

Vocabulary Vocabulary::with_reserved(const std::vector<std::string>& tokens) {
    Vocabulary v;
    v.add(std::string(kPadToken));
    v.add(std::string(kUnkToken));
    for (const auto& t : tokens) v.add(t);
    return v;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool Vocabulary::has_reserved() const {
    return tokens_.size() >= 2 && tokens_[kPadId] == kPadToken && tokens_[kUnkId] == kUnkToken;
}

std::size_t Vocabulary::id_or_unk(std::string_view token) const {
    if (auto id = find(token)) return *id;
    if (!has_reserved()) throw VocabularyError("token '" + std::string(token) + "' not in vocabulary");
    return kUnkId;
}

std::size_t Vocabulary::add(const std::string& token) {
    if (auto id = find(token)) return *id;
    tokens_.push_back(token);
    index_.emplace(token, tokens_.size() - 1);
    return tokens_.size() - 1;
}

}  // namespace ccnl
