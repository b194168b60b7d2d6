#include "doge/vocab.hpp"

#include "doge/errors.hpp"
#include "doge/util.hpp"

namespace doge {

Vocabulary Vocabulary::make(int digits, int letters, int markers) {
    if (digits < 0 || letters < 0 || markers < 0 || markers > 3) {
        throw InvalidInputError("Vocabulary::make: bad payload counts");
    }
    Vocabulary v(digits, letters, markers);
    if (v.size() < 8) {
        throw InvalidInputError("Vocabulary::make: size must be >= 8");
    }
    return v;
}

TokenId Vocabulary::digit(int i) const {
    if (i < 0 || i >= digits_) throw InvalidInputError("digit index out of range");
    return kSpecialCount + i;
}

TokenId Vocabulary::letter(int i) const {
    if (i < 0 || i >= letters_) throw InvalidInputError("letter index out of range");
    return kSpecialCount + digits_ + i;
}

TokenId Vocabulary::ask() const {
    if (markers_ < 1) throw InvalidInputError("vocabulary has no ASK marker");
    return kSpecialCount + digits_ + letters_;
}

TokenId Vocabulary::op_sum() const {
    if (markers_ < 2) throw InvalidInputError("vocabulary has no SUM marker");
    return kSpecialCount + digits_ + letters_ + 1;
}

TokenId Vocabulary::op_cmp() const {
    if (markers_ < 3) throw InvalidInputError("vocabulary has no CMP marker");
    return kSpecialCount + digits_ + letters_ + 2;
}

int Vocabulary::digit_value(TokenId t) const {
    if (!is_digit(t)) throw InvalidInputError("token is not a digit");
    return t - kSpecialCount;
}

int Vocabulary::letter_index(TokenId t) const {
    if (!is_letter(t)) throw InvalidInputError("token is not a letter");
    return t - kSpecialCount - digits_;
}

std::string Vocabulary::name(TokenId t) const {
    switch (t) {
        case kThinkOpen: return "<think>";
        case kThinkClose: return "</think>";
        case kAnsOpen: return "<ans>";
        case kAnsClose: return "</ans>";
        case kEos: return "<eos>";
        case kPad: return "<pad>";
        case kSep: return "<sep>";
        default: break;
    }
    if (is_digit(t)) return std::to_string(digit_value(t));
    if (is_letter(t)) return std::string(1, static_cast<char>('A' + letter_index(t)));
    if (markers_ >= 1 && t == ask()) return "ASK";
    if (markers_ >= 2 && t == op_sum()) return "SUM";
    if (markers_ >= 3 && t == op_cmp()) return "CMP";
    throw InvalidInputError("unknown token id " + std::to_string(t));
}

uint64_t Vocabulary::digest() const {
    const int fields[4] = {digits_, letters_, markers_, size()};
    return fnv1a64(fields, sizeof(fields));
}

} // namespace doge
