#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace doge {

using TokenId = int;

// Token id space for the toy sequence tasks. Fixed layout:
//   [0..6]  specials: THINK_OPEN, THINK_CLOSE, ANS_OPEN, ANS_CLOSE, EOS, PAD, SEP
//   then digit payload tokens, letter payload tokens (attribute names),
//   then optional marker payload tokens (ASK, SUM, CMP) used by the task
//   families to phrase questions.
class Vocabulary {
public:
    static constexpr TokenId kThinkOpen = 0;
    static constexpr TokenId kThinkClose = 1;
    static constexpr TokenId kAnsOpen = 2;
    static constexpr TokenId kAnsClose = 3;
    static constexpr TokenId kEos = 4;
    static constexpr TokenId kPad = 5;
    static constexpr TokenId kSep = 6;
    static constexpr int kSpecialCount = 7;

    static Vocabulary make(int digits, int letters, int markers = 3);

    int size() const { return kSpecialCount + digits_ + letters_ + markers_; }
    int digit_count() const { return digits_; }
    int letter_count() const { return letters_; }
    int marker_count() const { return markers_; }

    TokenId think_open() const { return kThinkOpen; }
    TokenId think_close() const { return kThinkClose; }
    TokenId ans_open() const { return kAnsOpen; }
    TokenId ans_close() const { return kAnsClose; }
    TokenId eos() const { return kEos; }
    TokenId pad() const { return kPad; }
    TokenId sep() const { return kSep; }

    TokenId digit(int i) const;
    TokenId letter(int i) const;
    TokenId ask() const;    // lookup-question marker
    TokenId op_sum() const; // modular-sum marker
    TokenId op_cmp() const; // comparison marker

    bool contains(TokenId t) const { return t >= 0 && t < size(); }
    bool is_digit(TokenId t) const { return t >= kSpecialCount && t < kSpecialCount + digits_; }
    bool is_letter(TokenId t) const {
        return t >= kSpecialCount + digits_ && t < kSpecialCount + digits_ + letters_;
    }
    // Block delimiters; the tokens the format grammar keys on.
    bool is_structural(TokenId t) const {
        return t == kThinkOpen || t == kThinkClose || t == kAnsOpen || t == kAnsClose;
    }

    int digit_value(TokenId t) const;
    int letter_index(TokenId t) const;

    std::string name(TokenId t) const;
    uint64_t digest() const;

private:
    Vocabulary(int digits, int letters, int markers)
        : digits_(digits), letters_(letters), markers_(markers) {}

    int digits_ = 0;
    int letters_ = 0;
    int markers_ = 0;
};

} // namespace doge
