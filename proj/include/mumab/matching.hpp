#pragma once

#include <cstdint>
#include <vector>

#include "mumab/errors.hpp"

namespace mumab {

// K x M table of per-user per-channel mean rewards. Entries lie in [0,1] and
// 1 <= k <= m. Users are 0-based row indices; channels are numbered 1..m
// everywhere in this library, because channel numbers are protocol content
// (they double as agent IDs and as transmitted digits).
class MeanMatrix {
public:
    MeanMatrix(int k, int m, std::vector<double> row_major);

    int users() const { return k_; }
    int channels() const { return m_; }
    // channel in 1..m
    double mean(int user, int channel) const { return values_[static_cast<size_t>(user) * m_ + channel - 1]; }
    const std::vector<double>& values() const { return values_; }

private:
    int k_;
    int m_;
    std::vector<double> values_;
};

// Injective assignment of users (rows) to channels: assignment[row] in 1..m,
// entries pairwise distinct.
struct Matching {
    std::vector<int> assignment;

    friend bool operator==(const Matching&, const Matching&) = default;
    // lexicographic; the canonical tie-break order
    friend auto operator<=>(const Matching& a, const Matching& b) { return a.assignment <=> b.assignment; }
};

// Output of the assignment-gap oracle.
struct GapResult {
    double j1 = 0.0;                 // optimal system reward
    double j2 = 0.0;                 // largest system reward strictly below j1
    double delta = 0.0;              // (j1 - j2) / (2m)
    std::vector<Matching> optimal_set;  // every matching attaining j1, lexicographic order
};

// Base-m quantization of a K x M estimate matrix: `rounds` digits per entry,
// each digit in 1..m. The decoded value of an entry is an exact rational with
// denominator 2*m^rounds.
class QuantizedMatrix {
public:
    QuantizedMatrix(int k, int m, int rounds);

    int users() const { return k_; }
    int channels() const { return m_; }
    int rounds() const { return rounds_; }

    // round in 0..rounds-1
    int digit(int row, int channel, int round) const { return digits_[index(row, channel, round)]; }
    void set_digit(int row, int channel, int round, int d) { digits_[index(row, channel, round)] = static_cast<std::uint8_t>(d); }

    // exact numerator over denominator 2*m^rounds
    std::int64_t numerator(int row, int channel) const;
    std::int64_t denominator() const;
    double value(int row, int channel) const;

    friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;

private:
    size_t index(int row, int channel, int round) const {
        return (static_cast<size_t>(row) * m_ + channel - 1) * rounds_ + round;
    }

    int k_;
    int m_;
    int rounds_;
    std::vector<std::uint8_t> digits_;
};

// radix^rounds as int64, capped at 2^57 so decoded numerators and their k-fold
// sums stay exactly representable; throws SizeLimitError beyond the cap.
std::int64_t pow_checked(int radix, int rounds);

// Digits h_1..h_R of x, each in 1..radix. Matches the greedy per-round
// quantization h_r = ceil(radix^r * (x - sum_{n<r} (h_n-1)/radix^n)) with raw
// digits clamped into [1, radix]; evaluated in exact integer arithmetic so the
// decode error bound below holds with no floating-point slack.
std::vector<int> encode_value(double x, int radix, int rounds);

// sum_{n<R} (h_n-1)/radix^n + (2 h_R - 1)/(2 radix^R), always in (0, 1].
// Satisfies |x - decode_value(encode_value(x, radix, R), radix)| <= 1/(2 radix^R).
double decode_value(const std::vector<int>& digits, int radix);

// Exact numerator of decode_value over denominator 2*radix^R.
std::int64_t decode_numerator(const std::vector<int>& digits, int radix);

// Smallest R with 1/(2 radix^R) <= delta/2, i.e. radix^R >= 1/delta;
// equals ceil(log(1/delta)/log(radix)) with the boundary resolved exactly.
int required_rounds(double delta, int radix);

struct EnumerationLimits {
    int max_users = 8;                       // reject k above this
    std::int64_t max_nodes = 80'000'000;     // DFS node budget
    std::int64_t max_set = 100'000;          // cap on |optimal set|
};

// Exhaustive enumeration of all m!/(m-k)! injective matchings: J1, the exact
// optimal set (lexicographic), J2 = largest value strictly below J1, and
// delta = (J1-J2)/(2m). Throws DegenerateMatrixError when every matching has
// the same value.
GapResult gap_oracle(const MeanMatrix& matrix, const EnumerationLimits& limits = {});

// All injective matchings maximizing the sum of decoded entries, computed in
// exact integer arithmetic (numerators over 2*m^R) and returned in
// lexicographic order, so every agent derives a bit-identical set.
std::vector<Matching> optimal_set_from_quantized(const QuantizedMatrix& q,
                                                 const EnumerationLimits& limits = {});

// Members of `set` assigning `channel` to row `row` (0-based), order
// preserved. Throws EmptyAfterFilterError if nothing survives.
std::vector<Matching> filter_by_pin(const std::vector<Matching>& set, int row, int channel);

// Lexicographically smallest member.
Matching canonical_choice(const std::vector<Matching>& set);

// encode_value applied entrywise with radix = matrix.channels().
QuantizedMatrix quantize(const MeanMatrix& matrix, int rounds);

// sum_j matrix.mean(j, assignment[j]), left-to-right. Shared by the oracle and
// the regret accounting so equal matchings produce bit-identical sums.
double matching_value(const MeanMatrix& matrix, const Matching& matching);

} // namespace mumab
