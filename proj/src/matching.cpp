#include "mumab/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mumab {

namespace {

constexpr std::int64_t kMaxScale = std::int64_t{1} << 57;

// x = mant / 2^shift with mant an integer < 2^54 and shift >= 0 (for x in (0,1]).
struct BinaryDecomposition {
    std::int64_t mant;
    int shift;
};

BinaryDecomposition decompose(double x) {
    int exp2 = 0;
    double frac = std::frexp(x, &exp2);  // x = frac * 2^exp2, frac in [0.5, 1)
    auto mant = static_cast<std::int64_t>(std::ldexp(frac, 53));
    return {mant, 53 - exp2};
}

// ceil(x * scale) for x in [0,1], scale <= 2^57, evaluated exactly.
std::int64_t ceil_scaled(double x, std::int64_t scale) {
    if (x == 0.0) return 0;
    auto [mant, shift] = decompose(x);
    unsigned __int128 p = static_cast<unsigned __int128>(mant) * static_cast<unsigned __int128>(scale);
    if (shift > 126) return 1;  // x*scale < 2^-15: positive but below 1
    unsigned __int128 q = p >> shift;
    unsigned __int128 r = p - (q << shift);
    return static_cast<std::int64_t>(q) + (r != 0 ? 1 : 0);
}

// radix^rounds * delta >= 1, evaluated exactly (scale already range-checked).
bool scale_covers(std::int64_t scale, double delta) {
    auto [mant, shift] = decompose(delta);
    unsigned __int128 p = static_cast<unsigned __int128>(mant) * static_cast<unsigned __int128>(scale);
    if (shift > 126) return false;  // 2^shift exceeds any p we can form
    return p >= (static_cast<unsigned __int128>(1) << shift);
}

void check_radix_rounds(int radix, int rounds) {
    if (radix < 2) throw std::invalid_argument("codec: radix must be >= 2");
    if (rounds < 1) throw std::invalid_argument("codec: rounds must be >= 1");
}

} // namespace

MeanMatrix::MeanMatrix(int k, int m, std::vector<double> row_major)
    : k_(k), m_(m), values_(std::move(row_major)) {
    if (k < 1) throw ValidationError("matrix: k must be >= 1");
    if (m < k) throw ValidationError("matrix: requires k <= m");
    if (values_.size() != static_cast<size_t>(k) * m)
        throw ValidationError("matrix: expected k*m values, got " + std::to_string(values_.size()));
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("matrix: entries must lie in [0,1]");
    }
}

QuantizedMatrix::QuantizedMatrix(int k, int m, int rounds)
    : k_(k), m_(m), rounds_(rounds),
      digits_(static_cast<size_t>(k) * m * rounds, 1) {
    if (k < 1 || m < 2 || rounds < 1) throw std::invalid_argument("quantized matrix: bad dimensions");
    if (m > 255) throw SizeLimitError("quantized matrix: m > 255 not supported");
    pow_checked(m, rounds);
}

std::int64_t QuantizedMatrix::numerator(int row, int channel) const {
    std::int64_t n = 0;
    for (int r = 0; r < rounds_; ++r) n = n * m_ + (digit(row, channel, r) - 1);
    return 2 * n + 1;
}

std::int64_t QuantizedMatrix::denominator() const {
    return 2 * pow_checked(m_, rounds_);
}

double QuantizedMatrix::value(int row, int channel) const {
    return static_cast<double>(numerator(row, channel)) / static_cast<double>(denominator());
}

std::int64_t pow_checked(int radix, int rounds) {
    std::int64_t v = 1;
    for (int i = 0; i < rounds; ++i) {
        v *= radix;
        if (v > kMaxScale)
            throw SizeLimitError("codec: radix^rounds exceeds the exact-arithmetic cap (2^57)");
    }
    return v;
}

std::vector<int> encode_value(double x, int radix, int rounds) {
    check_radix_rounds(radix, rounds);
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("encode_value: x must lie in [0,1]");
    std::int64_t scale = pow_checked(radix, rounds);

    // Cell index of x on the midpoint grid {(n+1/2)/scale}: the greedy digit
    // recursion lands on n = ceil(x*scale) - 1, clamped up at the x = 0 edge.
    std::int64_t n = ceil_scaled(x, scale) - 1;
    if (n < 0) n = 0;

    std::vector<int> digits(static_cast<size_t>(rounds));
    for (int r = rounds - 1; r >= 0; --r) {
        digits[static_cast<size_t>(r)] = static_cast<int>(n % radix) + 1;
        n /= radix;
    }
    return digits;
}

std::int64_t decode_numerator(const std::vector<int>& digits, int radix) {
    if (digits.empty()) throw std::invalid_argument("decode: digits must be nonempty");
    check_radix_rounds(radix, static_cast<int>(digits.size()));
    pow_checked(radix, static_cast<int>(digits.size()));
    std::int64_t n = 0;
    for (int d : digits) {
        if (d < 1 || d > radix) throw std::invalid_argument("decode: digit outside 1..radix");
        n = n * radix + (d - 1);
    }
    return 2 * n + 1;
}

double decode_value(const std::vector<int>& digits, int radix) {
    std::int64_t num = decode_numerator(digits, radix);
    std::int64_t den = 2 * pow_checked(radix, static_cast<int>(digits.size()));
    return static_cast<double>(num) / static_cast<double>(den);
}

int required_rounds(double delta, int radix) {
    if (radix < 2) throw std::invalid_argument("required_rounds: radix must be >= 2");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("required_rounds: delta must lie in (0,1)");

    int r = static_cast<int>(std::ceil(std::log(1.0 / delta) / std::log(static_cast<double>(radix))));
    if (r < 1) r = 1;
    // resolve the float estimate exactly against radix^r * delta >= 1
    while (!scale_covers(pow_checked(radix, r), delta)) ++r;
    while (r > 1 && scale_covers(pow_checked(radix, r - 1), delta)) --r;
    return r;
}

namespace {

// Shared DFS skeleton over injective matchings, channels tried in ascending
// order so emitted matchings come out lexicographically sorted.
template <typename Value, typename Leaf>
struct MatchingDfs {
    int k;
    int m;
    const std::vector<Value>& cell;  // k*m values, row-major
    const EnumerationLimits& limits;
    Leaf leaf;

    std::vector<char> used;
    std::vector<int> current;
    std::int64_t nodes = 0;

    MatchingDfs(int k_, int m_, const std::vector<Value>& cell_, const EnumerationLimits& lim, Leaf leaf_)
        : k(k_), m(m_), cell(cell_), limits(lim), leaf(leaf_),
          used(static_cast<size_t>(m_) + 1, 0), current(static_cast<size_t>(k_)) {}

    void run() { descend(0, Value{}); }

    void descend(int row, Value sum) {
        if (++nodes > limits.max_nodes)
            throw SizeLimitError("matching enumeration: node budget exceeded");
        if (row == k) {
            leaf(sum, current);
            return;
        }
        for (int c = 1; c <= m; ++c) {
            if (used[static_cast<size_t>(c)]) continue;
            used[static_cast<size_t>(c)] = 1;
            current[static_cast<size_t>(row)] = c;
            descend(row + 1, sum + cell[static_cast<size_t>(row) * m + c - 1]);
            used[static_cast<size_t>(c)] = 0;
        }
    }
};

} // namespace

GapResult gap_oracle(const MeanMatrix& matrix, const EnumerationLimits& limits) {
    const int k = matrix.users();
    const int m = matrix.channels();
    if (k > limits.max_users)
        throw SizeLimitError("gap_oracle: k=" + std::to_string(k) + " exceeds the enumeration cap " +
                             std::to_string(limits.max_users));

    GapResult out;
    double j1 = -std::numeric_limits<double>::infinity();
    double j2 = -std::numeric_limits<double>::infinity();

    auto leaf = [&](double v, const std::vector<int>& assignment) {
        if (v > j1) {
            j2 = j1;
            j1 = v;
            out.optimal_set.clear();
            out.optimal_set.push_back({assignment});
        } else if (v == j1) {
            if (static_cast<std::int64_t>(out.optimal_set.size()) >= limits.max_set)
                throw SizeLimitError("gap_oracle: optimal set exceeds cap");
            out.optimal_set.push_back({assignment});
        } else if (v > j2) {
            j2 = v;
        }
    };
    MatchingDfs<double, decltype(leaf)> dfs(k, m, matrix.values(), limits, leaf);
    dfs.run();

    if (!std::isfinite(j2))
        throw DegenerateMatrixError("gap_oracle: every matching has the same system reward; the gap is undefined");

    out.j1 = j1;
    out.j2 = j2;
    out.delta = (j1 - j2) / (2.0 * m);
    return out;
}

std::vector<Matching> optimal_set_from_quantized(const QuantizedMatrix& q, const EnumerationLimits& limits) {
    const int k = q.users();
    const int m = q.channels();
    if (k > limits.max_users)
        throw SizeLimitError("optimal_set_from_quantized: k exceeds the enumeration cap");

    std::vector<std::int64_t> num(static_cast<size_t>(k) * m);
    for (int row = 0; row < k; ++row)
        for (int c = 1; c <= m; ++c)
            num[static_cast<size_t>(row) * m + c - 1] = q.numerator(row, c);

    // optimistic completion bound: best remaining entry per row, used channels ignored
    std::vector<std::int64_t> suffix_best(static_cast<size_t>(k) + 1, 0);
    for (int row = k - 1; row >= 0; --row) {
        std::int64_t best = 0;
        for (int c = 1; c <= m; ++c)
            best = std::max(best, num[static_cast<size_t>(row) * m + c - 1]);
        suffix_best[static_cast<size_t>(row)] = suffix_best[static_cast<size_t>(row) + 1] + best;
    }

    std::int64_t nodes = 0;
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    std::vector<int> current(static_cast<size_t>(k));

    std::int64_t best_value = -1;
    auto find_best = [&](auto&& self, int row, std::int64_t sum) -> void {
        if (++nodes > limits.max_nodes) throw SizeLimitError("optimal set: node budget exceeded");
        if (sum + suffix_best[static_cast<size_t>(row)] <= best_value) return;
        if (row == k) {
            best_value = sum;
            return;
        }
        for (int c = 1; c <= m; ++c) {
            if (used[static_cast<size_t>(c)]) continue;
            used[static_cast<size_t>(c)] = 1;
            self(self, row + 1, sum + num[static_cast<size_t>(row) * m + c - 1]);
            used[static_cast<size_t>(c)] = 0;
        }
    };
    find_best(find_best, 0, 0);

    std::vector<Matching> set;
    auto collect = [&](auto&& self, int row, std::int64_t sum) -> void {
        if (++nodes > limits.max_nodes) throw SizeLimitError("optimal set: node budget exceeded");
        if (sum + suffix_best[static_cast<size_t>(row)] < best_value) return;
        if (row == k) {
            if (sum == best_value) {
                if (static_cast<std::int64_t>(set.size()) >= limits.max_set)
                    throw SizeLimitError("optimal set: size exceeds cap");
                set.push_back({current});
            }
            return;
        }
        for (int c = 1; c <= m; ++c) {
            if (used[static_cast<size_t>(c)]) continue;
            used[static_cast<size_t>(c)] = 1;
            current[static_cast<size_t>(row)] = c;
            self(self, row + 1, sum + num[static_cast<size_t>(row) * m + c - 1]);
            used[static_cast<size_t>(c)] = 0;
        }
    };
    collect(collect, 0, 0);
    return set;
}

std::vector<Matching> filter_by_pin(const std::vector<Matching>& set, int row, int channel) {
    if (set.empty()) throw std::invalid_argument("filter_by_pin: empty candidate set");
    if (row < 0 || row >= static_cast<int>(set.front().assignment.size()))
        throw std::invalid_argument("filter_by_pin: row out of range");

    std::vector<Matching> out;
    for (const Matching& mm : set)
        if (mm.assignment[static_cast<size_t>(row)] == channel) out.push_back(mm);
    if (out.empty())
        throw EmptyAfterFilterError("filter_by_pin: no candidate assigns channel " + std::to_string(channel) +
                                    " to row " + std::to_string(row) + " (protocol desynchronization)");
    return out;
}

Matching canonical_choice(const std::vector<Matching>& set) {
    if (set.empty()) throw std::invalid_argument("canonical_choice: empty set");
    return *std::min_element(set.begin(), set.end(),
                             [](const Matching& a, const Matching& b) { return a.assignment < b.assignment; });
}

QuantizedMatrix quantize(const MeanMatrix& matrix, int rounds) {
    QuantizedMatrix q(matrix.users(), matrix.channels(), rounds);
    for (int row = 0; row < matrix.users(); ++row) {
        for (int c = 1; c <= matrix.channels(); ++c) {
            std::vector<int> digits = encode_value(matrix.mean(row, c), matrix.channels(), rounds);
            for (int r = 0; r < rounds; ++r) q.set_digit(row, c, r, digits[static_cast<size_t>(r)]);
        }
    }
    return q;
}

double matching_value(const MeanMatrix& matrix, const Matching& matching) {
    if (static_cast<int>(matching.assignment.size()) != matrix.users())
        throw std::invalid_argument("matching_value: wrong matching length");
    double sum = 0.0;
    for (int row = 0; row < matrix.users(); ++row) {
        int c = matching.assignment[static_cast<size_t>(row)];
        if (c < 1 || c > matrix.channels()) throw std::invalid_argument("matching_value: channel out of range");
        sum += matrix.mean(row, c);
    }
    return sum;
}

} // namespace mumab
