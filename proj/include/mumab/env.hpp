#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mumab/matching.hpp"

namespace mumab {

enum class RewardDistKind { PointMass, Uniform, TruncatedNormal, Bernoulli };

std::string to_string(RewardDistKind kind);
RewardDistKind reward_dist_kind_from_string(const std::string& s);

// Per-entry reward distribution around the matrix mean mu:
//   PointMass        reward == mu
//   Uniform          reward ~ U[mu-width, mu+width], interval inside (0,1]
//   TruncatedNormal  N(mu, sigma) rejection-sampled into [mu-width, mu+width]
//                    inside (0,1]; the symmetric window keeps the mean at mu
//   Bernoulli        reward in {0,1} with mean mu -- has an atom at 0, so it
//                    breaks collision signalling and needs allow_zero_atom
struct RewardDistSpec {
    RewardDistKind kind = RewardDistKind::PointMass;
    double width = 0.0;
    double sigma = 0.0;

    friend bool operator==(const RewardDistSpec&, const RewardDistSpec&) = default;
};

struct StepOutcome {
    std::vector<double> rewards;       // per user; 0 on collision
    std::vector<std::uint8_t> collided;  // per user
    std::vector<int> occupancy;        // per channel (index channel-1)
};

// The stochastic channel environment: seeded i.i.d. rewards plus the
// collision-to-zero rule. Single-owner; step it sequentially.
class ChannelModel {
public:
    // One spec for every (user, channel) entry.
    ChannelModel(MeanMatrix matrix, const RewardDistSpec& global_spec, std::uint64_t seed,
                 bool allow_zero_atom = false);
    // Per-entry specs, row-major k*m.
    ChannelModel(MeanMatrix matrix, std::vector<RewardDistSpec> per_entry, std::uint64_t seed,
                 bool allow_zero_atom = false);

    // Draws consume the RNG stream in user-index order over non-collided
    // users only, so identical seeds give identical traces for identical
    // action sequences.
    StepOutcome step(const std::vector<int>& actions);

    // sum of true means selected by the matching
    double expected_system_reward(const Matching& matching) const;

    const MeanMatrix& means() const { return matrix_; }
    const std::vector<RewardDistSpec>& dist_specs() const { return specs_; }
    // true if some entry's distribution can emit exactly 0 without a collision
    bool zero_atom_possible() const { return zero_atom_possible_; }

private:
    void validate(bool allow_zero_atom);
    double draw(int user, int channel);

    MeanMatrix matrix_;
    std::vector<RewardDistSpec> specs_;
    bool zero_atom_possible_ = false;
    std::mt19937_64 rng_;
};

} // namespace mumab
