#include "mumab/env.hpp"

#include <stdexcept>

namespace mumab {

std::string to_string(RewardDistKind kind) {
    switch (kind) {
        case RewardDistKind::PointMass: return "point_mass";
        case RewardDistKind::Uniform: return "uniform";
        case RewardDistKind::TruncatedNormal: return "truncated_normal";
        case RewardDistKind::Bernoulli: return "bernoulli";
    }
    return "?";
}

RewardDistKind reward_dist_kind_from_string(const std::string& s) {
    if (s == "point_mass") return RewardDistKind::PointMass;
    if (s == "uniform") return RewardDistKind::Uniform;
    if (s == "truncated_normal") return RewardDistKind::TruncatedNormal;
    if (s == "bernoulli") return RewardDistKind::Bernoulli;
    throw ValidationError("unknown reward distribution kind: " + s);
}

ChannelModel::ChannelModel(MeanMatrix matrix, const RewardDistSpec& global_spec, std::uint64_t seed,
                           bool allow_zero_atom)
    : ChannelModel(std::move(matrix),
                   std::vector<RewardDistSpec>(), seed, allow_zero_atom) {
    specs_.assign(static_cast<size_t>(matrix_.users()) * matrix_.channels(), global_spec);
    validate(allow_zero_atom);
}

ChannelModel::ChannelModel(MeanMatrix matrix, std::vector<RewardDistSpec> per_entry, std::uint64_t seed,
                           bool allow_zero_atom)
    : matrix_(std::move(matrix)), specs_(std::move(per_entry)), rng_(seed) {
    if (!specs_.empty()) validate(allow_zero_atom);
}

void ChannelModel::validate(bool allow_zero_atom) {
    const size_t n = static_cast<size_t>(matrix_.users()) * matrix_.channels();
    if (specs_.size() != n)
        throw ValidationError("environment: expected one distribution spec per (user, channel) entry");

    zero_atom_possible_ = false;
    for (int user = 0; user < matrix_.users(); ++user) {
        for (int c = 1; c <= matrix_.channels(); ++c) {
            const double mu = matrix_.mean(user, c);
            const RewardDistSpec& s = specs_[static_cast<size_t>(user) * matrix_.channels() + c - 1];
            const std::string where =
                " at entry (" + std::to_string(user + 1) + "," + std::to_string(c) + ")";
            switch (s.kind) {
                case RewardDistKind::PointMass:
                    if (mu == 0.0) zero_atom_possible_ = true;
                    break;
                case RewardDistKind::Uniform:
                case RewardDistKind::TruncatedNormal:
                    if (!(s.width > 0.0))
                        throw ValidationError("environment: width must be > 0" + where);
                    if (!(mu - s.width > 0.0) || !(mu + s.width <= 1.0))
                        throw ValidationError("environment: support [mu-width, mu+width] must lie inside (0,1]" + where);
                    if (s.kind == RewardDistKind::TruncatedNormal && !(s.sigma > 0.0))
                        throw ValidationError("environment: sigma must be > 0" + where);
                    break;
                case RewardDistKind::Bernoulli:
                    if (mu < 1.0) zero_atom_possible_ = true;
                    break;
            }
        }
    }
    if (zero_atom_possible_ && !allow_zero_atom)
        throw ValidationError(
            "environment: a distribution has an atom at reward 0, which makes collisions "
            "indistinguishable from low draws; pass allow_zero_atom to run anyway (protocol "
            "guarantees are void)");
}

double ChannelModel::draw(int user, int channel) {
    const double mu = matrix_.mean(user, channel);
    const RewardDistSpec& s = specs_[static_cast<size_t>(user) * matrix_.channels() + channel - 1];
    switch (s.kind) {
        case RewardDistKind::PointMass:
            return mu;
        case RewardDistKind::Uniform: {
            std::uniform_real_distribution<double> d(mu - s.width, mu + s.width);
            return d(rng_);
        }
        case RewardDistKind::TruncatedNormal: {
            std::normal_distribution<double> d(mu, s.sigma);
            double x;
            do {
                x = d(rng_);
            } while (x < mu - s.width || x > mu + s.width);
            return x;
        }
        case RewardDistKind::Bernoulli: {
            std::bernoulli_distribution d(mu);
            return d(rng_) ? 1.0 : 0.0;
        }
    }
    return mu;
}

StepOutcome ChannelModel::step(const std::vector<int>& actions) {
    const int k = matrix_.users();
    const int m = matrix_.channels();
    if (static_cast<int>(actions.size()) != k)
        throw std::invalid_argument("step: expected one action per user");

    StepOutcome out;
    out.rewards.assign(static_cast<size_t>(k), 0.0);
    out.collided.assign(static_cast<size_t>(k), 0);
    out.occupancy.assign(static_cast<size_t>(m), 0);

    for (int a : actions) {
        if (a < 1 || a > m) throw std::invalid_argument("step: action outside 1..m");
        ++out.occupancy[static_cast<size_t>(a - 1)];
    }
    for (int j = 0; j < k; ++j) {
        if (out.occupancy[static_cast<size_t>(actions[static_cast<size_t>(j)] - 1)] >= 2) {
            out.collided[static_cast<size_t>(j)] = 1;
        } else {
            out.rewards[static_cast<size_t>(j)] = draw(j, actions[static_cast<size_t>(j)]);
        }
    }
    return out;
}

double ChannelModel::expected_system_reward(const Matching& matching) const {
    std::vector<char> seen(static_cast<size_t>(matrix_.channels()) + 1, 0);
    for (int c : matching.assignment) {
        if (c < 1 || c > matrix_.channels() || seen[static_cast<size_t>(c)])
            throw std::invalid_argument("expected_system_reward: matching is not injective");
        seen[static_cast<size_t>(c)] = 1;
    }
    return matching_value(matrix_, matching);
}

} // namespace mumab
