#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bflsim/data.hpp"
#include "bflsim/params.hpp"

namespace bfl {

enum class AttackKind { none, label_flip, gaussian, trim, krum, min_max, scaling, sybil };

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    double gaussian_variance = 200.0;  // variance, not std
    double trim_reach = 0.5;
    double scale_factor = 10.0;
    std::size_t trigger_width = 4;
    std::uint32_t target_class = 0;
    std::uint64_t seed = 0;

    void validate(std::size_t feature_dim, std::size_t num_classes) const;
};

// Full-knowledge view given to the attacker: this round's honest updates and
// the global model they started from.
struct AttackContext {
    std::span<const ParamVector> benign_updates;
    std::span<const double> previous_global;
    std::uint64_t round = 0;

    std::size_t dimension() const;
};

struct KrumSearch {
    ParamVector vector;
    double lambda = 0.0;
    bool selected = false;  // krum_select picked a malicious copy
};

namespace attacks {

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

// Attacks whose submissions replace local training entirely.
bool replaces_training(AttackKind kind);

std::vector<ParamVector> gaussian_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec);

/// Per coordinate: push every malicious value trim_reach * range beyond the
/// benign extreme opposite to the benign drift sign(mean - previous).
std::vector<ParamVector> trim_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec);

/// previous - lambda * sign(mean benign - previous), halving lambda from 1
/// until krum picks one of the malicious copies or lambda < 1e-5.
KrumSearch krum_attack_search(std::size_t num_malicious, const AttackContext& ctx);
std::vector<ParamVector> krum_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec);

/// mu + gamma * p with p = -mu/||mu||; gamma is the largest value keeping
/// every benign update within the max pairwise benign distance.
std::vector<ParamVector> min_max_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec);

ParamVector scaling_attack(std::span<const double> poisoned_local, const AttackContext& ctx, const AttackSpec& spec);

// One gaussian_attack draw per round shared by every malicious client.
std::vector<ParamVector> sybil_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec);

// Dispatch for the attacks where replaces_training(kind) holds.
std::vector<ParamVector> craft(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec);

// Sets the first trigger_width features to 1.0.
void stamp_trigger(std::span<double> features, const AttackSpec& spec);

/// Backdoor poisoning of a malicious client's local data: half of the rows
/// (seeded, keyed by client) get the trigger and the target label.
Dataset poison_with_trigger(const Dataset& data, const AttackSpec& spec, std::uint64_t client_id);

}  // namespace attacks
}  // namespace bfl
