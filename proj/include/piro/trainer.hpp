#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "piro/dataset.hpp"
#include "piro/encoder.hpp"
#include "piro/losses.hpp"

namespace piro {

struct TrainConfig {
    std::size_t epochs = 25;
    std::size_t pairs_per_epoch = 256;
    std::size_t pairs_per_step = 8;  // gradients accumulate over a step's pairs
    std::size_t views_per_sample = 4;
    double learning_rate = 1e-5;
    std::size_t lr_halving_period_epochs = 5;
    Margins margins;
    // Large-margin annealing: lambda starts here and decays per step.
    double lambda_start = 10.0;
    double lambda_decay = 0.99;
    EncoderConfig encoder;
    std::uint64_t seed = 1;
};

struct TrainLogEntry {
    std::size_t epoch = 0;
    double mean_total = 0.0;
    double mean_cat = 0.0;
    double mean_picat = 0.0;
    double mean_piobj_intra = 0.0;
    double mean_piobj_inter = 0.0;
    double learning_rate = 0.0;
    double d_max_intra = 0.0;
    double d_min_inter = 0.0;
    std::optional<double> rho;
};

struct AdamState {
    std::size_t step = 0;
    std::map<std::string, Tensor> first_moment;
    std::map<std::string, Tensor> second_moment;
};

// One Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) over the named
// gradients; parameters without a gradient entry are left untouched.
void adam_step(EncoderParams& encoder, ClassifierParams& classifier,
               const std::map<std::string, Tensor>& gradients, AdamState& state,
               double learning_rate);

struct NanLossError : std::runtime_error {
    NanLossError(std::size_t epoch, std::string term);
    std::size_t epoch;
    std::string term;
};

struct TrainResult {
    EncoderParams encoder;
    ClassifierParams classifier;
    AdamState optimizer;
    std::vector<TrainLogEntry> log;
};

using EpochCallback = std::function<void(const TrainResult&, const TrainLogEntry&)>;

// Joint optimization of encoder and classifier. Learning rate halves every
// lr_halving_period_epochs. Deterministic given config + dataset + seed.
// Throws NanLossError naming the offending epoch and term on divergence.
// The callback, if given, fires after every epoch with the current state.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const EpochCallback& on_epoch = nullptr);

struct DistanceStats {
    double d_max_intra = 0.0;
    double d_min_inter = 0.0;
    std::optional<double> rho;
};

// Per object: intra is the max distance from its single-view object
// embeddings to its multi-view object embedding; inter is the min distance
// from any of its single views to any single view of a different object in
// the same category. Both averaged over objects; rho = inter / intra.
DistanceStats track_distances(EncoderParams& encoder, const Dataset& dataset, Split split);

double schedule_learning_rate(double base, std::size_t epoch, std::size_t halving_period);

}  // namespace piro
