#pragma once
#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgctx/embedding.hpp"

namespace kgctx {

// One alignment instance: an image/patch-side anchor, the triple that is
// relevant to it, and at least one irrelevant triple. tau scales the logits
// as s * e^tau, so larger tau sharpens the softmax.
struct ContrastiveBatch {
    Embedding anchor;
    Embedding positive;
    std::vector<Embedding> negatives;
    double tau = 0.0;
};

// Trainable linear projection applied to triple-side vectors before the
// similarity; row-major dim_in x dim_out.
struct ProjectionHead {
    size_t dim_in = 0;
    size_t dim_out = 0;
    std::vector<double> weights;

    double& at(size_t row, size_t col) { return weights[row * dim_out + col]; }
    double at(size_t row, size_t col) const { return weights[row * dim_out + col]; }

    Embedding project(const Embedding& v) const;
};

ProjectionHead identity_head(size_t dim);
// Uniform weights in [-scale, scale]; fully deterministic in seed.
ProjectionHead random_head(size_t dim_in, size_t dim_out, uint64_t seed, double scale = 0.1);

// -log softmax probability of the positive among {positive} u negatives,
// with logits cos(anchor, v) * e^tau. Stable via max-shifted logsumexp.
double contrastive_loss(const ContrastiveBatch& batch);

// Same loss with triple-side vectors run through the projection head.
double contrastive_loss(const ContrastiveBatch& batch, const ProjectionHead& head);

// Analytic d loss / d weights, row-major like ProjectionHead::weights.
std::vector<double> loss_gradient(const ContrastiveBatch& batch, const ProjectionHead& head);

struct TrainResult {
    ProjectionHead head;
    // loss_trace[i] = mean dataset loss after i gradient steps; size steps+1.
    std::vector<double> loss_trace;
};

// Plain full-batch gradient descent with a fixed step. Throws Error with the
// step index if the loss stops being finite.
TrainResult train_head(const std::vector<ContrastiveBatch>& dataset, int steps,
                       double learning_rate, ProjectionHead initial);

// JSONL: {"anchor":[..],"positive":[..],"negatives":[[..]]}; an optional
// per-record "tau" overrides default_tau.
std::vector<ContrastiveBatch> load_batches_jsonl(std::istream& in, double default_tau = 0.0);
std::vector<ContrastiveBatch> load_batches_file(const std::string& path, double default_tau = 0.0);

nlohmann::json head_to_json(const ProjectionHead& head);
ProjectionHead head_from_json(const nlohmann::json& obj);

} // namespace kgctx
