#include "kgctx/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

namespace {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void validate_batch(const ContrastiveBatch& batch) {
    validate_embedding(batch.anchor, "anchor");
    validate_embedding(batch.positive, "positive");
    if (batch.negatives.empty()) throw Error("contrastive batch needs at least one negative");
    const size_t dim = batch.positive.size();
    for (size_t j = 0; j < batch.negatives.size(); ++j) {
        validate_embedding(batch.negatives[j], "negative " + std::to_string(j));
        if (batch.negatives[j].size() != dim)
            throw Error("negative " + std::to_string(j) + " has dim " +
                        std::to_string(batch.negatives[j].size()) + ", expected " +
                        std::to_string(dim));
    }
    if (!std::isfinite(batch.tau)) throw Error("tau must be finite");
}

double logsumexp(const std::vector<double>& logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - peak);
    return peak + std::log(sum);
}

// loss = -l_0 + logsumexp(l_0..l_K) over logits l_i = cos(anchor, p_i)*e^tau.
double loss_from_logits(const std::vector<double>& logits) {
    return logsumexp(logits) - logits.front();
}

} // namespace

Embedding ProjectionHead::project(const Embedding& v) const {
    if (v.size() != dim_in)
        throw Error("projection input has dim " + std::to_string(v.size()) + ", head expects " +
                    std::to_string(dim_in));
    Embedding out(dim_out, 0.0);
    for (size_t m = 0; m < dim_in; ++m) {
        const double vm = v[m];
        if (vm == 0.0) continue;
        const double* row = weights.data() + m * dim_out;
        for (size_t n = 0; n < dim_out; ++n) out[n] += vm * row[n];
    }
    return out;
}

ProjectionHead identity_head(size_t dim) {
    ProjectionHead head{dim, dim, std::vector<double>(dim * dim, 0.0)};
    for (size_t i = 0; i < dim; ++i) head.at(i, i) = 1.0;
    return head;
}

ProjectionHead random_head(size_t dim_in, size_t dim_out, uint64_t seed, double scale) {
    ProjectionHead head{dim_in, dim_out, std::vector<double>(dim_in * dim_out, 0.0)};
    for (size_t i = 0; i < head.weights.size(); ++i) {
        const uint64_t h = mix64(seed ^ (0x5851f42d4c957f2dULL * (i + 1)));
        head.weights[i] = scale * (static_cast<double>(h >> 11) / 9007199254740992.0 * 2.0 - 1.0);
    }
    return head;
}

double contrastive_loss(const ContrastiveBatch& batch) {
    validate_batch(batch);
    const double temp = std::exp(batch.tau);
    std::vector<double> logits;
    logits.reserve(1 + batch.negatives.size());
    logits.push_back(cosine(batch.anchor, batch.positive) * temp);
    for (const auto& neg : batch.negatives) logits.push_back(cosine(batch.anchor, neg) * temp);
    return loss_from_logits(logits);
}

double contrastive_loss(const ContrastiveBatch& batch, const ProjectionHead& head) {
    validate_batch(batch);
    const double temp = std::exp(batch.tau);
    std::vector<double> logits;
    logits.reserve(1 + batch.negatives.size());
    logits.push_back(cosine(batch.anchor, head.project(batch.positive)) * temp);
    for (const auto& neg : batch.negatives)
        logits.push_back(cosine(batch.anchor, head.project(neg)) * temp);
    return loss_from_logits(logits);
}

std::vector<double> loss_gradient(const ContrastiveBatch& batch, const ProjectionHead& head) {
    validate_batch(batch);
    const size_t count = 1 + batch.negatives.size();
    const auto& anchor = batch.anchor;
    if (anchor.size() != head.dim_out)
        throw Error("anchor has dim " + std::to_string(anchor.size()) + ", head projects to " +
                    std::to_string(head.dim_out));
    const double temp = std::exp(batch.tau);

    const auto side = [&](size_t i) -> const Embedding& {
        return i == 0 ? batch.positive : batch.negatives[i - 1];
    };

    double anchor_norm_sq = 0.0;
    for (double x : anchor) anchor_norm_sq += x * x;
    if (anchor_norm_sq == 0.0) throw Error("cosine: undefined similarity for zero vector");
    const double anchor_norm = std::sqrt(anchor_norm_sq);

    std::vector<Embedding> projected(count);
    std::vector<double> proj_norm(count), dots(count), logits(count);
    for (size_t i = 0; i < count; ++i) {
        projected[i] = head.project(side(i));
        double norm_sq = 0.0, dot = 0.0;
        for (size_t n = 0; n < head.dim_out; ++n) {
            norm_sq += projected[i][n] * projected[i][n];
            dot += anchor[n] * projected[i][n];
        }
        if (norm_sq == 0.0)
            throw Error("projected vector " + std::to_string(i) +
                        " is all-zero; cosine undefined (check head initialization)");
        proj_norm[i] = std::sqrt(norm_sq);
        dots[i] = dot;
        logits[i] = dot / (anchor_norm * proj_norm[i]) * temp;
    }

    // softmax over logits; dL/dlogit_i = q_i - [i == 0]
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> q(count);
    double z = 0.0;
    for (size_t i = 0; i < count; ++i) z += q[i] = std::exp(logits[i] - peak);
    for (double& qi : q) qi /= z;

    std::vector<double> grad(head.dim_in * head.dim_out, 0.0);
    for (size_t i = 0; i < count; ++i) {
        const double coeff = (q[i] - (i == 0 ? 1.0 : 0.0)) * temp;
        if (coeff == 0.0) continue;
        // d cos(a, p)/dp = a/(|a||p|) - (a.p) p / (|a||p|^3)
        const double inv = 1.0 / (anchor_norm * proj_norm[i]);
        const double dot_term = dots[i] / (anchor_norm * proj_norm[i] * proj_norm[i] * proj_norm[i]);
        const Embedding& v = side(i);
        for (size_t m = 0; m < head.dim_in; ++m) {
            const double vm = v[m];
            if (vm == 0.0) continue;
            double* row = grad.data() + m * head.dim_out;
            for (size_t n = 0; n < head.dim_out; ++n)
                row[n] += coeff * vm * (anchor[n] * inv - projected[i][n] * dot_term);
        }
    }
    return grad;
}

TrainResult train_head(const std::vector<ContrastiveBatch>& dataset, int steps,
                       double learning_rate, ProjectionHead initial) {
    if (dataset.empty()) throw Error("training dataset is empty");
    if (steps < 0) throw Error("steps must be >= 0");
    if (!std::isfinite(learning_rate)) throw Error("learning rate must be finite");

    TrainResult result{std::move(initial), {}};
    const double inv_n = 1.0 / static_cast<double>(dataset.size());

    const auto mean_loss = [&](int step) {
        double total = 0.0;
        for (const auto& batch : dataset) total += contrastive_loss(batch, result.head);
        const double mean = total * inv_n;
        if (!std::isfinite(mean))
            throw Error("training diverged at step " + std::to_string(step) + " (loss not finite)");
        return mean;
    };

    result.loss_trace.push_back(mean_loss(0));
    for (int step = 0; step < steps; ++step) {
        std::vector<double> grad(result.head.weights.size(), 0.0);
        for (const auto& batch : dataset) {
            const auto g = loss_gradient(batch, result.head);
            for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        }
        for (size_t i = 0; i < grad.size(); ++i)
            result.head.weights[i] -= learning_rate * grad[i] * inv_n;
        result.loss_trace.push_back(mean_loss(step + 1));
    }
    return result;
}

std::vector<ContrastiveBatch> load_batches_jsonl(std::istream& in, double default_tau) {
    std::vector<ContrastiveBatch> batches;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("batches line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        ContrastiveBatch batch;
        batch.tau = default_tau;
        try {
            batch.anchor = obj.at("anchor").get<Embedding>();
            batch.positive = obj.at("positive").get<Embedding>();
            batch.negatives = obj.at("negatives").get<std::vector<Embedding>>();
            if (obj.contains("tau")) batch.tau = obj["tau"].get<double>();
        } catch (const json::exception& e) {
            throw Error("batches line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            validate_batch(batch);
        } catch (const Error& e) {
            throw Error("batches line " + std::to_string(line_no) + ": " + e.what());
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::vector<ContrastiveBatch> load_batches_file(const std::string& path, double default_tau) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open batches file: " + path);
    return load_batches_jsonl(in, default_tau);
}

json head_to_json(const ProjectionHead& head) {
    return {{"dim_in", head.dim_in}, {"dim_out", head.dim_out}, {"weights", head.weights}};
}

ProjectionHead head_from_json(const json& obj) {
    ProjectionHead head;
    try {
        head.dim_in = obj.at("dim_in").get<size_t>();
        head.dim_out = obj.at("dim_out").get<size_t>();
        head.weights = obj.at("weights").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw Error(std::string("bad projection head: ") + e.what());
    }
    if (head.weights.size() != head.dim_in * head.dim_out)
        throw Error("projection head weights size does not match dims");
    for (double w : head.weights) {
        if (!std::isfinite(w)) throw Error("projection head has non-finite weight");
    }
    return head;
}

} // namespace kgctx
