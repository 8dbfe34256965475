#pragma once
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgctx/embedding.hpp"
#include "kgctx/knowledge_graph.hpp"
#include "kgctx/retrieval.hpp"

namespace kgctx {

// Answer-side canonical form: lowercase, trim, collapse internal whitespace,
// strip terminal punctuation (. ! ?).
std::string normalize_answer(std::string_view answer);

bool exact_match(std::string_view predicted, std::string_view gold);

struct EvalRecord {
    std::string query_id;
    std::string predicted;
    std::string gold;
    std::optional<std::string> question_class;
    bool matched = false;
};

struct ClassStats {
    size_t total = 0;
    size_t matched = 0;
    double rate() const { return total == 0 ? 0.0 : static_cast<double>(matched) / total; }
};

struct EvalReport {
    std::vector<EvalRecord> records; // sorted by query id
    size_t total = 0;
    size_t matched = 0;
    double overall = 0.0;       // micro average
    double macro_average = 0.0; // mean of per-class rates
    std::map<std::string, ClassStats> per_class;
};

// Scores predictions against query gold answers. Errors: empty prediction
// list, duplicate prediction id, id not in queries, query without a gold
// answer.
EvalReport evaluate(const std::vector<std::pair<std::string, std::string>>& predictions,
                    const std::vector<Query>& queries);

// Predictions JSONL: {"id","predicted"}.
std::vector<std::pair<std::string, std::string>> load_predictions_jsonl(std::istream& in);
std::vector<std::pair<std::string, std::string>> load_predictions_file(const std::string& path);

nlohmann::json eval_report_to_json(const EvalReport& report);
std::string eval_report_csv(const EvalReport& report);

// ---------------------------------------------------------------------------
// Retrieval benchmark

// query id -> set of relevant triple serializations "(h, r, t)".
using RelevanceOracle = std::map<std::string, std::set<std::string>>;

// Set-retrieval metrics, macro-averaged across queries. Empty-set edges:
// precision is 1 when nothing was selected, recall is 1 when nothing was
// relevant, F1 is 0 when precision + recall is 0. A query absent from the
// oracle counts as having an empty relevant set.
struct BenchRow {
    RetrievalConfig config;
    size_t query_count = 0;
    double mean_context_size = 0.0;
    double median_context_size = 0.0;
    double empty_context_fraction = 0.0;
    double mean_candidate_count = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> exact_set_match; // fraction of queries with selected == relevant
    double wall_seconds = 0.0;
};

struct BenchClassRow {
    std::string config_label;
    std::string question_class;
    size_t query_count = 0;
    double mean_context_size = 0.0;
    double empty_context_fraction = 0.0;
    std::optional<double> f1;
};

struct BenchReport {
    std::vector<BenchRow> rows;           // one per config, input order
    std::vector<BenchClassRow> class_rows; // per (config, question class)
};

std::string config_label(const RetrievalConfig& config);

// Runs retrieve for every (query, config) pair. Queries are processed in
// ascending id order so aggregates are deterministic; with a fixed provider
// the serialized report (timings excluded) is byte-identical across runs.
BenchReport bench_sweep(const KnowledgeGraph& kg, const std::vector<Query>& queries,
                        EmbeddingProvider& provider, const std::vector<RetrievalConfig>& configs,
                        const RelevanceOracle* oracle = nullptr);

// Oracle JSONL: {"id","relevant":["(h, r, t)", ...]}.
RelevanceOracle load_relevance_jsonl(std::istream& in);
RelevanceOracle load_relevance_file(const std::string& path);

// Wall-clock columns are off by default so reports stay reproducible.
std::string bench_report_csv(const BenchReport& report, bool include_timings = false);
std::string bench_report_long_csv(const BenchReport& report); // plot-ready config,metric,value
nlohmann::json bench_report_to_json(const BenchReport& report, bool include_timings = false);

} // namespace kgctx
