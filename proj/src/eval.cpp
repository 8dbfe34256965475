#include "kgctx/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

std::string normalize_answer(std::string_view answer) {
    std::string n = collapse_ws(lower_ascii(trim(answer)));
    while (!n.empty() &&
           (n.back() == '.' || n.back() == '!' || n.back() == '?' || n.back() == ' '))
        n.pop_back();
    return n;
}

bool exact_match(std::string_view predicted, std::string_view gold) {
    return normalize_answer(predicted) == normalize_answer(gold);
}

EvalReport evaluate(const std::vector<std::pair<std::string, std::string>>& predictions,
                    const std::vector<Query>& queries) {
    if (predictions.empty()) throw Error("no predictions");

    std::unordered_map<std::string, const Query*> by_id;
    for (const auto& q : queries) by_id.emplace(q.id, &q);

    EvalReport report;
    std::unordered_set<std::string> seen;
    for (const auto& [id, predicted] : predictions) {
        if (!seen.insert(id).second) throw Error("duplicate prediction id \"" + id + "\"");
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("prediction for unknown query id \"" + id + "\"");
        const Query& q = *it->second;
        if (!q.gold_answer) throw Error("query \"" + id + "\" has no gold answer");
        EvalRecord rec{id, predicted, *q.gold_answer, q.question_class,
                       exact_match(predicted, *q.gold_answer)};
        report.records.push_back(std::move(rec));
    }

    std::sort(report.records.begin(), report.records.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.query_id < b.query_id; });

    report.total = report.records.size();
    for (const auto& rec : report.records) {
        auto& cls = report.per_class[rec.question_class.value_or("")];
        ++cls.total;
        if (rec.matched) {
            ++cls.matched;
            ++report.matched;
        }
    }
    report.overall = static_cast<double>(report.matched) / static_cast<double>(report.total);
    double rate_sum = 0.0;
    for (const auto& [name, stats] : report.per_class) rate_sum += stats.rate();
    report.macro_average = rate_sum / static_cast<double>(report.per_class.size());
    return report;
}

std::vector<std::pair<std::string, std::string>> load_predictions_jsonl(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
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
            throw Error("predictions line " + std::to_string(line_no) + ": invalid JSON: " +
                        e.what());
        }
        try {
            out.emplace_back(obj.at("id").get<std::string>(),
                             obj.at("predicted").get<std::string>());
        } catch (const json::exception& e) {
            throw Error("predictions line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> load_predictions_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open predictions file: " + path);
    return load_predictions_jsonl(in);
}

namespace {

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string();
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace

json eval_report_to_json(const EvalReport& report) {
    json classes = json::object();
    for (const auto& [name, stats] : report.per_class)
        classes[name] = {{"total", stats.total}, {"matched", stats.matched}, {"rate", stats.rate()}};
    json records = json::array();
    for (const auto& rec : report.records) {
        records.push_back({{"id", rec.query_id},
                           {"predicted", rec.predicted},
                           {"gold", rec.gold},
                           {"class", rec.question_class ? json(*rec.question_class) : json()},
                           {"matched", rec.matched}});
    }
    return {{"total", report.total},
            {"matched", report.matched},
            {"exact_match", report.overall},
            {"macro_average", report.macro_average},
            {"per_class", std::move(classes)},
            {"records", std::move(records)}};
}

std::string eval_report_csv(const EvalReport& report) {
    std::string out = "class,total,matched,rate\n";
    out += "(all),"+ std::to_string(report.total) + "," + std::to_string(report.matched) + "," +
           fmt(report.overall) + "\n";
    for (const auto& [name, stats] : report.per_class) {
        out += csv_escape(name.empty() ? "(none)" : name) + "," + std::to_string(stats.total) +
               "," + std::to_string(stats.matched) + "," + fmt(stats.rate()) + "\n";
    }
    out += "(macro)," + std::to_string(report.total) + "," + std::to_string(report.matched) + "," +
           fmt(report.macro_average) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark

std::string config_label(const RetrievalConfig& config) {
    std::string label = to_string(config.mode);
    if (config.mode == SelectionMode::dynamic)
        label += "(lambda=" + std::string(fmt_short(config.lambda)) + ")";
    else
        label += "(top_k=" + std::to_string(config.top_k) + ")";
    label += " hops=" + std::to_string(config.hops);
    return label;
}

namespace {

struct SetMetrics {
    double precision;
    double recall;
    double f1;
    bool exact;
};

SetMetrics set_metrics(const std::set<std::string>& selected,
                       const std::set<std::string>& relevant) {
    size_t hit = 0;
    for (const auto& s : selected) hit += relevant.count(s);
    const double precision =
        selected.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(selected.size());
    const double recall =
        relevant.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(relevant.size());
    const double f1 =
        precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    return {precision, recall, f1, selected == relevant};
}

double median(std::vector<size_t> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return static_cast<double>(values[mid]);
    return (static_cast<double>(values[mid - 1]) + static_cast<double>(values[mid])) / 2.0;
}

} // namespace

BenchReport bench_sweep(const KnowledgeGraph& kg, const std::vector<Query>& queries,
                        EmbeddingProvider& provider, const std::vector<RetrievalConfig>& configs,
                        const RelevanceOracle* oracle) {
    if (configs.empty()) throw Error("bench sweep needs at least one config");

    // Deterministic aggregation order: ascending query id.
    std::vector<const Query*> ordered;
    ordered.reserve(queries.size());
    for (const auto& q : queries) ordered.push_back(&q);
    std::sort(ordered.begin(), ordered.end(),
              [](const Query* a, const Query* b) { return a->id < b->id; });

    static const std::set<std::string> kEmpty;
    BenchReport report;
    for (const auto& config : configs) {
        const auto started = std::chrono::steady_clock::now();

        BenchRow row;
        row.config = config;
        row.query_count = ordered.size();

        std::vector<size_t> context_sizes;
        context_sizes.reserve(ordered.size());
        size_t empty_contexts = 0;
        double candidate_sum = 0.0;
        double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
        size_t exact_sets = 0;

        struct ClassAccum {
            size_t count = 0;
            size_t context_sum = 0;
            size_t empty = 0;
            double f1_sum = 0.0;
        };
        std::map<std::string, ClassAccum> per_class;

        for (const Query* query : ordered) {
            ContextBundle bundle;
            try {
                bundle = retrieve(kg, *query, config, provider);
            } catch (const Error& e) {
                throw Error("query \"" + query->id + "\" under " + config_label(config) + ": " +
                            e.what());
            }
            context_sizes.push_back(bundle.selected.size());
            if (bundle.selected.empty()) ++empty_contexts;
            candidate_sum += static_cast<double>(bundle.candidate_count);

            SetMetrics metrics{0, 0, 0, false};
            if (oracle) {
                std::set<std::string> selected;
                for (const auto& st : bundle.selected) selected.insert(serialize_triple(st.triple));
                auto it = oracle->find(query->id);
                metrics = set_metrics(selected, it == oracle->end() ? kEmpty : it->second);
                precision_sum += metrics.precision;
                recall_sum += metrics.recall;
                f1_sum += metrics.f1;
                if (metrics.exact) ++exact_sets;
            }

            auto& cls = per_class[query->question_class.value_or("")];
            ++cls.count;
            cls.context_sum += bundle.selected.size();
            if (bundle.selected.empty()) ++cls.empty;
            cls.f1_sum += metrics.f1;
        }

        const double n = ordered.empty() ? 1.0 : static_cast<double>(ordered.size());
        row.mean_context_size =
            std::accumulate(context_sizes.begin(), context_sizes.end(), 0.0) / n;
        row.median_context_size = median(context_sizes);
        row.empty_context_fraction = static_cast<double>(empty_contexts) / n;
        row.mean_candidate_count = candidate_sum / n;
        if (oracle) {
            row.precision = precision_sum / n;
            row.recall = recall_sum / n;
            row.f1 = f1_sum / n;
            row.exact_set_match = static_cast<double>(exact_sets) / n;
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        report.rows.push_back(row);

        for (const auto& [name, accum] : per_class) {
            BenchClassRow cls_row;
            cls_row.config_label = config_label(config);
            cls_row.question_class = name;
            cls_row.query_count = accum.count;
            cls_row.mean_context_size =
                static_cast<double>(accum.context_sum) / static_cast<double>(accum.count);
            cls_row.empty_context_fraction =
                static_cast<double>(accum.empty) / static_cast<double>(accum.count);
            if (oracle) cls_row.f1 = accum.f1_sum / static_cast<double>(accum.count);
            report.class_rows.push_back(std::move(cls_row));
        }
    }
    return report;
}

RelevanceOracle load_relevance_jsonl(std::istream& in) {
    RelevanceOracle oracle;
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
            throw Error("oracle line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        try {
            auto id = obj.at("id").get<std::string>();
            auto triples = obj.at("relevant").get<std::vector<std::string>>();
            oracle[id] = std::set<std::string>(triples.begin(), triples.end());
        } catch (const json::exception& e) {
            throw Error("oracle line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return oracle;
}

RelevanceOracle load_relevance_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open oracle file: " + path);
    return load_relevance_jsonl(in);
}

std::string bench_report_csv(const BenchReport& report, bool include_timings) {
    std::string out =
        "mode,lambda,top_k,hops,queries,mean_context,median_context,empty_fraction,"
        "mean_candidates,precision,recall,f1,exact_set_match";
    if (include_timings) out += ",wall_seconds";
    out += "\n";
    for (const auto& row : report.rows) {
        const bool dynamic = row.config.mode == SelectionMode::dynamic;
        out += to_string(row.config.mode);
        out += ",";
        out += dynamic ? fmt_short(row.config.lambda) : "";
        out += ",";
        out += dynamic ? "" : std::to_string(row.config.top_k);
        out += "," + std::to_string(row.config.hops);
        out += "," + std::to_string(row.query_count);
        out += "," + fmt(row.mean_context_size);
        out += "," + fmt(row.median_context_size);
        out += "," + fmt(row.empty_context_fraction);
        out += "," + fmt(row.mean_candidate_count);
        out += "," + fmt_opt(row.precision);
        out += "," + fmt_opt(row.recall);
        out += "," + fmt_opt(row.f1);
        out += "," + fmt_opt(row.exact_set_match);
        if (include_timings) out += "," + fmt(row.wall_seconds);
        out += "\n";
    }
    if (!report.class_rows.empty()) {
        out += "\nconfig,class,queries,mean_context,empty_fraction,f1\n";
        for (const auto& row : report.class_rows) {
            out += csv_escape(row.config_label) + "," +
                   csv_escape(row.question_class.empty() ? "(none)" : row.question_class) + "," +
                   std::to_string(row.query_count) + "," + fmt(row.mean_context_size) + "," +
                   fmt(row.empty_context_fraction) + "," + fmt_opt(row.f1) + "\n";
        }
    }
    return out;
}

std::string bench_report_long_csv(const BenchReport& report) {
    std::string out = "config,metric,value\n";
    for (const auto& row : report.rows) {
        const std::string label = csv_escape(config_label(row.config));
        out += label + ",mean_context," + fmt(row.mean_context_size) + "\n";
        out += label + ",median_context," + fmt(row.median_context_size) + "\n";
        out += label + ",empty_fraction," + fmt(row.empty_context_fraction) + "\n";
        out += label + ",mean_candidates," + fmt(row.mean_candidate_count) + "\n";
        if (row.precision) out += label + ",precision," + fmt(*row.precision) + "\n";
        if (row.recall) out += label + ",recall," + fmt(*row.recall) + "\n";
        if (row.f1) out += label + ",f1," + fmt(*row.f1) + "\n";
        if (row.exact_set_match)
            out += label + ",exact_set_match," + fmt(*row.exact_set_match) + "\n";
    }
    return out;
}

json bench_report_to_json(const BenchReport& report, bool include_timings) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        json obj = {{"config", config_to_json(row.config)},
                    {"label", config_label(row.config)},
                    {"queries", row.query_count},
                    {"mean_context", row.mean_context_size},
                    {"median_context", row.median_context_size},
                    {"empty_fraction", row.empty_context_fraction},
                    {"mean_candidates", row.mean_candidate_count}};
        if (row.precision) obj["precision"] = *row.precision;
        if (row.recall) obj["recall"] = *row.recall;
        if (row.f1) obj["f1"] = *row.f1;
        if (row.exact_set_match) obj["exact_set_match"] = *row.exact_set_match;
        if (include_timings) obj["wall_seconds"] = row.wall_seconds;
        rows.push_back(std::move(obj));
    }
    json class_rows = json::array();
    for (const auto& row : report.class_rows) {
        json obj = {{"config", row.config_label},
                    {"class", row.question_class},
                    {"queries", row.query_count},
                    {"mean_context", row.mean_context_size},
                    {"empty_fraction", row.empty_context_fraction}};
        if (row.f1) obj["f1"] = *row.f1;
        class_rows.push_back(std::move(obj));
    }
    return {{"rows", std::move(rows)}, {"per_class", std::move(class_rows)}};
}

} // namespace kgctx
