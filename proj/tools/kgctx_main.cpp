// kgctx: batch CLI over the knowledge-graph context retrieval engine.
// Subcommands: ingest, retrieve, bench, eval, prompt, train-align.
// Exit codes: 0 success, 1 data/processing error, 2 usage error.

#include <atomic>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgctx/context_assembly.hpp"
#include "kgctx/contrastive.hpp"
#include "kgctx/embedding.hpp"
#include "kgctx/error.hpp"
#include "kgctx/eval.hpp"
#include "kgctx/knowledge_graph.hpp"
#include "kgctx/manifest.hpp"
#include "kgctx/retrieval.hpp"
#include "kgctx/text.hpp"

namespace {

using namespace kgctx;
using nlohmann::json;

struct PipelineFlags {
    std::string triples_path;
    std::string format = "tsv";
    std::string provider = "hash";
    std::string config_path;
    RetrievalConfig config;
    std::string mode = "dynamic";
    uint64_t seed = 0;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--triples", f.triples_path, "knowledge base file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--format", f.format, "triples format: tsv or jsonl")
        ->check(CLI::IsMember({"tsv", "jsonl"}));
    cmd->add_option("--provider", f.provider,
                    "embedding provider: hash[:dim], file:<path>, remote[:<url>]");
    cmd->add_option("--lambda", f.config.lambda, "dynamic similarity threshold")
        ->check(CLI::Range(-1.0, 1.0));
    cmd->add_option("--hops", f.config.hops, "multi-hop expansion depth")->check(CLI::Range(1, 64));
    cmd->add_option("--mode", f.mode, "selection mode: dynamic or fixed")
        ->check(CLI::IsMember({"dynamic", "fixed"}));
    cmd->add_option("--top-k", f.config.top_k, "triples to keep in fixed mode")
        ->check(CLI::Range(1, 1 << 20));
    cmd->add_option("--mask-token", f.config.mask_token, "entity mask token");
    cmd->add_option("--config", f.config_path, "JSON config file; explicit flags win")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "random seed recorded in the manifest");
}

// Flat JSON config supplies defaults for flags the user did not pass.
void apply_config_file(const CLI::App& cmd, PipelineFlags& f) {
    if (f.config_path.empty()) return;
    std::ifstream in(f.config_path);
    if (!in) throw Error("cannot open config file: " + f.config_path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("config file " + f.config_path + ": " + e.what());
    }
    const auto unset = [&](const char* flag) { return cmd.count(flag) == 0; };
    try {
        if (cfg.contains("lambda") && unset("--lambda")) f.config.lambda = cfg["lambda"].get<double>();
        if (cfg.contains("hops") && unset("--hops")) f.config.hops = cfg["hops"].get<int>();
        if (cfg.contains("mode") && unset("--mode")) f.mode = cfg["mode"].get<std::string>();
        if (cfg.contains("top_k") && unset("--top-k")) f.config.top_k = cfg["top_k"].get<int>();
        if (cfg.contains("mask_token") && unset("--mask-token"))
            f.config.mask_token = cfg["mask_token"].get<std::string>();
        if (cfg.contains("provider") && unset("--provider"))
            f.provider = cfg["provider"].get<std::string>();
        if (cfg.contains("seed") && unset("--seed")) f.seed = cfg["seed"].get<uint64_t>();
    } catch (const json::exception& e) {
        throw Error("config file " + f.config_path + ": " + e.what());
    }
}

RetrievalConfig resolve_config(PipelineFlags& f) {
    f.config.mode = parse_selection_mode(f.mode);
    return f.config;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path, std::ios::binary);
    if (!file) throw Error("cannot write output file: " + path);
    return file;
}

void emit_manifest(const std::string& out_path, const std::string& manifest_path,
                   const std::string& command, uint64_t seed, json config,
                   const std::vector<std::string>& inputs) {
    std::string path = manifest_path;
    if (path.empty()) {
        if (out_path.empty()) return; // stdout run, no artifact to annotate
        path = out_path + ".manifest.json";
    }
    RunManifest manifest;
    manifest.command = command;
    manifest.created_utc = current_utc_iso8601();
    manifest.seed = seed;
    manifest.config = std::move(config);
    for (const auto& input : inputs)
        if (!input.empty()) manifest.input_digests[input] = file_digest(input);
    write_manifest_file(path, manifest);
}

std::vector<Query> sorted_by_id(std::vector<Query> queries) {
    std::sort(queries.begin(), queries.end(),
              [](const Query& a, const Query& b) { return a.id < b.id; });
    return queries;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const PipelineFlags& flags, const std::string& manifest_path) {
    const auto kg =
        KnowledgeGraph::ingest_file(flags.triples_path, parse_triple_format(flags.format));
    std::cout << "triples: " << kg.size() << ", entities: " << kg.entity_count()
              << ", duplicates dropped: " << kg.duplicate_count()
              << ", digest: " << kg.source_digest() << "\n";
    emit_manifest("", manifest_path, "ingest", flags.seed,
                  {{"format", flags.format}}, {flags.triples_path});
    return 0;
}

int cmd_retrieve(PipelineFlags& flags, const std::string& queries_path, const std::string& out_path,
                 const std::string& manifest_path, unsigned jobs) {
    const RetrievalConfig config = resolve_config(flags);
    const auto kg =
        KnowledgeGraph::ingest_file(flags.triples_path, parse_triple_format(flags.format));
    const auto queries = sorted_by_id(load_queries_file(queries_path));
    auto provider = make_provider(flags.provider);
    CachingProvider cached(*provider);

    std::vector<json> results(queries.size());
    std::atomic<size_t> next{0};
    std::atomic<bool> any_failed{false};
    const auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < queries.size(); i = next.fetch_add(1)) {
            try {
                results[i] = bundle_to_json(queries[i].id, retrieve(kg, queries[i], config, cached));
            } catch (const Error& e) {
                results[i] = {{"id", queries[i].id}, {"error", e.what()}};
                any_failed = true;
            }
        }
    };

    if (jobs <= 1 || !cached.thread_safe()) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    for (const auto& result : results) out << result.dump() << "\n";

    emit_manifest(out_path, manifest_path, "retrieve", flags.seed, config_to_json(config),
                  {flags.triples_path, queries_path});
    if (any_failed) {
        std::cerr << "error: one or more queries failed; see error fields in output\n";
        return 1;
    }
    return 0;
}

int cmd_bench(PipelineFlags& flags, const std::string& queries_path, const std::string& sweep_path,
              const std::string& oracle_path, const std::string& out_path,
              const std::string& json_out, const std::string& long_out, bool timings,
              const std::string& manifest_path) {
    const RetrievalConfig base = resolve_config(flags);

    std::vector<RetrievalConfig> configs;
    if (!sweep_path.empty()) {
        std::ifstream in(sweep_path);
        if (!in) throw Error("cannot open sweep file: " + sweep_path);
        json arr;
        try {
            arr = json::parse(in);
        } catch (const json::exception& e) {
            throw Error("sweep file " + sweep_path + ": " + e.what());
        }
        if (!arr.is_array() || arr.empty())
            throw Error("sweep file must hold a non-empty JSON array of configs");
        for (const auto& obj : arr) configs.push_back(config_from_json(obj));
    } else {
        // Default sweep: the dynamic setting plus the fixed-k ladder.
        configs.push_back(base);
        for (int k : {1, 3, 5, 7, 9}) {
            RetrievalConfig fixed = base;
            fixed.mode = SelectionMode::fixed;
            fixed.top_k = k;
            configs.push_back(fixed);
        }
    }

    const auto kg =
        KnowledgeGraph::ingest_file(flags.triples_path, parse_triple_format(flags.format));
    const auto queries = load_queries_file(queries_path);
    auto provider = make_provider(flags.provider);
    CachingProvider cached(*provider);

    std::optional<RelevanceOracle> oracle;
    if (!oracle_path.empty()) oracle = load_relevance_file(oracle_path);

    const auto report = bench_sweep(kg, queries, cached, configs, oracle ? &*oracle : nullptr);

    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    out << bench_report_csv(report, timings);
    if (!json_out.empty()) {
        std::ofstream jf(json_out, std::ios::binary);
        if (!jf) throw Error("cannot write output file: " + json_out);
        jf << bench_report_to_json(report, timings).dump(2) << "\n";
    }
    if (!long_out.empty()) {
        std::ofstream lf(long_out, std::ios::binary);
        if (!lf) throw Error("cannot write output file: " + long_out);
        lf << bench_report_long_csv(report);
    }

    json config_snapshot = {{"base", config_to_json(base)}, {"configs", json::array()}};
    for (const auto& c : configs) config_snapshot["configs"].push_back(config_to_json(c));
    emit_manifest(out_path, manifest_path, "bench", flags.seed, std::move(config_snapshot),
                  {flags.triples_path, queries_path, sweep_path, oracle_path});
    return 0;
}

int cmd_eval(const std::string& queries_path, const std::string& predictions_path,
             const std::string& out_path, const std::string& json_out,
             const std::string& manifest_path, uint64_t seed) {
    const auto queries = load_queries_file(queries_path);
    const auto predictions = load_predictions_file(predictions_path);
    const auto report = evaluate(predictions, queries);

    std::cout << "exact match: " << report.overall << " (" << report.matched << "/" << report.total
              << "), macro average: " << report.macro_average << "\n";
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw Error("cannot write output file: " + out_path);
        f << eval_report_csv(report);
    }
    if (!json_out.empty()) {
        std::ofstream f(json_out, std::ios::binary);
        if (!f) throw Error("cannot write output file: " + json_out);
        f << eval_report_to_json(report).dump(2) << "\n";
    }
    emit_manifest(out_path, manifest_path, "eval", seed, json::object(),
                  {queries_path, predictions_path});
    return 0;
}

int cmd_prompt(PipelineFlags& flags, bool have_triples, const std::string& queries_path,
               const std::string& template_name, const std::string& bundles_path,
               const std::string& sep_token, const std::string& format, bool assemble,
               const std::string& out_path, const std::string& manifest_path) {
    const RetrievalConfig config = resolve_config(flags);
    const auto queries = sorted_by_id(load_queries_file(queries_path));
    const PromptTemplate tmpl = builtin_template(std::string_view(template_name));

    // Context per query id, from live retrieval or a prior retrieve run.
    std::optional<KnowledgeGraph> kg;
    std::unique_ptr<EmbeddingProvider> provider;
    std::optional<CachingProvider> cached;
    std::map<std::string, std::string> bundle_contexts;
    if (have_triples) {
        kg = KnowledgeGraph::ingest_file(flags.triples_path, parse_triple_format(flags.format));
        provider = make_provider(flags.provider);
        cached.emplace(*provider);
    } else if (!bundles_path.empty()) {
        std::ifstream in(bundles_path, std::ios::binary);
        if (!in) throw Error("cannot open bundles file: " + bundles_path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            json obj;
            try {
                obj = json::parse(line);
            } catch (const json::exception& e) {
                throw Error("bundles line " + std::to_string(line_no) + ": " + e.what());
            }
            if (obj.contains("error")) continue; // failed query from a partial retrieve run
            std::vector<Triple> triples;
            try {
                for (const auto& st : obj.at("selected"))
                    triples.push_back(make_triple(st.at("head").get<std::string>(),
                                                  st.at("relation").get<std::string>(),
                                                  st.at("tail").get<std::string>()));
                bundle_contexts[obj.at("id").get<std::string>()] =
                    serialize_context(triples, sep_token);
            } catch (const json::exception& e) {
                throw Error("bundles line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    }

    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    for (const auto& query : queries) {
        std::optional<std::string> context;
        if (kg) {
            context = serialize_context(retrieve(*kg, query, config, *cached), sep_token);
        } else if (!bundles_path.empty()) {
            auto it = bundle_contexts.find(query.id);
            context = it == bundle_contexts.end() ? std::string() : it->second;
        }
        if (assemble) {
            const auto input = assemble_input("img:" + query.id, query, context.value_or(""),
                                              sep_token);
            out << assembled_to_json(query.id, input).dump() << "\n";
        } else {
            const std::string prompt = render_prompt(tmpl, query, context);
            if (format == "text") {
                out << prompt;
            } else {
                out << json{{"id", query.id}, {"prompt", prompt}}.dump() << "\n";
            }
        }
    }

    json config_snapshot = config_to_json(config);
    config_snapshot["template"] = template_name;
    config_snapshot["sep_token"] = sep_token;
    emit_manifest(out_path, manifest_path, "prompt", flags.seed, std::move(config_snapshot),
                  {have_triples ? flags.triples_path : std::string(), queries_path, bundles_path});
    return 0;
}

int cmd_train_align(const std::string& data_path, int steps, double lr, double tau,
                    const std::string& init, uint64_t seed, double scale, size_t dim_out_flag,
                    const std::string& head_out, const std::string& trace_out,
                    const std::string& manifest_path) {
    const auto dataset = load_batches_file(data_path, tau);
    if (dataset.empty()) throw Error("training dataset is empty");

    const size_t dim_in = dataset.front().positive.size();
    const size_t dim_out = dim_out_flag ? dim_out_flag : dataset.front().anchor.size();
    ProjectionHead head;
    if (init == "identity") {
        if (dim_in != dim_out)
            throw Error("identity init needs dim_in == dim_out (got " + std::to_string(dim_in) +
                        " and " + std::to_string(dim_out) + "); use --init random");
        head = identity_head(dim_in);
    } else {
        head = random_head(dim_in, dim_out, seed, scale);
    }

    const auto result = train_head(dataset, steps, lr, std::move(head));
    std::cout << "steps: " << steps << ", initial loss: " << result.loss_trace.front()
              << ", final loss: " << result.loss_trace.back() << "\n";

    if (!head_out.empty()) {
        std::ofstream f(head_out, std::ios::binary);
        if (!f) throw Error("cannot write output file: " + head_out);
        f << head_to_json(result.head).dump(2) << "\n";
    }
    if (!trace_out.empty()) {
        std::ofstream f(trace_out, std::ios::binary);
        if (!f) throw Error("cannot write output file: " + trace_out);
        f << "step,loss\n";
        for (size_t i = 0; i < result.loss_trace.size(); ++i)
            f << i << "," << result.loss_trace[i] << "\n";
    }

    const json config = {{"steps", steps},      {"learning_rate", lr}, {"tau", tau},
                         {"init", init},        {"scale", scale},      {"dim_in", dim_in},
                         {"dim_out", dim_out}};
    emit_manifest(head_out.empty() ? trace_out : head_out, manifest_path, "train-align", seed,
                  config, {data_path});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kgctx: knowledge-graph context retrieval for question answering"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    PipelineFlags flags;
    std::string queries_path, out_path, manifest_path;
    unsigned jobs = 1;

    auto* ingest = app.add_subcommand("ingest", "load and index a triples file, print stats");
    add_pipeline_flags(ingest, flags);
    ingest->add_option("--manifest", manifest_path, "manifest output path");

    auto* retrieve_cmd =
        app.add_subcommand("retrieve", "retrieve context triples per query (JSONL out)");
    add_pipeline_flags(retrieve_cmd, flags);
    retrieve_cmd->add_option("--queries", queries_path, "queries JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--out", out_path, "output JSONL path (default stdout)");
    retrieve_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1u, 256u));
    retrieve_cmd->add_option("--manifest", manifest_path, "manifest output path");

    std::string sweep_path, oracle_path, json_out, long_out;
    bool timings = false;
    auto* bench = app.add_subcommand("bench", "sweep configs and report retrieval metrics (CSV)");
    add_pipeline_flags(bench, flags);
    bench->add_option("--queries", queries_path, "queries JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    bench->add_option("--sweep", sweep_path, "JSON array of retrieval configs")
        ->check(CLI::ExistingFile);
    bench->add_option("--oracle", oracle_path, "planted-relevance JSONL for precision/recall")
        ->check(CLI::ExistingFile);
    bench->add_option("--out", out_path, "CSV output path (default stdout)");
    bench->add_option("--json-out", json_out, "JSON report path");
    bench->add_option("--long-out", long_out, "plot-ready long-format CSV path");
    bench->add_flag("--timings", timings, "include wall-clock columns (non-reproducible)");
    bench->add_option("--manifest", manifest_path, "manifest output path");

    std::string predictions_path;
    auto* eval_cmd = app.add_subcommand("eval", "exact-match scoring of predictions");
    eval_cmd->add_option("--queries", queries_path, "queries JSONL with gold answers")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--predictions", predictions_path, "predictions JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", out_path, "CSV report path");
    eval_cmd->add_option("--json-out", json_out, "JSON report path");
    eval_cmd->add_option("--manifest", manifest_path, "manifest output path");
    uint64_t eval_seed = 0;
    eval_cmd->add_option("--seed", eval_seed, "seed recorded in the manifest");

    std::string template_name = "zero-shot-knowledge", bundles_path, prompt_format = "jsonl",
                sep_token = kDefaultSepToken;
    bool assemble = false;
    auto* prompt = app.add_subcommand("prompt", "render LLM prompts or assembled model inputs");
    prompt->add_option("--queries", queries_path, "queries JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    prompt->add_option("--template", template_name,
                       "zero-shot-plain | zero-shot-knowledge | spatial-normalized");
    prompt->add_option("--triples", flags.triples_path, "knowledge base for live retrieval")
        ->check(CLI::ExistingFile);
    prompt->add_option("--format", flags.format, "triples format: tsv or jsonl")
        ->check(CLI::IsMember({"tsv", "jsonl"}));
    prompt->add_option("--provider", flags.provider, "embedding provider descriptor");
    prompt->add_option("--lambda", flags.config.lambda, "dynamic similarity threshold");
    prompt->add_option("--hops", flags.config.hops, "multi-hop expansion depth");
    prompt->add_option("--mode", flags.mode, "dynamic or fixed")
        ->check(CLI::IsMember({"dynamic", "fixed"}));
    prompt->add_option("--top-k", flags.config.top_k, "triples to keep in fixed mode");
    prompt->add_option("--mask-token", flags.config.mask_token, "entity mask token");
    prompt->add_option("--config", flags.config_path, "JSON config file; explicit flags win")
        ->check(CLI::ExistingFile);
    prompt->add_option("--seed", flags.seed, "seed recorded in the manifest");
    prompt->add_option("--bundles", bundles_path, "context from a prior retrieve run (JSONL)")
        ->check(CLI::ExistingFile);
    prompt->add_option("--sep", sep_token, "separator token");
    prompt->add_option("--out-format", prompt_format, "jsonl or text")
        ->check(CLI::IsMember({"jsonl", "text"}));
    prompt->add_flag("--assemble", assemble, "emit image<SEP>question<SEP>entities<SEP>context");
    prompt->add_option("--out", out_path, "output path (default stdout)");
    prompt->add_option("--manifest", manifest_path, "manifest output path");

    std::string data_path, init = "identity", head_out, trace_out;
    int steps = 100;
    double lr = 0.1, tau = 0.0, scale = 0.1;
    uint64_t train_seed = 1;
    size_t dim_out_flag = 0;
    auto* train = app.add_subcommand("train-align", "fit the triple-side projection head");
    train->add_option("--data", data_path, "contrastive batches JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--steps", steps, "gradient steps")->check(CLI::Range(0, 1 << 24));
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--tau", tau, "temperature (logits scale by e^tau)");
    train->add_option("--init", init, "identity or random")
        ->check(CLI::IsMember({"identity", "random"}));
    train->add_option("--seed", train_seed, "seed for random init");
    train->add_option("--scale", scale, "random init range");
    train->add_option("--dim-out", dim_out_flag, "projection output dim (default anchor dim)");
    train->add_option("--head-out", head_out, "trained head JSON path");
    train->add_option("--trace-out", trace_out, "loss trace CSV path");
    train->add_option("--manifest", manifest_path, "manifest output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (ingest->parsed()) {
            apply_config_file(*ingest, flags);
            return cmd_ingest(flags, manifest_path);
        }
        if (retrieve_cmd->parsed()) {
            apply_config_file(*retrieve_cmd, flags);
            return cmd_retrieve(flags, queries_path, out_path, manifest_path, jobs);
        }
        if (bench->parsed()) {
            apply_config_file(*bench, flags);
            return cmd_bench(flags, queries_path, sweep_path, oracle_path, out_path, json_out,
                             long_out, timings, manifest_path);
        }
        if (eval_cmd->parsed())
            return cmd_eval(queries_path, predictions_path, out_path, json_out, manifest_path,
                            eval_seed);
        if (prompt->parsed()) {
            apply_config_file(*prompt, flags);
            return cmd_prompt(flags, prompt->count("--triples") > 0, queries_path, template_name,
                              bundles_path, sep_token, prompt_format, assemble, out_path,
                              manifest_path);
        }
        if (train->parsed())
            return cmd_train_align(data_path, steps, lr, tau, init, train_seed, scale,
                                   dim_out_flag, head_out, trace_out, manifest_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
