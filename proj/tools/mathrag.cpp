// Command-line surface: ingest | index | run | eval | report. Each
// subcommand wraps one library entry point and maps error categories to
// distinct exit codes so shell pipelines can tell a bad config from a
// dead backend.

#include "mathrag/config.hpp"
#include "mathrag/document.hpp"
#include "mathrag/errors.hpp"
#include "mathrag/evaluation.hpp"
#include "mathrag/injection.hpp"
#include "mathrag/orchestrator.hpp"
#include "mathrag/retrieval.hpp"
#include "mathrag/templates.hpp"
#include "mathrag/trace.hpp"
#include "mathrag/util.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mathrag;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitBackend = 4;
constexpr int kExitValidation = 5;

int classify(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const MalformedRecord*>(&e)) return kExitIo;
    if (dynamic_cast<const BackendUnreachable*>(&e) || dynamic_cast<const BackendProtocol*>(&e) ||
        dynamic_cast<const ScriptExhausted*>(&e) || dynamic_cast<const SummarizerFailed*>(&e) ||
        dynamic_cast<const PipelineError*>(&e)) {
        return kExitBackend;
    }
    return kExitValidation;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ReportFormat parse_format(const std::string& name) {
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw ConfigError("unknown report format '" + name + "' (expected markdown, csv, or json)");
}

const char* format_extension(ReportFormat format) {
    switch (format) {
    case ReportFormat::Markdown: return "md";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
    }
    return "txt";
}

// "gsm8k" / "math" when the problem set is uniform, "mixed" otherwise.
std::string dataset_label(std::span<const Problem> problems) {
    const Dataset first = problems.front().dataset;
    for (const Problem& p : problems) {
        if (p.dataset != first) return "mixed";
    }
    return to_string(first);
}

std::vector<Document> prepare_chunks(const RunConfig& cfg) {
    const std::vector<Document> docs = load_documents(cfg.corpus);
    if (docs.empty()) throw EmptyCorpus("corpus '" + cfg.corpus + "' contains no documents");
    return dedupe_chunks(chunk_corpus(docs, cfg.chunking));
}

// Loads the prebuilt index when the config names an existing file,
// otherwise builds one in memory. A loaded index must agree with the
// current corpus; a stale file is an easy way to pair queries against
// vectors that no longer exist.
HnswIndex obtain_index(const RunConfig& cfg, std::span<const Document> chunks, Embedder& embedder) {
    if (!cfg.index.empty() && fs::exists(cfg.index)) {
        HnswIndex index = HnswIndex::load(cfg.index);
        if (index.params().dim != cfg.retrieval.dim) {
            throw DimensionMismatch("index '" + cfg.index + "' has dim " +
                                    std::to_string(index.params().dim) + " but the config expects " +
                                    std::to_string(cfg.retrieval.dim));
        }
        if (index.size() != chunks.size()) {
            throw ValidationError("index '" + cfg.index + "' holds " + std::to_string(index.size()) +
                                  " vectors but the corpus chunks to " + std::to_string(chunks.size()) +
                                  "; rebuild it with the index subcommand");
        }
        return index;
    }
    return build_dense_index(chunks, embedder, cfg.retrieval);
}

json template_checksums(const TemplateStore& store) {
    json out = json::object();
    for (const std::string& id : store.ids()) out[id] = store.checksum(id);
    return out;
}

json read_manifest(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

// The manifest's recorded hash must match the config sitting next to it,
// otherwise the directory was edited after the run and pairing its
// results with another run would compare unknown quantities.
void verify_manifest(const fs::path& dir, const RunConfig& cfg) {
    const fs::path path = dir / "manifest.json";
    const json manifest = read_manifest(path);
    if (manifest.value("config_hash", "") != config_hash(cfg)) {
        throw ValidationError("manifest '" + path.string() +
                              "' does not match config.json; the run directory was modified after the run");
    }
}

int cmd_ingest(const std::string& in, const std::string& out, const ChunkingConfig& chunking) {
    if (chunking.max_chunk_chars <= 0) throw ConfigError("--max-chunk-chars must be positive");
    if (chunking.overlap_chars < 0 || chunking.overlap_chars >= chunking.max_chunk_chars) {
        throw ConfigError("--overlap-chars must be in [0, --max-chunk-chars)");
    }

    const std::vector<Document> docs = load_documents(in);
    if (docs.empty()) {
        std::cerr << "warning: '" << in << "' contains no documents; writing an empty corpus\n";
    }
    const std::vector<Document> chunks = dedupe_chunks(chunk_corpus(docs, chunking));
    save_documents(out, chunks);
    std::cout << "ingest: " << docs.size() << " documents -> " << chunks.size() << " chunks -> " << out
              << "\n";
    return 0;
}

int cmd_index(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    if (cfg.corpus.empty()) throw ConfigError("index: the config names no corpus file");
    if (cfg.index.empty()) throw ConfigError("index: the config names no index file to write");

    const std::vector<Document> chunks = prepare_chunks(cfg);
    const std::shared_ptr<Embedder> embedder = make_embedder(cfg.embedding, cfg.retrieval.dim);
    if (embedder->dim() != cfg.retrieval.dim) {
        throw DimensionMismatch("embedder produces dim " + std::to_string(embedder->dim()) +
                                " but the config expects " + std::to_string(cfg.retrieval.dim));
    }
    const HnswIndex index = build_dense_index(chunks, *embedder, cfg.retrieval);
    if (const fs::path parent = fs::path(cfg.index).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
    }
    index.save(cfg.index);
    std::cout << "index: " << index.size() << " vectors (dim " << cfg.retrieval.dim << ") -> "
              << cfg.index << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& templates_dir) {
    const RunConfig cfg = load_run_config(config_path);
    const TemplateStore store{fs::path(templates_dir)};
    const std::vector<Problem> problems = load_problems(cfg.problems);

    const fs::path run_dir = cfg.run_dir;
    fs::create_directories(run_dir);

    // Resuming into a directory started under a different config would
    // stitch two experiments into one results file.
    const std::string resolved = resolved_config_json(cfg);
    const fs::path config_copy = run_dir / "config.json";
    if (fs::exists(config_copy) && read_file(config_copy) != resolved) {
        throw ConfigError("run directory '" + run_dir.string() +
                          "' was started with a different config; use a fresh directory");
    }
    write_file(config_copy, resolved);

    const fs::path manifest_path = run_dir / "manifest.json";
    json manifest{
        {"config", "config.json"},
        {"config_hash", config_hash(cfg)},
        {"results", "results.jsonl"},
        {"templates", template_checksums(store)},
    };
    if (fs::exists(manifest_path)) {
        const json previous = read_manifest(manifest_path);
        if (previous.contains("created_utc")) manifest["created_utc"] = previous["created_utc"];
    }
    if (!manifest.contains("created_utc")) manifest["created_utc"] = utc_now();
    write_file(manifest_path, manifest.dump(2) + "\n");

    const std::unique_ptr<GenerationBackend> backend = make_generation_backend(cfg.generation_backend);

    std::shared_ptr<TwoStagePipeline> retriever;
    std::optional<KnowledgeInjector> injector;
    if (cfg.strategy.strategy != Strategy::Cot) {
        std::vector<Document> chunks = prepare_chunks(cfg);
        const std::shared_ptr<Embedder> embedder = make_embedder(cfg.embedding, cfg.retrieval.dim);
        HnswIndex index = obtain_index(cfg, chunks, *embedder);
        retriever = std::make_shared<TwoStagePipeline>(std::move(chunks), std::move(index), embedder,
                                                       make_reranker(cfg.reranker), cfg.retrieval);
        injector.emplace(store);
    }

    const StrategyConfig& strat = cfg.strategy;
    TraceRunner runner;
    switch (strat.strategy) {
    case Strategy::Cot:
        runner = [&](const Problem& p) { return run_cot(p, *backend, store, strat); };
        break;
    case Strategy::StaticRag:
        runner = [&](const Problem& p) {
            return run_static(p, *backend, *retriever, *injector, store, strat);
        };
        break;
    case Strategy::AdaptiveRag:
        runner = [&](const Problem& p) {
            return run_adaptive(p, *backend, *retriever, *injector, store, strat);
        };
        break;
    }

    SuiteOptions options;
    options.results_path = run_dir / "results.jsonl";
    options.parallelism = cfg.parallelism;
    options.progress = &std::cerr;
    const SuiteResult result = run_suite(problems, runner, options);

    manifest["finished_utc"] = utc_now();
    manifest["suite"] =
        json{{"executed", result.executed}, {"skipped", result.skipped}, {"errored", result.errored}};
    write_file(manifest_path, manifest.dump(2) + "\n");

    std::cout << "run: " << result.executed << " executed, " << result.skipped << " skipped, "
              << result.errored << " errored -> " << options.results_path.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& format_name,
             const std::string& results_override) {
    const RunConfig cfg = load_run_config(config_path);
    const ReportFormat format = parse_format(format_name);
    const std::vector<Problem> problems = load_problems(cfg.problems);

    const fs::path run_dir = cfg.run_dir;
    const fs::path results =
        results_override.empty() ? run_dir / "results.jsonl" : fs::path(results_override);
    const std::vector<Trace> traces = load_traces(results.string());
    if (traces.empty()) {
        throw EmptyInput("no traces in '" + results.string() + "'; run the suite first");
    }

    const std::vector<Outcome> outcomes = grade_all(traces, problems);

    Report report;
    report.dataset = dataset_label(problems);
    report.strategies.emplace_back(to_string(cfg.strategy.strategy), aggregate(outcomes));

    const std::string text = render_report(report, format);
    const fs::path out = run_dir / (std::string("report.") + format_extension(format));
    write_file(out, text);
    std::cout << text;
    return 0;
}

int cmd_report(const std::string& baseline_dir, const std::string& adaptive_dir,
               const std::string& format_name, const std::string& out_override) {
    const ReportFormat format = parse_format(format_name);
    const RunConfig base_cfg = load_run_config(fs::path(baseline_dir) / "config.json");
    const RunConfig adap_cfg = load_run_config(fs::path(adaptive_dir) / "config.json");
    if (base_cfg.problems != adap_cfg.problems) {
        throw ValidationError("runs cover different problem files ('" + base_cfg.problems + "' vs '" +
                              adap_cfg.problems + "'); a contingency pairing needs one shared set");
    }
    verify_manifest(baseline_dir, base_cfg);
    verify_manifest(adaptive_dir, adap_cfg);

    const std::vector<Problem> problems = load_problems(base_cfg.problems);
    const std::vector<Outcome> base_outcomes =
        grade_all(load_traces((fs::path(baseline_dir) / "results.jsonl").string()), problems);
    const std::vector<Outcome> adap_outcomes =
        grade_all(load_traces((fs::path(adaptive_dir) / "results.jsonl").string()), problems);

    const std::string base_label = to_string(base_cfg.strategy.strategy);
    const std::string adap_label = to_string(adap_cfg.strategy.strategy);

    Report report;
    report.dataset = dataset_label(problems);
    report.strategies.emplace_back(base_label, aggregate(base_outcomes));
    report.strategies.emplace_back(adap_label, aggregate(adap_outcomes));
    report.contingency.emplace(base_label, adap_label, contingency(base_outcomes, adap_outcomes));

    const std::string text = render_report(report, format);
    const fs::path out = out_override.empty()
                             ? fs::path(adaptive_dir) / (std::string("comparison.") + format_extension(format))
                             : fs::path(out_override);
    write_file(out, text);
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval-augmented math reasoning harness"};
    app.require_subcommand(1);

    std::string ingest_in;
    std::string ingest_out;
    ChunkingConfig ingest_chunking;
    CLI::App* ingest = app.add_subcommand("ingest", "chunk and dedupe a document corpus");
    ingest->add_option("--in", ingest_in, "input corpus (jsonl)")->required();
    ingest->add_option("--out", ingest_out, "output chunked corpus (jsonl)")->required();
    ingest->add_option("--max-chunk-chars", ingest_chunking.max_chunk_chars,
                       "chunk size ceiling in bytes");
    ingest->add_option("--overlap-chars", ingest_chunking.overlap_chars,
                       "overlap between adjacent chunks in bytes");

    std::string index_config;
    CLI::App* index = app.add_subcommand("index", "embed a corpus and write the dense index");
    index->add_option("--config", index_config, "run config (json)")->required();

    std::string run_config;
    std::string run_templates = "templates";
    CLI::App* run = app.add_subcommand("run", "execute a strategy over a problem set");
    run->add_option("--config", run_config, "run config (json)")->required();
    run->add_option("--templates", run_templates, "prompt template directory");

    std::string eval_config;
    std::string eval_format = "markdown";
    std::string eval_results;
    CLI::App* eval = app.add_subcommand("eval", "grade a results file and render its report");
    eval->add_option("--config", eval_config, "run config (json)")->required();
    eval->add_option("--format", eval_format, "markdown, csv, or json");
    eval->add_option("--results", eval_results, "results file (default <run_dir>/results.jsonl)");

    std::string report_baseline;
    std::string report_adaptive;
    std::string report_format = "markdown";
    std::string report_out;
    CLI::App* report = app.add_subcommand("report", "contingency comparison between two finished runs");
    report->add_option("--baseline", report_baseline, "baseline run directory")->required();
    report->add_option("--adaptive", report_adaptive, "comparison run directory")->required();
    report->add_option("--format", report_format, "markdown, csv, or json");
    report->add_option("--out", report_out, "output path (default <adaptive>/comparison.<ext>)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*ingest) return cmd_ingest(ingest_in, ingest_out, ingest_chunking);
        if (*index) return cmd_index(index_config);
        if (*run) return cmd_run(run_config, run_templates);
        if (*eval) return cmd_eval(eval_config, eval_format, eval_results);
        if (*report) return cmd_report(report_baseline, report_adaptive, report_format, report_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
