// Command-line surface: compress / reconstruct / analyze / simulate.
//
// Exit codes: 0 success, 1 malformed data (files, values), 2 invalid
// configuration (flags, schedules), 3 numeric failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svdq/svdq.hpp"

namespace {

using nlohmann::ordered_json;

std::vector<std::uint8_t> to_bytes(const std::string & text) {
    return std::vector<std::uint8_t>(text.begin(), text.end());
}

ordered_json schedule_json(const svdq::BitSchedule & schedule) {
    ordered_json arr = ordered_json::array();
    for (int b : schedule.group_bits) {
        arr.push_back(b);
    }
    return arr;
}

struct CompressArgs {
    std::string input;
    std::string schedule;
    int groups = 8;
    std::string output;
};

void run_compress(const CompressArgs & args) {
    const svdq::Matrix keys = svdq::read_kmat(args.input);
    const svdq::BitSchedule schedule =
        svdq::parse_schedule(args.schedule, keys.cols(), args.groups);
    const svdq::CompressedKeyCache cache = svdq::compress(keys, schedule);
    const std::vector<std::uint8_t> bytes = svdq::encode_svdq(cache);
    svdq::write_file_atomic(args.output, bytes);

    const double bbar = svdq::equivalent_bits(schedule);
    // truncation-only schedules store no codes at all; report an infinite ratio
    const double cr = bbar > 0.0 ? svdq::compression_ratio(bbar)
                                 : std::numeric_limits<double>::infinity();
    const std::size_t payload = cache.q.payload.size();
    std::printf("compress: rows=%lld cols=%lld bbar=%.6g cr=%.6g payload_bytes=%zu "
                "side_bytes=%zu output=%s\n",
                static_cast<long long>(keys.rows()), static_cast<long long>(keys.cols()), bbar,
                cr, payload, bytes.size() - payload, args.output.c_str());
}

struct ReconstructArgs {
    std::string input;
    std::string output;
};

void run_reconstruct(const ReconstructArgs & args) {
    const svdq::CompressedKeyCache cache = svdq::read_svdq(args.input);
    const svdq::Matrix keys = svdq::decompress(cache);
    svdq::write_kmat(args.output, keys);
    std::printf("reconstruct: rows=%lld cols=%lld output=%s\n",
                static_cast<long long>(keys.rows()), static_cast<long long>(keys.cols()),
                args.output.c_str());
}

struct AnalyzeArgs {
    std::string input;
    int bits = 4;
    std::string schedule;  // optional
    int groups = 8;
    std::string report;
};

void run_analyze(const AnalyzeArgs & args) {
    if (!svdq::valid_code_width(args.bits)) {
        throw svdq::ConfigError("analyze: --bits must be one of 1,2,3,4,8");
    }
    const svdq::Matrix keys = svdq::read_kmat(args.input);
    const auto [mean, centered] = svdq::center(keys);
    const svdq::CenteredSvd decomp = svdq::svd(centered, mean);
    const double frob_sq = decomp.singulars.squaredNorm();

    const svdq::DecayModel fit = svdq::fit_decay(decomp.singulars);
    const double direct_mse =
        svdq::direct_quant_mse(frob_sq, keys.rows(), keys.cols(), args.bits);
    const svdq::ErrorEstimate estimate =
        svdq::svdq_error_ratio(args.bits, fit.rate, keys.cols());
    const svdq::BitSchedule advised =
        svdq::advise_schedule(decomp.singulars, static_cast<double>(args.bits), args.groups);

    ordered_json report;
    report["input"] = {{"path", args.input},
                       {"rows", keys.rows()},
                       {"cols", keys.cols()}};
    report["spectrum"] = std::vector<double>(decomp.singulars.data(),
                                             decomp.singulars.data() + decomp.singulars.size());
    report["fit"] = {{"scale", fit.scale},
                     {"rate", fit.rate},
                     {"log_residual", fit.log_residual}};
    report["bits"] = args.bits;
    report["direct_mse"] = direct_mse;
    report["estimate"] = {{"alpha", estimate.alpha},
                          {"mse_ratio", estimate.svdq_mse / estimate.direct_mse},
                          {"rms_ratio", estimate.rms_ratio},
                          {"steep_spectrum", estimate.steep_spectrum}};
    report["advised_schedule"] = schedule_json(advised);
    if (!estimate.steep_spectrum) {
        report["note"] = "spectrum decay is too flat for the latent schedule to beat "
                         "direct per-channel quantization at this width";
    }

    if (!args.schedule.empty()) {
        const svdq::BitSchedule schedule =
            svdq::parse_schedule(args.schedule, keys.cols(), args.groups);
        const svdq::CompressedKeyCache cache = svdq::compress(keys, schedule);
        const svdq::Matrix latent_hat = svdq::decompress(cache);
        const svdq::ErrorMeasure svdq_measure = svdq::measure_mse(keys, latent_hat);
        const svdq::Matrix direct_hat = svdq::direct_quant_roundtrip(keys, args.bits);
        const svdq::ErrorMeasure direct_measure = svdq::measure_mse(keys, direct_hat);
        report["measured"] = {
            {"schedule", schedule_json(schedule)},
            {"equivalent_bits", svdq::equivalent_bits(schedule)},
            {"svdq", {{"mse", svdq_measure.mse}, {"rel_frob", svdq_measure.rel_frob}}},
            {"direct",
             {{"bits", args.bits},
              {"mse", direct_measure.mse},
              {"rel_frob", direct_measure.rel_frob}}},
            {"mse_ratio",
             direct_measure.mse > 0.0 ? svdq_measure.mse / direct_measure.mse : 0.0}};
    }

    svdq::write_file_atomic(args.report, to_bytes(report.dump(2) + "\n"));
    std::printf("analyze: rate=%.6g alpha=%.6g rms_ratio=%.6g steep=%d report=%s\n", fit.rate,
                estimate.alpha, estimate.rms_ratio, estimate.steep_spectrum ? 1 : 0,
                args.report.c_str());
}

struct SimulateArgs {
    long long seq = 8192;
    long long dim = 256;
    double rho = 0.1;
    std::uint64_t seed = 1;
    std::string preset;
    std::string schedule = "8,4,4,2,0,0,0,0";
    int groups = 8;
    long long queries = 16;
    std::optional<long long> sparsity_topk;
    long long chunk = 8;
    double tau = 0.7;
    std::optional<int> v_bits;
    std::string report;
    std::string format = "json";
};

void run_simulate(const SimulateArgs & args) {
    svdq::SynthSpec spec;
    spec.rows = static_cast<svdq::Index>(args.seq);
    spec.dim = static_cast<svdq::Index>(args.dim);
    spec.decay_rate = args.rho;
    spec.seed = args.seed;
    spec.preset = args.preset;
    spec = svdq::resolve_preset(spec);
    svdq::validate_spec(spec);

    const svdq::BitSchedule schedule =
        svdq::parse_schedule(args.schedule, spec.dim, args.groups);

    svdq::EvalOptions options;
    options.queries = static_cast<svdq::Index>(args.queries);
    options.chunk_size = static_cast<svdq::Index>(args.chunk);
    options.tau = args.tau;
    if (args.sparsity_topk) {
        options.sparsity_topk = static_cast<svdq::Index>(*args.sparsity_topk);
    }
    if (args.v_bits) {
        options.value_bits = *args.v_bits;
    }

    const std::vector<svdq::EvalRecord> records = svdq::run_eval(spec, schedule, options);

    std::printf("%-20s %8s %10s %12s %12s %10s %9s\n", "method", "bits", "cr", "rel_frob",
                "attn_err", "cosine", "ms");
    for (const auto & rec : records) {
        std::printf("%-20s %8.4g %10.6g %12.5g %12.5g %10.7g %9.1f\n", rec.method.c_str(),
                    rec.bits, rec.ratio, rec.rel_frob, rec.attn_err, rec.cosine, rec.wall_ms);
    }

    std::string payload;
    if (args.format == "json") {
        ordered_json config;
        config["rows"] = spec.rows;
        config["dim"] = spec.dim;
        config["decay_rate"] = spec.decay_rate;
        config["seed"] = spec.seed;
        if (!spec.preset.empty()) {
            config["preset"] = spec.preset;
        }
        config["schedule"] = schedule_json(schedule);
        config["equivalent_bits"] = svdq::equivalent_bits(schedule);
        config["queries"] = args.queries;
        config["chunk_size"] = args.chunk;
        config["tau"] = args.tau;
        config["sparsity_topk"] =
            args.sparsity_topk ? ordered_json(*args.sparsity_topk) : ordered_json(nullptr);
        config["value_bits"] = args.v_bits ? ordered_json(*args.v_bits) : ordered_json(nullptr);

        ordered_json rows = ordered_json::array();
        for (const auto & rec : records) {
            // wall time is left out: reports must be byte-stable across runs
            rows.push_back({{"method", rec.method},
                            {"bits", rec.bits},
                            {"compression_ratio", rec.ratio},
                            {"rel_frob", rec.rel_frob},
                            {"attn_max_abs_err", rec.attn_err},
                            {"output_cosine", rec.cosine}});
        }
        ordered_json report;
        report["config"] = config;
        report["records"] = rows;
        payload = report.dump(2) + "\n";
    } else {
        payload = "method,bits,compression_ratio,rel_frob,attn_max_abs_err,output_cosine\n";
        char line[512];
        for (const auto & rec : records) {
            std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          rec.method.c_str(), rec.bits, rec.ratio, rec.rel_frob, rec.attn_err,
                          rec.cosine);
            payload += line;
        }
    }
    svdq::write_file_atomic(args.report, to_bytes(payload));
    std::printf("simulate: records=%zu report=%s format=%s\n", records.size(),
                args.report.c_str(), args.format.c_str());
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"mixed-precision key-cache compression in an SVD latent basis"};
    app.require_subcommand(1);

    CompressArgs compress_args;
    auto * compress_cmd =
        app.add_subcommand("compress", "compress a kmat key cache into an svdq file");
    compress_cmd->add_option("--input", compress_args.input, "input kmat path")->required();
    compress_cmd
        ->add_option("--schedule", compress_args.schedule,
                     "comma-separated group widths, e.g. 8,4,4,2,0,0,0,0")
        ->required();
    compress_cmd->add_option("--groups", compress_args.groups, "latent channel group count")
        ->capture_default_str();
    compress_cmd->add_option("--output", compress_args.output, "output svdq path")->required();
    compress_cmd->callback([&] { run_compress(compress_args); });

    ReconstructArgs reconstruct_args;
    auto * reconstruct_cmd =
        app.add_subcommand("reconstruct", "reconstruct a kmat key cache from an svdq file");
    reconstruct_cmd->add_option("--input", reconstruct_args.input, "input svdq path")->required();
    reconstruct_cmd->add_option("--output", reconstruct_args.output, "output kmat path")
        ->required();
    reconstruct_cmd->callback([&] { run_reconstruct(reconstruct_args); });

    AnalyzeArgs analyze_args;
    auto * analyze_cmd =
        app.add_subcommand("analyze", "fit the spectrum decay and report error estimates");
    analyze_cmd->add_option("--input", analyze_args.input, "input kmat path")->required();
    analyze_cmd->add_option("--bits", analyze_args.bits, "reference uniform width")->required();
    analyze_cmd->add_option("--schedule", analyze_args.schedule,
                            "optional schedule to measure against the estimate");
    analyze_cmd->add_option("--groups", analyze_args.groups, "latent channel group count")
        ->capture_default_str();
    analyze_cmd->add_option("--report", analyze_args.report, "output report path (json)")
        ->required();
    analyze_cmd->callback([&] { run_analyze(analyze_args); });

    SimulateArgs simulate_args;
    auto * simulate_cmd =
        app.add_subcommand("simulate", "run the synthetic end-to-end comparison");
    simulate_cmd->add_option("--seq", simulate_args.seq, "token count")->capture_default_str();
    simulate_cmd->add_option("--dim", simulate_args.dim, "channel count")->capture_default_str();
    simulate_cmd->add_option("--rho", simulate_args.rho, "spectrum decay rate")
        ->capture_default_str();
    simulate_cmd->add_option("--seed", simulate_args.seed, "generator seed")
        ->capture_default_str();
    simulate_cmd->add_option("--preset", simulate_args.preset,
                             "named cache geometry (overrides --dim)");
    simulate_cmd->add_option("--schedule", simulate_args.schedule, "group widths")
        ->capture_default_str();
    simulate_cmd->add_option("--groups", simulate_args.groups, "latent channel group count")
        ->capture_default_str();
    simulate_cmd->add_option("--queries", simulate_args.queries, "query rows per evaluation")
        ->capture_default_str();
    simulate_cmd->add_option("--sparsity-topk", simulate_args.sparsity_topk,
                             "retain this many chunks per query");
    simulate_cmd->add_option("--chunk", simulate_args.chunk, "sparsity chunk size")
        ->capture_default_str();
    simulate_cmd->add_option("--tau", simulate_args.tau, "outlier cosine threshold")
        ->capture_default_str();
    simulate_cmd->add_option("--v-bits", simulate_args.v_bits,
                             "also quantize values per token at this width");
    simulate_cmd->add_option("--report", simulate_args.report, "output report path")->required();
    simulate_cmd->add_option("--format", simulate_args.format, "report format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    simulate_cmd->callback([&] { run_simulate(simulate_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // help and friends
        }
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const svdq::DataError & e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const svdq::ConfigError & e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const svdq::NumericError & e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
