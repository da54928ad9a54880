// catekit command-line front end: generate benchmark datasets, run training
// + rejection-policy sweeps across replications, and render result tables
// and SVG curves.
//
// Exit code 0 on success; on failure a single machine-parseable line
// "error: <message>" goes to stderr and the exit code is 1.
#include <CLI11.hpp>

#include "catekit/cemnist.hpp"
#include "catekit/config.hpp"
#include "catekit/csv.hpp"
#include "catekit/evaluation.hpp"
#include "catekit/ihdp.hpp"
#include "catekit/models/checkpoint.hpp"
#include "catekit/pipeline.hpp"
#include "catekit/svg.hpp"
#include "catekit/toy1d.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;
using namespace catekit;

namespace {

struct GenerateOptions {
    std::string dataset;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    // cemnist
    std::string mnist_train_images, mnist_train_labels, mnist_test_images, mnist_test_labels;
    double fraction = 0.1;
    double test_fraction = 0.1;
    bool downsample = false;
    // toy1d
    std::size_t n_per_arm = 500;
    std::size_t test_n_per_arm = 200;
};

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
}

std::vector<std::pair<std::string, std::string>> dataset_counts(const CateDataset& ds,
                                                                const std::string& prefix) {
    std::map<int, std::size_t> per_stratum, treated_per_stratum;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int s = ds.strata.empty() ? 0 : ds.strata[i];
        per_stratum[s] += 1;
        treated_per_stratum[s] += ds.t[i] == 1;
    }
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back(prefix + ".rows", std::to_string(ds.size()));
    out.emplace_back(prefix + ".treated", std::to_string(ds.treated_count()));
    for (const auto& [s, n] : per_stratum) {
        out.emplace_back(prefix + ".stratum_" + std::to_string(s) + ".rows", std::to_string(n));
        out.emplace_back(prefix + ".stratum_" + std::to_string(s) + ".treated",
                         std::to_string(treated_per_stratum[s]));
    }
    return out;
}

int cmd_generate(const GenerateOptions& opt) {
    fs::create_directories(opt.out_dir);
    Replication rep;
    std::vector<std::pair<std::string, std::string>> manifest;
    manifest.emplace_back("dataset", opt.dataset);
    manifest.emplace_back("seed", std::to_string(opt.seed));

    if (opt.dataset == "cemnist") {
        if (opt.mnist_train_images.empty() || opt.mnist_train_labels.empty() ||
            opt.mnist_test_images.empty() || opt.mnist_test_labels.empty()) {
            throw std::invalid_argument(
                "cemnist generation needs --mnist-train-images/--mnist-train-labels/"
                "--mnist-test-images/--mnist-test-labels IDX paths");
        }
        auto [train_images, train_labels] =
            load_mnist_idx(opt.mnist_train_images, opt.mnist_train_labels);
        auto [test_images, test_labels] =
            load_mnist_idx(opt.mnist_test_images, opt.mnist_test_labels);
        CemnistOptions co;
        co.fraction = opt.fraction;
        co.test_fraction = opt.test_fraction;
        co.downsample = opt.downsample;
        Rng rng(opt.seed);
        rep = generate_cemnist(train_images, train_labels, test_images, test_labels, rng, co);
        manifest.emplace_back("fraction", format_double(opt.fraction));
        manifest.emplace_back("downsample", opt.downsample ? "true" : "false");
    } else if (opt.dataset == "toy1d") {
        Rng rng(opt.seed);
        rep.train = generate_toy1d(rng, opt.n_per_arm);
        rep.test = generate_toy1d(rng, opt.test_n_per_arm);
        rep.seed = opt.seed;
    } else {
        throw std::invalid_argument("unknown dataset kind for generate: " + opt.dataset);
    }

    const std::string train_path = (fs::path(opt.out_dir) / "train.csv").string();
    const std::string test_path = (fs::path(opt.out_dir) / "test.csv").string();
    write_csv_dataset(train_path, rep.train);
    write_csv_dataset(test_path, rep.test);
    auto train_counts = dataset_counts(rep.train, "train");
    auto test_counts = dataset_counts(rep.test, "test");
    manifest.insert(manifest.end(), train_counts.begin(), train_counts.end());
    manifest.insert(manifest.end(), test_counts.begin(), test_counts.end());
    write_manifest((fs::path(opt.out_dir) / "manifest.txt").string(), manifest);
    std::cout << "wrote " << train_path << " (" << rep.train.size() << " rows), " << test_path
              << " (" << rep.test.size() << " rows)\n";
    return 0;
}

// ---- run -----------------------------------------------------------------------

struct RunOptions {
    std::string config_path;
    std::string out_dir;       // overrides config
    std::string dataset;       // overrides config
    std::string models;        // comma list, overrides config
    std::string policies;      // comma list, overrides config
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 0;
    std::size_t replications = 0;
};

TrainConfig train_config_from(const Config& cfg, const std::string& section) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double(section + ".learning_rate", tc.learning_rate);
    tc.min_delta = cfg.get_double(section + ".min_delta", tc.min_delta);
    tc.max_epochs = cfg.get_size(section + ".max_epochs", tc.max_epochs);
    tc.patience = cfg.get_size(section + ".patience", tc.patience);
    tc.dropout_hidden = cfg.get_double(section + ".dropout_hidden", tc.dropout_hidden);
    tc.dropout_pre_output = cfg.get_double(section + ".dropout_pre_output", tc.dropout_pre_output);
    tc.weight_decay_scale = cfg.get_double(section + ".weight_decay_scale", tc.weight_decay_scale);
    tc.mc_samples = cfg.get_size(section + ".mc_samples", tc.mc_samples);
    tc.batch_size = cfg.get_size(section + ".batch_size", tc.batch_size);
    tc.validation_fraction = cfg.get_double(section + ".validation_fraction", tc.validation_fraction);
    return tc;
}

ModelConfig model_config_from(const Config& cfg) {
    ModelConfig mc;
    mc.tlearner_depth = cfg.get_size("model.tlearner_depth", mc.tlearner_depth);
    mc.tlearner_width = cfg.get_size("model.tlearner_width", mc.tlearner_width);
    mc.trunk_depth = cfg.get_size("model.trunk_depth", mc.trunk_depth);
    mc.trunk_width = cfg.get_size("model.trunk_width", mc.trunk_width);
    mc.head_depth = cfg.get_size("model.head_depth", mc.head_depth);
    mc.head_width = cfg.get_size("model.head_width", mc.head_width);
    mc.mmd_weight = cfg.get_double("model.mmd_weight", mc.mmd_weight);
    mc.cevae_hidden_depth = cfg.get_size("model.cevae_hidden_depth", mc.cevae_hidden_depth);
    mc.cevae_hidden_width = cfg.get_size("model.cevae_hidden_width", mc.cevae_hidden_width);
    mc.latent_dim = cfg.get_size("model.latent_dim", mc.latent_dim);
    mc.negative_sampling = cfg.get_bool("model.negative_sampling", mc.negative_sampling);
    mc.cevae_learning_rate = cfg.get_double("model.cevae_learning_rate", mc.cevae_learning_rate);
    return mc;
}

// Replications come either from a loader (ihdp) or a generator (cemnist,
// toy1d, csv). The generator path hands each replication its own stream.
struct DatasetSource {
    std::function<Replication(std::size_t, Rng)> make;
    std::string name;
};

DatasetSource dataset_source_from(const Config& cfg, const std::string& kind,
                                  std::size_t replications, std::uint64_t seed) {
    DatasetSource src;
    src.name = kind;
    if (kind == "cemnist") {
        auto train = std::make_shared<std::pair<MnistImages, std::vector<int>>>(
            load_mnist_idx(cfg.get_string("dataset.mnist_train_images"),
                           cfg.get_string("dataset.mnist_train_labels")));
        auto test = std::make_shared<std::pair<MnistImages, std::vector<int>>>(
            load_mnist_idx(cfg.get_string("dataset.mnist_test_images"),
                           cfg.get_string("dataset.mnist_test_labels")));
        CemnistOptions co;
        co.fraction = cfg.get_double("dataset.fraction", 0.1);
        co.test_fraction = cfg.get_double("dataset.test_fraction", 0.1);
        co.downsample = cfg.get_bool("dataset.downsample", true);
        src.make = [train, test, co](std::size_t, Rng rng) {
            Rng local = rng;
            return generate_cemnist(train->first, train->second, test->first, test->second, local,
                                    co);
        };
    } else if (kind == "toy1d") {
        const std::size_t n = cfg.get_size("dataset.n_per_arm", 500);
        const std::size_t tn = cfg.get_size("dataset.test_n_per_arm", 200);
        src.make = [n, tn](std::size_t, Rng rng) {
            Rng local = rng;
            Replication rep;
            rep.train = generate_toy1d(local, n);
            rep.test = generate_toy1d(local, tn);
            return rep;
        };
    } else if (kind == "ihdp") {
        const std::string dir = cfg.get_string("dataset.dir");
        const bool shift = cfg.get_bool("dataset.covariate_shift", false);
        const std::size_t feature = cfg.get_size("dataset.shift_feature", 0);
        const double drop_value = cfg.get_double("dataset.shift_drop_value", 0.0);
        auto reps = std::make_shared<std::vector<Replication>>(
            load_ihdp(dir, replications, seed));
        src.make = [reps, shift, feature, drop_value](std::size_t index, Rng) {
            const Replication& rep = (*reps)[index];
            return shift ? make_covariate_shift(rep, feature, drop_value) : rep;
        };
    } else if (kind == "csv") {
        CsvColumnMap map;
        map.outcome_kind = cfg.get_string("dataset.outcome", "continuous") == "binary"
                               ? OutcomeKind::binary
                               : OutcomeKind::continuous;
        auto train = std::make_shared<CateDataset>(
            load_csv_dataset(cfg.get_string("dataset.train"), map));
        auto test = std::make_shared<CateDataset>(load_csv_dataset(cfg.get_string("dataset.test"), map));
        src.make = [train, test](std::size_t, Rng) {
            Replication rep;
            rep.train = *train;
            rep.test = *test;
            return rep;
        };
    } else {
        throw std::invalid_argument("unknown dataset kind: " + kind);
    }
    return src;
}

int cmd_run(const RunOptions& opt) {
    const Config cfg = Config::load(opt.config_path);

    const std::string dataset_kind =
        !opt.dataset.empty() ? opt.dataset : cfg.get_string("run.dataset");
    const std::string out_dir =
        !opt.out_dir.empty() ? opt.out_dir : cfg.get_string("run.out_dir", "out/run");
    const std::size_t replications =
        opt.replications > 0 ? opt.replications : cfg.get_size("run.replications", 1);
    const std::uint64_t seed = opt.seed_set ? opt.seed : cfg.get_size("run.seed", 0);
    const std::size_t workers = opt.workers > 0 ? opt.workers : cfg.get_size("run.workers", 1);

    ExperimentSpec spec;
    spec.dataset_name = dataset_kind;
    spec.train = train_config_from(cfg, "train");
    spec.propensity_train = cfg.has("propensity.max_epochs") || cfg.has("propensity.patience") ||
                                    cfg.has("propensity.learning_rate")
                                ? train_config_from(cfg, "propensity")
                                : spec.train;
    spec.model = model_config_from(cfg);
    if (cfg.has("propensity.l2_grid")) {
        spec.propensity_l2_grid = cfg.get_double_list("propensity.l2_grid");
    }
    {
        const std::string model_list =
            !opt.models.empty() ? opt.models
                                : [&cfg] {
                                      std::string joined;
                                      for (const auto& m : cfg.get_list("run.models")) {
                                          joined += (joined.empty() ? "" : ",") + m;
                                      }
                                      return joined;
                                  }();
        spec.models.clear();
        std::stringstream ss(model_list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) spec.models.push_back(parse_estimator_kind(item));
        }
        if (spec.models.empty()) throw std::invalid_argument("no models requested");
    }
    {
        std::vector<std::string> names;
        if (!opt.policies.empty()) {
            std::stringstream ss(opt.policies);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) names.push_back(item);
            }
        } else {
            names = cfg.get_list("run.policies",
                                 {"epistemic", "propensity_quantiles", "propensity_trimming",
                                  "random"});
        }
        spec.policies.clear();
        for (const auto& n : names) spec.policies.push_back(parse_policy_kind(n));
    }
    if (cfg.has("run.grid_step")) {
        const double step = cfg.get_double("run.grid_step");
        if (step <= 0.0 || step > 1.0) throw std::invalid_argument("run.grid_step out of range");
        spec.grid.clear();
        for (double r = 0.0; r < 1.0 + 1e-9; r += step) spec.grid.push_back(std::min(r, 1.0));
    }

    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    fs::create_directories(fs::path(out_dir) / "replications");

    // verbatim echo of the config for provenance
    {
        std::ifstream in(opt.config_path, std::ios::binary);
        std::ofstream echo((fs::path(out_dir) / "config_echo.cfg").string(), std::ios::binary);
        echo << in.rdbuf();
    }

    DatasetSource source = dataset_source_from(cfg, dataset_kind, replications, seed);
    Rng root(seed);

    std::mutex log_mutex;
    std::vector<std::string> failures(replications);
    parallel_for(replications, workers, [&](std::size_t k) {
        const fs::path rep_csv = fs::path(out_dir) / "replications" / ("rep_" + std::to_string(k) + ".csv");
        if (fs::exists(rep_csv)) {
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cout << "replication " << k << ": found " << rep_csv.string() << ", skipping\n";
            return;
        }
        try {
            const Replication rep = source.make(k, root.split(k));
            ReplicationOutcome outcome = run_replication(rep, spec, k, root.split(k));
            for (auto& run : outcome.models) {
                const fs::path ckpt = fs::path(out_dir) / "checkpoints" /
                                      ("rep_" + std::to_string(k) + "_" + to_string(run.kind) + ".ckpt");
                save_estimator(ckpt.string(), run.trained.estimator, spec.train);
            }
            const fs::path tmp = rep_csv.string() + ".tmp";
            {
                std::ofstream os(tmp);
                write_result_rows(os, outcome.result_rows(source.name));
            }
            fs::rename(tmp, rep_csv);
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cout << "replication " << k << ": done\n";
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(log_mutex);
            failures[k] = e.what();
            std::cout << "warning: replication " << k << " failed: " << e.what() << "\n";
        }
    });

    // merge per-replication files in index order
    std::vector<ResultRow> all;
    std::size_t completed = 0;
    for (std::size_t k = 0; k < replications; ++k) {
        const fs::path rep_csv = fs::path(out_dir) / "replications" / ("rep_" + std::to_string(k) + ".csv");
        if (!fs::exists(rep_csv)) continue;
        const auto rows = read_result_rows(rep_csv.string());
        all.insert(all.end(), rows.begin(), rows.end());
        ++completed;
    }
    {
        std::ofstream os((fs::path(out_dir) / "results.csv").string());
        write_result_rows(os, all);
    }
    std::vector<std::pair<std::string, std::string>> manifest{
        {"dataset", dataset_kind},
        {"seed", std::to_string(seed)},
        {"replications", std::to_string(replications)},
        {"completed", std::to_string(completed)},
    };
    for (std::size_t k = 0; k < replications; ++k) {
        if (!failures[k].empty()) {
            manifest.emplace_back("failed_replication_" + std::to_string(k), failures[k]);
        }
    }
    write_manifest((fs::path(out_dir) / "run_manifest.txt").string(), manifest);
    std::cout << "wrote " << (fs::path(out_dir) / "results.csv").string() << " (" << completed
              << "/" << replications << " replications)\n";
    return completed == 0 ? 1 : 0;
}

// ---- report --------------------------------------------------------------------

struct ReportOptions {
    std::string results_dir;
    std::string out_dir;
    double r_rej = 0.5;
};

const char* short_policy_name(const std::string& policy) {
    if (policy == "random") return "rand.";
    if (policy == "propensity_quantiles") return "prop-q.";
    if (policy == "propensity_trimming") return "prop.";
    if (policy == "predictive") return "pred.";
    if (policy == "epistemic") return "unct.";
    return policy.c_str();
}

int cmd_report(const ReportOptions& opt) {
    const std::string results_path = (fs::path(opt.results_dir) / "results.csv").string();
    const auto rows = read_result_rows(results_path);
    if (rows.empty()) throw std::invalid_argument("no result rows in " + results_path);
    const std::string out_dir = opt.out_dir.empty() ? opt.results_dir : opt.out_dir;
    fs::create_directories(out_dir);

    // canonical column order for the policy table
    const std::vector<std::string> policy_order{"random", "propensity_quantiles",
                                                "propensity_trimming", "predictive", "epistemic"};
    std::vector<std::string> models, policies, datasets;
    for (const auto& r : rows) {
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
            datasets.push_back(r.dataset);
        }
    }
    for (const auto& p : policy_order) {
        for (const auto& r : rows) {
            if (r.policy == p) {
                policies.push_back(p);
                break;
            }
        }
    }

    struct Cell {
        double mean = 0.0, se = 0.0;
        std::size_t n = 0;
    };
    auto collect = [&](const std::string& dataset, const std::string& model,
                       const std::string& policy, bool use_pehe) {
        std::vector<double> vals;
        for (const auto& r : rows) {
            if (r.dataset != dataset || r.model != model || r.policy != policy) continue;
            if (std::abs(r.r_nominal - opt.r_rej) > 1e-9) continue;
            const auto& v = use_pehe ? r.pehe : r.rec_error;
            if (v.has_value()) vals.push_back(*v);
        }
        Cell c;
        c.n = vals.size();
        if (vals.empty()) return c;
        for (double v : vals) c.mean += v;
        c.mean /= static_cast<double>(vals.size());
        if (vals.size() >= 2) {
            double var = 0.0;
            for (double v : vals) var += (v - c.mean) * (v - c.mean);
            var /= static_cast<double>(vals.size() - 1);
            c.se = std::sqrt(var / static_cast<double>(vals.size()));
        }
        return c;
    };

    char rbuf[32];
    std::snprintf(rbuf, sizeof(rbuf), "%g", opt.r_rej);
    for (const auto& dataset : datasets) {
        for (const bool use_pehe : {true, false}) {
            const std::string metric = use_pehe ? "pehe" : "rec_error";
            const std::string table_path =
                (fs::path(out_dir) / ("table_" + dataset + "_" + metric + "_r" + rbuf + ".csv"))
                    .string();
            std::ofstream os(table_path);
            std::ostringstream pretty;
            os << "model";
            pretty << metric << " @ r_rej=" << rbuf << " (" << dataset << ")\n";
            pretty << "model";
            for (const auto& p : policies) {
                os << "," << short_policy_name(p) << "_mean," << short_policy_name(p) << "_se";
                pretty << "\t" << short_policy_name(p);
            }
            os << "\n";
            pretty << "\n";
            for (const auto& model : models) {
                os << model;
                pretty << model;
                for (const auto& p : policies) {
                    const Cell c = collect(dataset, model, p, use_pehe);
                    char buf[64];
                    if (c.n == 0) {
                        os << ",,";
                        pretty << "\t-";
                    } else {
                        std::snprintf(buf, sizeof(buf), ",%.4f,%.4f", c.mean, c.se);
                        os << buf;
                        std::snprintf(buf, sizeof(buf), "\t%.2f±%.2f", c.mean, c.se);
                        pretty << buf;
                    }
                }
                os << "\n";
                pretty << "\n";
            }
            std::cout << pretty.str() << "\n";
        }

        // error-vs-rejection-rate curves, one line per policy, per model
        for (const auto& model : models) {
            for (const bool use_pehe : {false, true}) {
                std::vector<SvgSeries> series;
                for (const auto& p : policies) {
                    // collect per-grid-point means
                    std::map<double, std::pair<double, std::size_t>> acc;
                    for (const auto& r : rows) {
                        if (r.dataset != dataset || r.model != model || r.policy != p) continue;
                        const auto& v = use_pehe ? r.pehe : r.rec_error;
                        if (!v.has_value()) continue;
                        auto& slot = acc[r.r_nominal];
                        slot.first += *v;
                        slot.second += 1;
                    }
                    if (acc.empty()) continue;
                    SvgSeries s;
                    s.label = short_policy_name(p);
                    for (const auto& [r, slot] : acc) {
                        s.points.emplace_back(r, slot.first / static_cast<double>(slot.second));
                    }
                    series.push_back(std::move(s));
                }
                if (series.empty()) continue;
                const std::string metric = use_pehe ? "pehe" : "rec_error";
                const std::string plot_path =
                    (fs::path(out_dir) / ("plot_" + dataset + "_" + model + "_" + metric + ".svg"))
                        .string();
                write_line_plot_svg(plot_path, dataset + " / " + model, "rejection rate",
                                    metric, series);
            }
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty-aware CATE estimation and rejection-policy evaluation"};
    app.require_subcommand(1);

    GenerateOptions gen;
    CLI::App* generate = app.add_subcommand("generate", "generate benchmark dataset files");
    generate->add_option("--dataset", gen.dataset, "cemnist | toy1d")->required();
    generate->add_option("--out", gen.out_dir, "output directory");
    generate->add_option("--seed", gen.seed, "generation seed");
    generate->add_option("--mnist-train-images", gen.mnist_train_images, "IDX image file");
    generate->add_option("--mnist-train-labels", gen.mnist_train_labels, "IDX label file");
    generate->add_option("--mnist-test-images", gen.mnist_test_images, "IDX image file");
    generate->add_option("--mnist-test-labels", gen.mnist_test_labels, "IDX label file");
    generate->add_option("--fraction", gen.fraction, "scale on the 12000-sample budget");
    generate->add_option("--test-fraction", gen.test_fraction, "test size relative to train");
    generate->add_flag("--downsample", gen.downsample, "2x2 average pooling");
    generate->add_option("--n-per-arm", gen.n_per_arm, "toy1d training units per arm");
    generate->add_option("--test-n-per-arm", gen.test_n_per_arm, "toy1d test units per arm");

    RunOptions run;
    CLI::App* runcmd = app.add_subcommand("run", "train models and sweep rejection policies");
    runcmd->add_option("--config", run.config_path, "run configuration file")->required();
    runcmd->add_option("--out", run.out_dir, "override run.out_dir");
    runcmd->add_option("--dataset", run.dataset, "override run.dataset");
    runcmd->add_option("--models", run.models, "override run.models (comma list)");
    runcmd->add_option("--policies", run.policies, "override run.policies (comma list)");
    runcmd->add_option("--replications", run.replications, "override run.replications");
    runcmd->add_option("--workers", run.workers, "override run.workers");
    auto* seed_opt = runcmd->add_option("--seed", run.seed, "override run.seed");

    ReportOptions rep;
    CLI::App* report = app.add_subcommand("report", "tables and SVG curves from results");
    report->add_option("--results", rep.results_dir, "directory containing results.csv")->required();
    report->add_option("--out", rep.out_dir, "output directory (defaults to --results)");
    report->add_option("--r-rej", rep.r_rej, "rejection rate for the policy table");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*generate) return cmd_generate(gen);
        if (*runcmd) {
            run.seed_set = seed_opt->count() > 0;
            return cmd_run(run);
        }
        if (*report) return cmd_report(rep);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
