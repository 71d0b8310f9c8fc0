// nf3d: fits neural height-field models to face point clouds, registers and
// regenerates clouds, and runs the weight-space verification pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nf3d/cloud_io.hpp"
#include "nf3d/config_file.hpp"
#include "nf3d/face_model.hpp"
#include "nf3d/gallery.hpp"
#include "nf3d/icp.hpp"
#include "nf3d/lm.hpp"
#include "nf3d/model_io.hpp"
#include "nf3d/point_cloud.hpp"
#include "nf3d/rigid.hpp"
#include "nf3d/siamese.hpp"
#include "nf3d/types.hpp"

namespace {

using namespace nf3d;
namespace fs = std::filesystem;

/// Flag misuse discovered after parsing; maps to the usage exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int g_exit_code = 0;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::optional<fs::path> optional_path(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return fs::path(path);
}

std::vector<Eigen::Index> parse_layer_list(const std::string& text) {
    std::vector<Eigen::Index> layers;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string item =
            text.substr(start, comma == std::string::npos ? comma : comma - start);
        char* end = nullptr;
        const long long v = std::strtoll(item.c_str(), &end, 10);
        if (item.empty() || end == item.c_str() || *end != '\0' || v < 1) {
            throw UsageError("bad layer list '" + text +
                             "'; expected comma-separated sizes like 256,64,16");
        }
        layers.push_back(static_cast<Eigen::Index>(v));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return layers;
}

const std::set<std::string> kLmKeys = {
    "lm.hidden_count", "lm.target_mse", "lm.max_epochs",   "lm.mu_initial",
    "lm.beta",         "lm.mu_max",     "lm.gradient_min", "lm.batch_size",
};
const std::set<std::string> kIcpKeys = {
    "icp.max_iterations",
    "icp.residual_tolerance",
    "icp.sample_fraction",
    "icp.rejection_distance",
};
const std::set<std::string> kSiameseKeys = {
    "siamese.q", "siamese.learning_rate", "siamese.epochs",
    "siamese.batch_size", "siamese.layers",
};

std::set<std::string> with_seed(std::set<std::string> keys) {
    keys.insert("seed");
    return keys;
}

/// Merge precedence: built-in default < config file < explicit flag.
class ConfigMerge {
  public:
    ConfigMerge(const CLI::App& sub, const std::string& config_path,
                const std::set<std::string>& allowed)
        : sub_(sub) {
        if (!config_path.empty()) {
            file_ = ConfigFile::parse(config_path, allowed);
        }
    }

    void apply(const std::string& flag, const std::string& key, double& value) const {
        if (sub_.count(flag) == 0) value = file_.get_double(key, value);
    }
    void apply(const std::string& flag, const std::string& key, int& value) const {
        if (sub_.count(flag) == 0) value = static_cast<int>(file_.get_int(key, value));
    }
    void apply(const std::string& flag, const std::string& key, Eigen::Index& value) const {
        if (sub_.count(flag) == 0) {
            value = static_cast<Eigen::Index>(file_.get_int(key, value));
        }
    }
    void apply(const std::string& flag, const std::string& key,
               std::uint64_t& value) const {
        if (sub_.count(flag) == 0) {
            value = static_cast<std::uint64_t>(
                file_.get_int(key, static_cast<long long>(value)));
        }
    }
    void apply(const std::string& flag, const std::string& key, std::string& value) const {
        if (sub_.count(flag) == 0) value = file_.get_string(key, value);
    }
    bool file_has(const std::string& key) const { return file_.has(key); }
    const ConfigFile& file() const { return file_; }

  private:
    const CLI::App& sub_;
    ConfigFile file_;
};

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string cloud;
    std::string output;
    std::string report;
    std::string landmarks;
    std::string reference;
    std::string reference_landmarks;
    std::string config;
    bool landmark_register = false;
    bool refine_icp = false;
    int jobs = 1;
    std::uint64_t seed = 0;
    LmConfig lm;
    IcpConfig icp;
    double rejection_distance = 0.0;
};

void merge_fit_config(const CLI::App& sub, FitArgs& args) {
    std::set<std::string> allowed = with_seed(kLmKeys);
    allowed.insert(kIcpKeys.begin(), kIcpKeys.end());
    const ConfigMerge merge(sub, args.config, allowed);
    merge.apply("--seed", "seed", args.seed);
    merge.apply("--hidden", "lm.hidden_count", args.lm.hidden_count);
    merge.apply("--target-mse", "lm.target_mse", args.lm.target_mse);
    merge.apply("--max-epochs", "lm.max_epochs", args.lm.max_epochs);
    merge.apply("--mu-initial", "lm.mu_initial", args.lm.mu_initial);
    merge.apply("--beta", "lm.beta", args.lm.beta);
    merge.apply("--mu-max", "lm.mu_max", args.lm.mu_max);
    merge.apply("--gradient-min", "lm.gradient_min", args.lm.gradient_min);
    merge.apply("--batch-size", "lm.batch_size", args.lm.batch_size);
    merge.apply("--icp-max-iterations", "icp.max_iterations", args.icp.max_iterations);
    merge.apply("--icp-tolerance", "icp.residual_tolerance", args.icp.residual_tolerance);
    merge.apply("--icp-sample-fraction", "icp.sample_fraction", args.icp.sample_fraction);
    if (sub.count("--icp-rejection-distance") > 0) {
        args.icp.rejection_distance = args.rejection_distance;
    } else if (merge.file_has("icp.rejection_distance")) {
        args.icp.rejection_distance = merge.file().get_double("icp.rejection_distance", 0.0);
    }
}

struct FitOutcome {
    TrainReport report;
    fs::path model_path;
};

/// normalize -> optional landmark alignment -> optional ICP -> train -> save.
FitOutcome fit_one(const FitArgs& args, const fs::path& cloud_path,
                   const std::optional<fs::path>& landmark_path,
                   const PointCloud* normalized_reference, const fs::path& model_path,
                   const fs::path& report_path) {
    const PointCloud raw = load_cloud(cloud_path, landmark_path);
    PointCloud cloud = normalize(raw).first;

    if (args.landmark_register) {
        if (!normalized_reference || !normalized_reference->has_landmarks()) {
            throw UsageError("fit: --register needs --reference and --reference-landmarks");
        }
        if (!cloud.has_landmarks()) {
            throw DataError("fit: --register needs landmarks for " + cloud_path.string() +
                            "; pass --landmarks");
        }
        cloud = register_landmarks(cloud, normalized_reference->landmark_points()).first;
    }
    if (args.refine_icp) {
        if (!normalized_reference) {
            throw UsageError("fit: --icp needs --reference");
        }
        IcpConfig icp_config = args.icp;
        icp_config.seed = args.seed;
        const IcpResult result =
            icp(cloud, *normalized_reference, RigidTransform::identity(), icp_config);
        cloud = apply_transform(cloud, result.transform);
    }

    LmConfig lm_config = args.lm;
    lm_config.seed = args.seed;
    auto [model, report] = train_lm(cloud, lm_config);
    serialize(model, model_path);
    if (!report_path.empty()) write_report(report, report_path);
    return {std::move(report), model_path};
}

int stop_exit_code(StopReason reason) {
    return (reason == StopReason::target_mse || reason == StopReason::max_epochs)
               ? 0
               : kExitNumeric;
}

void run_fit_single(const FitArgs& args) {
    PointCloud reference_storage;
    const PointCloud* reference = nullptr;
    if (!args.reference.empty()) {
        reference_storage =
            normalize(load_cloud(args.reference, optional_path(args.reference_landmarks)))
                .first;
        reference = &reference_storage;
    } else if (args.landmark_register || args.refine_icp) {
        throw UsageError("fit: --register/--icp need --reference");
    }

    const FitOutcome outcome = fit_one(args, args.cloud, optional_path(args.landmarks),
                                       reference, args.output, args.report);
    std::cout << "final_mse: " << g17(outcome.report.final_mse) << "\n"
              << "epochs_used: " << outcome.report.epochs_used << "\n"
              << "stop_reason: " << to_string(outcome.report.stop_reason) << "\n"
              << "model: " << outcome.model_path.string() << "\n";
    const int code = stop_exit_code(outcome.report.stop_reason);
    if (code != 0) {
        std::cerr << "fit: training stopped on "
                  << to_string(outcome.report.stop_reason) << "\n";
    }
    g_exit_code = std::max(g_exit_code, code);
}

void run_fit_batch(const FitArgs& args) {
    if (args.landmark_register || !args.landmarks.empty()) {
        throw UsageError("fit: batch mode registers with --icp only; per-cloud "
                         "--landmarks are not supported");
    }
    std::vector<fs::path> clouds;
    for (const auto& entry : fs::directory_iterator(args.cloud)) {
        if (entry.is_regular_file() && entry.path().extension() == ".xyz") {
            clouds.push_back(entry.path());
        }
    }
    std::sort(clouds.begin(), clouds.end());
    if (clouds.empty()) {
        throw DataError("fit: no .xyz clouds under " + args.cloud);
    }

    PointCloud reference_storage;
    const PointCloud* reference = nullptr;
    if (!args.reference.empty()) {
        reference_storage =
            normalize(load_cloud(args.reference, optional_path(args.reference_landmarks)))
                .first;
        reference = &reference_storage;
    } else if (args.refine_icp) {
        throw UsageError("fit: --icp needs --reference");
    }

    fs::create_directories(args.output);

    struct Row {
        std::string line;
        int code = 0;
    };
    std::vector<Row> rows(clouds.size());
    std::atomic<std::size_t> next{0};
    const int jobs = std::max(1, args.jobs);

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= clouds.size()) return;
            const std::string stem = clouds[i].stem().string();
            const fs::path model_path = fs::path(args.output) / (stem + ".nf3d");
            const fs::path report_path = fs::path(args.output) / (stem + ".report");
            try {
                const FitOutcome outcome = fit_one(args, clouds[i], std::nullopt,
                                                   reference, model_path, report_path);
                rows[i].line = stem + ": final_mse=" + g17(outcome.report.final_mse) +
                               " epochs=" + std::to_string(outcome.report.epochs_used) +
                               " stop=" + to_string(outcome.report.stop_reason);
                rows[i].code = stop_exit_code(outcome.report.stop_reason);
            } catch (const DataError& e) {
                rows[i].line = stem + ": error: " + e.what();
                rows[i].code = kExitData;
            } catch (const NumericError& e) {
                rows[i].line = stem + ": error: " + e.what();
                rows[i].code = kExitNumeric;
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& thread : threads) thread.join();

    for (const auto& row : rows) {
        std::cout << row.line << "\n";
        g_exit_code = std::max(g_exit_code, row.code);
    }
}

void add_fit(CLI::App& app, FitArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "fit", "Fit a neural height-field model to a point cloud (or directory of clouds)");
    sub->add_option("cloud", args.cloud, "XYZ cloud file, or a directory for batch mode")
        ->required();
    sub->add_option("-o,--output", args.output, "Model file (batch mode: directory)")
        ->required();
    sub->add_option("--report", args.report, "Write the training report here");
    auto* lms = sub->add_option("--landmarks", args.landmarks, "Probe landmark index file");
    auto* ref = sub->add_option("--reference", args.reference, "Reference XYZ cloud");
    auto* ref_lms = sub->add_option("--reference-landmarks", args.reference_landmarks,
                                    "Reference landmark index file");
    sub->add_flag("--register", args.landmark_register,
                  "Align to the reference landmarks before fitting")
        ->needs(lms)
        ->needs(ref)
        ->needs(ref_lms);
    sub->add_flag("--icp", args.refine_icp, "Refine alignment with ICP against the reference")
        ->needs(ref);
    sub->add_option("--hidden", args.lm.hidden_count, "Hidden unit count M");
    sub->add_option("--target-mse", args.lm.target_mse, "Stop when MSE reaches this");
    sub->add_option("--max-epochs", args.lm.max_epochs, "Epoch budget");
    sub->add_option("--mu-initial", args.lm.mu_initial, "Initial damping");
    sub->add_option("--beta", args.lm.beta, "Damping adjustment factor");
    sub->add_option("--mu-max", args.lm.mu_max, "Damping ceiling");
    sub->add_option("--gradient-min", args.lm.gradient_min, "Gradient stop threshold");
    sub->add_option("--batch-size", args.lm.batch_size, "Jacobian accumulation batch");
    sub->add_option("--icp-max-iterations", args.icp.max_iterations, "ICP iteration cap");
    sub->add_option("--icp-tolerance", args.icp.residual_tolerance, "ICP stop tolerance");
    sub->add_option("--icp-sample-fraction", args.icp.sample_fraction,
                    "Moving points sampled per ICP iteration");
    sub->add_option("--icp-rejection-distance", args.rejection_distance,
                    "Drop ICP pairs farther apart than this");
    sub->add_option("--jobs", args.jobs, "Parallel fits in batch mode");
    sub->add_option("--seed", args.seed, "Random seed");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        merge_fit_config(*sub, args);
        if (fs::is_directory(args.cloud)) {
            run_fit_batch(args);
        } else {
            run_fit_single(args);
        }
    });
}

// ---------------------------------------------------------- reconstruct

struct ReconstructArgs {
    std::string model;
    std::string output;
    std::string config;
    std::uint64_t seed = 0;
    GridSpec grid{-1.0, 1.0, -1.0, 1.0, 100, 100};
};

void add_reconstruct(CLI::App& app, ReconstructArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "reconstruct", "Regenerate an XYZ cloud from a model over a regular grid");
    sub->add_option("model", args.model, "Model file")->required();
    sub->add_option("-o,--output", args.output, "Output XYZ file")->required();
    sub->add_option("--x-min", args.grid.x_min, "Grid lower x bound");
    sub->add_option("--x-max", args.grid.x_max, "Grid upper x bound");
    sub->add_option("--y-min", args.grid.y_min, "Grid lower y bound");
    sub->add_option("--y-max", args.grid.y_max, "Grid upper y bound");
    sub->add_option("--nx", args.grid.nx, "Grid points along x");
    sub->add_option("--ny", args.grid.ny, "Grid points along y");
    sub->add_option("--seed", args.seed, "Random seed (unused, accepted for uniformity)");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        if (args.grid.nx < 1 || args.grid.ny < 1 || args.grid.x_min > args.grid.x_max ||
            args.grid.y_min > args.grid.y_max || args.grid.x_min < -1.0 ||
            args.grid.x_max > 1.0 || args.grid.y_min < -1.0 || args.grid.y_max > 1.0) {
            throw UsageError("reconstruct: grid must satisfy -1 <= min <= max <= 1 "
                             "and nx, ny >= 1");
        }
        const FaceModel model = deserialize(args.model);
        const PointCloud cloud = resample(model, args.grid);
        save_cloud(cloud, args.output);
        std::cout << "points: " << cloud.size() << "\n"
                  << "cloud: " << args.output << "\n";
    });
}

// -------------------------------------------------------------- register

struct RegisterArgs {
    std::string probe;
    std::string reference;
    std::string output;
    std::string landmarks;
    std::string reference_landmarks;
    std::string config;
    bool refine_icp = false;
    std::uint64_t seed = 0;
    IcpConfig icp;
    double rejection_distance = 0.0;
};

void add_register(CLI::App& app, RegisterArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "register", "Rigidly align a probe cloud to a reference cloud");
    sub->add_option("probe", args.probe, "Probe XYZ cloud")->required();
    sub->add_option("--reference", args.reference, "Reference XYZ cloud")->required();
    sub->add_option("-o,--output", args.output, "Registered cloud output")->required();
    auto* lms = sub->add_option("--landmarks", args.landmarks, "Probe landmark index file");
    auto* ref_lms = sub->add_option("--reference-landmarks", args.reference_landmarks,
                                    "Reference landmark index file");
    lms->needs(ref_lms);
    ref_lms->needs(lms);
    sub->add_flag("--icp", args.refine_icp,
                  "Run ICP after landmark alignment (ICP always runs without landmarks)");
    sub->add_option("--max-iterations", args.icp.max_iterations, "ICP iteration cap");
    sub->add_option("--tolerance", args.icp.residual_tolerance, "ICP stop tolerance");
    sub->add_option("--sample-fraction", args.icp.sample_fraction,
                    "Moving points sampled per ICP iteration");
    sub->add_option("--rejection-distance", args.rejection_distance,
                    "Drop pairs farther apart than this");
    sub->add_option("--seed", args.seed, "Random seed");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed(kIcpKeys));
        merge.apply("--seed", "seed", args.seed);
        merge.apply("--max-iterations", "icp.max_iterations", args.icp.max_iterations);
        merge.apply("--tolerance", "icp.residual_tolerance", args.icp.residual_tolerance);
        merge.apply("--sample-fraction", "icp.sample_fraction", args.icp.sample_fraction);
        if (sub->count("--rejection-distance") > 0) {
            args.icp.rejection_distance = args.rejection_distance;
        } else if (merge.file_has("icp.rejection_distance")) {
            args.icp.rejection_distance =
                merge.file().get_double("icp.rejection_distance", 0.0);
        }
        args.icp.seed = args.seed;

        const PointCloud probe = load_cloud(args.probe, optional_path(args.landmarks));
        const PointCloud reference =
            load_cloud(args.reference, optional_path(args.reference_landmarks));

        PointCloud current = probe;
        RigidTransform total = RigidTransform::identity();
        const bool landmark_stage = !args.landmarks.empty();
        if (landmark_stage) {
            if (!reference.has_landmarks()) {
                throw DataError("register: reference landmarks are empty");
            }
            auto [aligned, transform] =
                register_landmarks(current, reference.landmark_points());
            current = std::move(aligned);
            total = transform;
        }
        if (args.refine_icp || !landmark_stage) {
            const IcpResult result =
                icp(current, reference, RigidTransform::identity(), args.icp);
            current = apply_transform(current, result.transform);
            total = compose(result.transform, total);
            std::cout << "icp_iterations: " << result.iterations_used << "\n"
                      << "icp_residual: " << g17(result.final_residual) << "\n";
        }
        save_cloud(current, args.output);
        for (int r = 0; r < 3; ++r) {
            std::cout << "R" << r << ":";
            for (int c = 0; c < 3; ++c) std::cout << ' ' << g17(total.R(r, c));
            std::cout << "\n";
        }
        std::cout << "t: " << g17(total.t.x()) << ' ' << g17(total.t.y()) << ' '
                  << g17(total.t.z()) << "\n"
                  << "cloud: " << args.output << "\n";
    });
}

// --------------------------------------------------------------- augment

struct AugmentArgs {
    std::string model;
    std::string output_dir;
    std::string config;
    int count = 1;
    std::uint64_t seed = 0;
};

void add_augment(CLI::App& app, AugmentArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "augment", "Write functionally identical models with permuted hidden units");
    sub->add_option("model", args.model, "Model file")->required();
    sub->add_option("-o,--output", args.output_dir, "Output directory")->required();
    sub->add_option("--count", args.count, "Number of augmented models")->required();
    sub->add_option("--seed", args.seed, "Random seed");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        if (args.count < 1) throw UsageError("augment: --count must be >= 1");

        const FaceModel model = deserialize(args.model);
        const auto variants = random_augmentations(model, args.count, args.seed);
        fs::create_directories(args.output_dir);
        const std::string stem = fs::path(args.model).stem().string();
        for (std::size_t k = 0; k < variants.size(); ++k) {
            char name[64];
            std::snprintf(name, sizeof name, "%s_aug_%03zu.nf3d", stem.c_str(), k);
            serialize(unflatten(variants[k]), fs::path(args.output_dir) / name);
        }
        std::cout << "models: " << variants.size() << "\n"
                  << "directory: " << args.output_dir << "\n";
    });
}

// ----------------------------------------------------------------- pairs

struct PairsArgs {
    std::string gallery;
    std::string output;
    std::string train_out;
    std::string test_out;
    std::string config;
    int positives = 0;
    int negatives = 0;
    int augment = 0;
    double split = 0.5;
    std::uint64_t seed = 0;
};

std::vector<std::pair<std::string, std::vector<FlatWeights>>> load_gallery_weights(
    const fs::path& gallery_dir) {
    const auto records = read_index(gallery_dir);
    if (records.empty()) {
        throw DataError("pairs: no enrolled models under " + gallery_dir.string());
    }
    std::vector<std::pair<std::string, std::vector<FlatWeights>>> gallery;
    for (const auto& record : records) {
        auto it = std::find_if(gallery.begin(), gallery.end(),
                               [&](const auto& g) { return g.first == record.identity; });
        if (it == gallery.end()) {
            gallery.push_back({record.identity, {}});
            it = std::prev(gallery.end());
        }
        it->second.push_back(flatten(deserialize(gallery_dir / record.relative_path)));
    }
    return gallery;
}

void add_pairs(CLI::App& app, PairsArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "pairs", "Generate labeled same/different pairs from an enrolled gallery");
    sub->add_option("--gallery", args.gallery, "Gallery directory")->required();
    sub->add_option("--positives", args.positives, "Same-identity pair count")->required();
    sub->add_option("--negatives", args.negatives, "Different-identity pair count")
        ->required();
    sub->add_option("--augment", args.augment,
                    "Permutation augmentations added per enrolled model");
    auto* out = sub->add_option("-o,--output", args.output, "Pair file (no split)");
    auto* train_out =
        sub->add_option("--train-out", args.train_out, "Training split pair file");
    auto* test_out = sub->add_option("--test-out", args.test_out, "Test split pair file");
    sub->add_option("--split", args.split, "Fraction routed to --train-out");
    train_out->needs(test_out);
    test_out->needs(train_out);
    train_out->excludes(out);
    sub->add_option("--seed", args.seed, "Random seed");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        const bool split_mode = !args.train_out.empty();
        if (!split_mode && args.output.empty()) {
            throw UsageError("pairs: pass -o, or --train-out with --test-out");
        }

        const auto gallery = load_gallery_weights(args.gallery);
        const auto pairs =
            generate_pairs(gallery, args.positives, args.negatives, args.augment, args.seed);
        if (split_mode) {
            const auto [train, test] = split_pairs(pairs, args.split, args.seed);
            if (train.empty() || test.empty()) {
                throw DataError("pairs: split leaves an empty side; adjust --split");
            }
            save_pairs(train, args.train_out);
            save_pairs(test, args.test_out);
            std::cout << "train_pairs: " << train.size() << "\n"
                      << "test_pairs: " << test.size() << "\n";
        } else {
            save_pairs(pairs, args.output);
            std::cout << "pairs: " << pairs.size() << "\n";
        }
    });
}

// -------------------------------------------------------- train-verifier

struct TrainVerifierArgs {
    std::string pairs;
    std::string output;
    std::string layers_text;
    std::string config;
    std::uint64_t seed = 0;
    SiameseConfig siamese;
};

void add_train_verifier(CLI::App& app, TrainVerifierArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "train-verifier", "Train the Siamese verifier on a labeled pair file");
    sub->add_option("pairs", args.pairs, "Pair file")->required();
    sub->add_option("-o,--output", args.output, "Net output file")->required();
    sub->add_option("--q", args.siamese.q, "Energy upper bound Q");
    sub->add_option("--learning-rate", args.siamese.learning_rate, "Step size");
    sub->add_option("--epochs", args.siamese.epochs, "Training epochs");
    sub->add_option("--batch-size", args.siamese.batch_size, "Minibatch size");
    sub->add_option("--layers", args.layers_text,
                    "Hidden and embedding sizes, e.g. 256,64,16");
    sub->add_option("--seed", args.seed, "Random seed");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed(kSiameseKeys));
        merge.apply("--seed", "seed", args.seed);
        merge.apply("--q", "siamese.q", args.siamese.q);
        merge.apply("--learning-rate", "siamese.learning_rate", args.siamese.learning_rate);
        merge.apply("--epochs", "siamese.epochs", args.siamese.epochs);
        merge.apply("--batch-size", "siamese.batch_size", args.siamese.batch_size);
        merge.apply("--layers", "siamese.layers", args.layers_text);
        if (!args.layers_text.empty()) {
            args.siamese.layers = parse_layer_list(args.layers_text);
        }
        args.siamese.seed = args.seed;

        const auto pairs = load_pairs(args.pairs);
        auto [net, losses] = train_siamese(pairs, args.siamese);
        save_net(net, args.output);
        std::cout << "epochs: " << losses.size() << "\n"
                  << "final_loss: " << g17(losses.empty() ? 0.0 : losses.back()) << "\n"
                  << "net: " << args.output << "\n";
    });
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
    std::string model_a;
    std::string model_b;
    std::string net;
    std::string config;
    double threshold = 0.0;
    std::uint64_t seed = 0;
};

void add_verify(CLI::App& app, VerifyArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "verify", "Decide whether two models belong to the same identity");
    sub->add_option("model_a", args.model_a, "First model file")->required();
    sub->add_option("model_b", args.model_b, "Second model file")->required();
    sub->add_option("--net", args.net, "Trained verifier net")->required();
    sub->add_option("--threshold", args.threshold, "Same-identity energy threshold")
        ->required();
    sub->add_option("--seed", args.seed, "Random seed (unused, accepted for uniformity)");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        const SiameseNet net = load_net(args.net);
        const FlatWeights a = flatten(deserialize(args.model_a));
        const FlatWeights b = flatten(deserialize(args.model_b));
        const auto [same, score] = verify(net, a, b, args.threshold);
        std::cout << "decision: " << (same ? "same" : "different") << "\n"
                  << "score: " << g17(score) << "\n";
    });
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
    std::string pairs;
    std::string net;
    std::string output;
    std::string config;
    std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "eval", "Evaluate a verifier on labeled pairs and write the ROC/PR CSV");
    sub->add_option("pairs", args.pairs, "Pair file")->required();
    sub->add_option("--net", args.net, "Trained verifier net")->required();
    sub->add_option("-o,--output", args.output, "ROC/PR CSV output")->required();
    sub->add_option("--seed", args.seed, "Random seed (unused, accepted for uniformity)");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        const SiameseNet net = load_net(args.net);
        const auto pairs = load_pairs(args.pairs);
        const EvalReport report = eval_roc(net, pairs);
        write_eval_csv(report, args.output);
        std::cout << "auc: " << g17(report.auc) << "\n"
                  << "threshold: " << g17(report.threshold) << "\n"
                  << "accuracy: " << g17(report.accuracy_at_threshold) << "\n"
                  << "csv: " << args.output << "\n";
    });
}

// ---------------------------------------------------------------- enroll

struct EnrollArgs {
    std::string model;
    std::string gallery;
    std::string identity;
    std::string timestamp;
    std::string config;
    long long source_points = 0;
    double final_mse = 0.0;
    std::uint64_t seed = 0;
};

void add_enroll(CLI::App& app, EnrollArgs& args) {
    CLI::App* sub =
        app.add_subcommand("enroll", "Store a fitted model in a gallery directory");
    sub->add_option("model", args.model, "Model file")->required();
    sub->add_option("--gallery", args.gallery, "Gallery directory")->required();
    sub->add_option("--identity", args.identity, "Identity label")->required();
    sub->add_option("--timestamp", args.timestamp, "Override the enrollment timestamp");
    sub->add_option("--source-points", args.source_points, "Training cloud point count");
    sub->add_option("--final-mse", args.final_mse, "Training final MSE");
    sub->add_option("--seed", args.seed, "Random seed (unused, accepted for uniformity)");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        const FaceModel model = deserialize(args.model);
        EnrollMetadata meta;
        meta.timestamp = args.timestamp;
        meta.source_points = static_cast<Eigen::Index>(args.source_points);
        meta.final_mse = args.final_mse;
        const GalleryEntry entry = enroll(args.gallery, args.identity, model, meta);
        std::cout << "identity: " << entry.identity << "\n"
                  << "models: " << entry.model_paths.size() << "\n"
                  << "path: " << entry.model_paths.back() << "\n";
    });
}

// ----------------------------------------------------------------- match

struct MatchArgs {
    std::string probe;
    std::string gallery;
    std::string net;
    std::string config;
    int top_k = 5;
    std::uint64_t seed = 0;
};

void add_match(CLI::App& app, MatchArgs& args) {
    CLI::App* sub = app.add_subcommand(
        "match", "Rank gallery identities against a probe model");
    sub->add_option("probe", args.probe, "Probe model file")->required();
    sub->add_option("--gallery", args.gallery, "Gallery directory")->required();
    sub->add_option("--net", args.net, "Trained verifier net")->required();
    sub->add_option("--top", args.top_k, "Identities to report");
    sub->add_option("--seed", args.seed, "Random seed (unused, accepted for uniformity)");
    sub->add_option("--config", args.config, "key = value config file");
    sub->callback([&args, sub]() {
        const ConfigMerge merge(*sub, args.config, with_seed({}));
        merge.apply("--seed", "seed", args.seed);
        if (args.top_k < 1) throw UsageError("match: --top must be >= 1");
        const FaceModel probe = deserialize(args.probe);
        const SiameseNet net = load_net(args.net);
        const auto results = match_probe(args.gallery, probe, net, args.top_k);
        for (const auto& result : results) {
            std::cout << result.identity << "\t" << g17(result.score) << "\n";
        }
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural height-field face models: fitting, registration, "
                 "regeneration, and weight-space verification"};
    app.require_subcommand(1);

    FitArgs fit_args;
    ReconstructArgs reconstruct_args;
    RegisterArgs register_args;
    AugmentArgs augment_args;
    PairsArgs pairs_args;
    TrainVerifierArgs train_verifier_args;
    VerifyArgs verify_args;
    EvalArgs eval_args;
    EnrollArgs enroll_args;
    MatchArgs match_args;

    add_fit(app, fit_args);
    add_reconstruct(app, reconstruct_args);
    add_register(app, register_args);
    add_augment(app, augment_args);
    add_pairs(app, pairs_args);
    add_train_verifier(app, train_verifier_args);
    add_verify(app, verify_args);
    add_eval(app, eval_args);
    add_enroll(app, enroll_args);
    add_match(app, match_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return g_exit_code;
}
