// gravilon: MNIST optimizer comparison, analytic testbed and gradient check.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 trial divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gravilon/error.hpp"
#include "gravilon/harness.hpp"
#include "gravilon/nn.hpp"
#include "gravilon/random.hpp"
#include "gravilon/testbed.hpp"

namespace {

using namespace gravilon;

constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kDiverged = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentOptions {
    std::string methods = "gravilon";
    std::size_t trials = 15;
    std::size_t steps = 2500;
    std::size_t batch = 256;
    double clip = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::string data_dir;
    std::string split = "holdout";
    bool synthetic = false;
    std::size_t synthetic_count = data::kSourceCount;
    std::size_t threads = 1;
    std::size_t eval_every = 250;
    std::size_t eval_subset = 2048;
    double target = 0.95;
    std::size_t cap = 20000;
    std::string out = "results.csv";
    std::string config;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void add_common(CLI::App* cmd, ExperimentOptions& o) {
    cmd->add_option("--methods", o.methods, "Comma-separated methods, e.g. gravilon,sgd,adagrad:0.1");
    cmd->add_option("--trials", o.trials, "Trials per method")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", o.batch, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--clip", o.clip, "Global gradient-norm clip threshold")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Seed of the first trial");
    cmd->add_option("--split-seed", o.split_seed, "Seed of the train/test split");
    cmd->add_option("--data-dir", o.data_dir, "Directory with the MNIST IDX files");
    cmd->add_option("--split", o.split, "holdout (50k/10k of the training archive) or canonical")
        ->check(CLI::IsMember({"holdout", "canonical"}));
    cmd->add_flag("--synthetic", o.synthetic, "Use the built-in synthetic dataset instead of MNIST");
    cmd->add_option("--synthetic-count", o.synthetic_count, "Synthetic source size")
        ->check(CLI::Range(std::size_t{12}, std::size_t{10'000'000}));
    cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--eval-subset", o.eval_subset, "Training images used to measure train accuracy")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "CSV output path; the manifest goes to <out>.manifest");
    cmd->add_option("--config", o.config, "Flat key=value file; command-line flags take precedence");
}

// Fills every option not given on the command line from the config file.
void apply_config(CLI::App* cmd, const std::string& path) {
    if (path.empty()) return;
    for (const auto& [key, value] : harness::read_config_file(path)) {
        if (key == "config") continue;
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (opt == nullptr) throw UsageError("unknown config key '" + key + "' in " + path);
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

int run_experiment_command(const ExperimentOptions& o, harness::Mode mode) {
    harness::ExperimentConfig cfg;
    try {
        cfg.methods = harness::parse_method_list(o.methods);
    } catch (const InvalidInput& e) {
        throw UsageError(e.what());
    }
    cfg.trials = o.trials;
    cfg.base_seed = o.seed;
    cfg.threads = o.threads;
    cfg.trial.mode = mode;
    cfg.trial.steps = o.steps;
    cfg.trial.batch_size = o.batch;
    cfg.trial.clip_threshold = o.clip;
    cfg.trial.eval_every = o.eval_every;
    cfg.trial.train_eval_subset = o.eval_subset;
    cfg.trial.target = o.target;
    cfg.trial.cap = o.cap;
    cfg.trial.test_at_every_eval = mode == harness::Mode::fixed_steps;

    harness::DataConfig data_cfg;
    data_cfg.data_dir = o.data_dir;
    data_cfg.split_mode = o.split == "canonical" ? data::SplitMode::canonical : data::SplitMode::holdout;
    data_cfg.synthetic = o.synthetic;
    data_cfg.synthetic_count = o.synthetic_count;
    data_cfg.split_seed = o.split_seed;
    if (!o.synthetic && o.data_dir.empty()) throw UsageError("--data-dir or --synthetic is required");

    harness::Settings manifest{
        {"mode", mode == harness::Mode::fixed_steps ? "accuracy" : "steps"},
        {"methods", o.methods},
        {"trials", std::to_string(o.trials)},
        {"batch", std::to_string(o.batch)},
        {"clip", fmt(o.clip)},
        {"seed", std::to_string(o.seed)},
        {"split-seed", std::to_string(o.split_seed)},
        {"data-dir", o.data_dir},
        {"split", o.split},
        {"synthetic", o.synthetic ? "true" : "false"},
        {"synthetic-count", std::to_string(o.synthetic_count)},
        {"threads", std::to_string(o.threads)},
        {"eval-every", std::to_string(o.eval_every)},
        {"eval-subset", std::to_string(o.eval_subset)},
    };
    if (mode == harness::Mode::fixed_steps) {
        manifest.emplace_back("steps", std::to_string(o.steps));
    } else {
        manifest.emplace_back("target", fmt(o.target));
        manifest.emplace_back("cap", std::to_string(o.cap));
    }
    manifest.emplace_back("out", o.out);

    const auto split = harness::load_data(data_cfg);
    const auto result = harness::run_experiment(cfg, split);
    harness::write_csv(o.out, result.trials);
    harness::write_manifest(o.out + ".manifest", manifest);

    bool any_failed = false;
    std::cout << "method,trials,failed,mean_final_acc,mean_best_acc,best_final_acc";
    if (mode == harness::Mode::steps_to_target) std::cout << ",reached,mean_steps,mean_steps_capped";
    std::cout << '\n';
    for (const auto& s : result.summary) {
        any_failed = any_failed || s.failed > 0;
        std::cout << s.method << ',' << s.trials << ',' << s.failed << ','
                  << fmt(s.mean_final_accuracy) << ',' << fmt(s.mean_best_accuracy) << ','
                  << fmt(s.best_final_accuracy);
        if (mode == harness::Mode::steps_to_target) {
            std::cout << ',' << s.reached_target << ','
                      << (s.mean_steps_to_target ? fmt(*s.mean_steps_to_target) : "") << ','
                      << (s.mean_steps_capped ? fmt(*s.mean_steps_capped) : "");
        }
        std::cout << '\n';
    }
    for (const auto& t : result.trials) {
        if (t.failed) {
            std::cerr << "trial " << t.method << " seed " << t.seed << " diverged at step "
                      << t.steps_run << ": " << t.failure << '\n';
        }
    }
    return any_failed ? kDiverged : 0;
}

std::vector<double> parse_point(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("bad coordinate '" + item + "' in --x0");
        }
    }
    if (out.empty()) throw UsageError("--x0 needs at least one coordinate");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gravilon optimizer experiments"};
    app.require_subcommand(1);

    ExperimentOptions acc_opts;
    auto* accuracy = app.add_subcommand("accuracy", "Test accuracy after a fixed number of steps");
    add_common(accuracy, acc_opts);
    accuracy->add_option("--steps", acc_opts.steps, "Training steps per trial");
    accuracy->add_option("--eval-every", acc_opts.eval_every, "Steps between evaluations")
        ->check(CLI::PositiveNumber);

    ExperimentOptions steps_opts;
    steps_opts.eval_every = 10;
    auto* steps = app.add_subcommand("steps", "Steps needed to reach a training-accuracy target");
    add_common(steps, steps_opts);
    steps->add_option("--target", steps_opts.target, "Training accuracy target")
        ->check(CLI::Range(0.0, 1.0));
    steps->add_option("--cap", steps_opts.cap, "Give up after this many steps")
        ->check(CLI::PositiveNumber);
    steps->add_option("--eval-every", steps_opts.eval_every, "Steps between evaluations")
        ->check(CLI::PositiveNumber);

    std::string objective_name = "quadratic";
    std::string method_name = "gravilon";
    std::string x0_text = "1";
    std::size_t max_steps = 100;
    double stop_tol = 0.0;
    std::string trajectory_out;
    auto* testbed_cmd = app.add_subcommand("testbed", "Run an optimizer on an analytic objective");
    testbed_cmd->add_option("--objective", objective_name, "abs_affine, quadratic or rosenbrock")
        ->check(CLI::IsMember({"abs_affine", "quadratic", "rosenbrock"}));
    testbed_cmd->add_option("--method", method_name, "Optimizer, e.g. gravilon or sgd:0.001");
    testbed_cmd->add_option("--x0", x0_text, "Start point, comma separated");
    testbed_cmd->add_option("--max-steps", max_steps, "Step limit")->check(CLI::PositiveNumber);
    testbed_cmd->add_option("--stop-tol", stop_tol, "Stop once f falls below this");
    testbed_cmd->add_option("--out", trajectory_out, "Trajectory CSV (stdout when omitted)");

    std::uint64_t gc_seed = 0;
    double gc_epsilon = 1e-5;
    std::size_t gc_samples = 50;
    std::size_t gc_batch = 16;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare backprop against finite differences");
    gradcheck->add_option("--seed", gc_seed, "Seed for parameters, batch and coordinates");
    gradcheck->add_option("--epsilon", gc_epsilon, "Central-difference step")
        ->check(CLI::Range(1e-7, 1e-3));
    gradcheck->add_option("--samples", gc_samples, "Coordinates to check")->check(CLI::PositiveNumber);
    gradcheck->add_option("--batch", gc_batch, "Random samples in the batch")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (accuracy->parsed()) {
            apply_config(accuracy, acc_opts.config);
            return run_experiment_command(acc_opts, harness::Mode::fixed_steps);
        }
        if (steps->parsed()) {
            apply_config(steps, steps_opts.config);
            return run_experiment_command(steps_opts, harness::Mode::steps_to_target);
        }
        if (testbed_cmd->parsed()) {
            const auto x0 = parse_point(x0_text);
            harness::MethodSpec spec;
            try {
                spec = harness::parse_method_spec(method_name);
            } catch (const InvalidInput& e) {
                throw UsageError(e.what());
            }
            testbed::Objective objective;
            try {
                objective = testbed::objective_by_name(objective_name, x0.size());
            } catch (const InvalidInput& e) {
                throw UsageError(e.what());
            }
            const auto state = optim::make_state(spec.method, spec.hyper);
            try {
                const auto traj = testbed::run_descent(objective, state, x0, max_steps, stop_tol);
                if (trajectory_out.empty()) {
                    testbed::write_trajectory_csv(std::cout, traj);
                } else {
                    std::ofstream out(trajectory_out);
                    if (!out) throw IoError("cannot write " + trajectory_out);
                    testbed::write_trajectory_csv(out, traj);
                    std::cout << "steps=" << traj.betas.size() << " final_f=" << traj.values.back();
                    try {
                        std::cout << " rate=" << testbed::geometric_rate(traj);
                    } catch (const testbed::UndefinedRateError&) {
                    }
                    std::cout << '\n';
                }
            } catch (const testbed::DivergedError& e) {
                std::cerr << e.what() << '\n';
                return kDiverged;
            }
            return 0;
        }
        if (gradcheck->parsed()) {
            const auto params = nn::init_params(gc_seed);
            Rng rng(mix_seed(gc_seed, 7));
            Matrix batch(data::kPixels, gc_batch);
            for (double& x : batch.data()) x = uniform01(rng);
            std::vector<int> labels(gc_batch);
            for (int& l : labels) l = static_cast<int>(uniform_index(rng, data::kClasses));
            nn::GradCheckOptions options;
            options.epsilon = gc_epsilon;
            options.samples = gc_samples;
            options.seed = mix_seed(gc_seed, 8);
            const auto report = nn::grad_check(params, batch, nn::make_labels(labels), options);
            std::cout << "coordinates=" << report.coordinates.size()
                      << " max_relative_error=" << report.max_relative_error << '\n';
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}
