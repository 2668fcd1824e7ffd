#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gravilon/data.hpp"
#include "gravilon/optim.hpp"

namespace gravilon::harness {

enum class Mode { fixed_steps, steps_to_target };

// An optimizer plus its hyperparameters, written "name" or "name:alpha",
// e.g. "adagrad:0.1". The label is the text it was parsed from.
struct MethodSpec {
    optim::Method method = optim::Method::gravilon;
    optim::HyperParams hyper;
    std::string label = "gravilon";
};

MethodSpec parse_method_spec(std::string_view text);
std::vector<MethodSpec> parse_method_list(std::string_view comma_separated);

// Defaults reproduce the MNIST protocol: 2500 steps, batches of 256, gradient
// norm clipped to 1.
struct TrialConfig {
    MethodSpec method;
    Mode mode = Mode::fixed_steps;
    std::size_t steps = 2500;
    std::size_t batch_size = 256;
    double clip_threshold = 1.0;
    std::uint64_t seed = 0;
    std::size_t eval_every = 250;
    std::size_t train_eval_subset = 2048;
    // When false the test split is only scored at step 0 and at the final step.
    bool test_at_every_eval = true;
    double target = 0.95;
    std::size_t cap = 20000;
};

struct DataConfig {
    std::filesystem::path data_dir;
    data::SplitMode split_mode = data::SplitMode::holdout;
    bool synthetic = false;
    std::size_t synthetic_count = data::kSourceCount;
    std::uint64_t split_seed = 0;
};

data::Split load_data(const DataConfig& config);

struct EvalPoint {
    std::size_t step = 0;
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
};

struct TrialResult {
    std::string method;
    std::uint64_t seed = 0;
    double final_test_accuracy = 0.0;
    // Max over the evaluated test accuracies, so never below the final one.
    double best_test_accuracy = 0.0;
    std::size_t steps_run = 0;
    std::optional<std::size_t> steps_to_target;
    std::vector<EvalPoint> eval_trace;
    bool failed = false;
    std::string failure;
};

// Initialise, then repeat: sample batch, forward, loss, backward, clip,
// optimizer step. Deterministic per (config, data). A non-finite loss or
// gradient marks the trial failed at that step instead of throwing.
TrialResult run_trial(const TrialConfig& config, const data::Split& data);

struct ExperimentConfig {
    std::vector<MethodSpec> methods;
    std::size_t trials = 15;
    std::uint64_t base_seed = 0;
    std::size_t threads = 1;
    TrialConfig trial;  // method and seed are overwritten per trial
};

struct MethodSummary {
    std::string method;
    std::size_t trials = 0;
    std::size_t failed = 0;
    double mean_final_accuracy = 0.0;
    double mean_best_accuracy = 0.0;
    double best_final_accuracy = 0.0;
    std::size_t reached_target = 0;
    std::optional<double> mean_steps_to_target;  // over trials that reached it
    std::optional<double> mean_steps_capped;     // unreached trials counted at the cap
};

struct ExperimentResult {
    std::vector<TrialResult> trials;  // ordered by (method, seed)
    std::vector<MethodSummary> summary;
};

// Runs seeds base_seed .. base_seed + trials - 1 for every method, on up to
// `threads` worker threads. Output order and content do not depend on threads.
ExperimentResult run_experiment(const ExperimentConfig& config, const data::Split& data);

std::vector<MethodSummary> summarize(const std::vector<TrialResult>& trials,
                                     const std::vector<MethodSpec>& methods, Mode mode,
                                     std::size_t cap);

inline constexpr std::string_view kCsvHeader =
    "method,seed,steps_run,steps_to_target,final_test_acc,best_test_acc,failed";

std::string format_csv(const std::vector<TrialResult>& trials);
void write_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials);

// Flat "key=value" text. Blank lines and lines starting with '#' are skipped.
using Settings = std::vector<std::pair<std::string, std::string>>;
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Settings& settings);

}  // namespace gravilon::harness
