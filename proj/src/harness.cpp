#include "gravilon/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "gravilon/error.hpp"
#include "gravilon/nn.hpp"
#include "gravilon/random.hpp"

namespace gravilon::harness {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Sub-seed streams of a trial seed.
enum Stream : std::uint64_t { kInit = 0, kBatches = 1, kEvalSubset = 2 };

}  // namespace

MethodSpec parse_method_spec(std::string_view text) {
    const std::string spec = trim(text);
    const auto colon = spec.find(':');
    MethodSpec out;
    out.method = optim::parse_method(spec.substr(0, colon));
    out.hyper = optim::default_hyper(out.method);
    out.label = spec;
    if (colon != std::string::npos) {
        if (out.method == optim::Method::gravilon || out.method == optim::Method::gravilon_momentum) {
            throw InvalidInput("'" + spec + "': Gravilon methods take no learning rate");
        }
        const std::string rate = spec.substr(colon + 1);
        double alpha = 0.0;
        const auto [ptr, ec] = std::from_chars(rate.data(), rate.data() + rate.size(), alpha);
        if (ec != std::errc{} || ptr != rate.data() + rate.size() || !(alpha > 0.0)) {
            throw InvalidInput("'" + spec + "': learning rate must be a positive number");
        }
        out.hyper.alpha = alpha;
    }
    return out;
}

std::vector<MethodSpec> parse_method_list(std::string_view comma_separated) {
    std::vector<MethodSpec> out;
    std::size_t start = 0;
    while (start <= comma_separated.size()) {
        const auto end = std::min(comma_separated.find(',', start), comma_separated.size());
        const auto item = trim(comma_separated.substr(start, end - start));
        if (!item.empty()) out.push_back(parse_method_spec(item));
        start = end + 1;
    }
    if (out.empty()) throw InvalidInput("no methods given");
    return out;
}

data::Split load_data(const DataConfig& config) {
    if (config.synthetic) {
        auto source = data::synthetic_dataset(config.synthetic_count, config.split_seed);
        if (config.synthetic_count == data::kSourceCount) return data::split(source, config.split_seed);
        const auto train = config.synthetic_count * 5 / 6;
        return data::split_at(source, train, config.split_seed);
    }
    if (config.data_dir.empty()) throw InvalidInput("no data directory given");
    return data::load_mnist(config.data_dir, config.split_mode, config.split_seed);
}

TrialResult run_trial(const TrialConfig& config, const data::Split& data) {
    if (config.batch_size == 0) throw InvalidInput("batch size must be positive");
    if (config.eval_every == 0) throw InvalidInput("eval_every must be positive");
    if (data.train.size() == 0 || data.test.size() == 0) {
        throw InvalidInput("train and test splits must be nonempty");
    }

    TrialResult result;
    result.method = config.method.label;
    result.seed = config.seed;

    nn::ParamSet params = nn::init_params(mix_seed(config.seed, kInit));
    auto state = optim::make_state(config.method.method, config.method.hyper);
    data::BatchPlan plan(config.batch_size, mix_seed(config.seed, kBatches));

    // Fixed, per-trial subsample of the training split for measuring training accuracy.
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng subset_rng(mix_seed(config.seed, kEvalSubset));
    shuffle(std::span(order), subset_rng);
    order.resize(std::min(config.train_eval_subset, order.size()));
    const auto train_probe = data::subset(data.train, order, "train-subset");

    const bool to_target = config.mode == Mode::steps_to_target;
    const std::size_t limit = to_target ? config.cap : config.steps;

    auto evaluate = [&](std::size_t step, bool with_test) {
        EvalPoint point;
        point.step = step;
        point.train_accuracy = nn::accuracy(params, train_probe);
        if (with_test) point.test_accuracy = nn::accuracy(params, data.test);
        result.eval_trace.push_back(point);
        return point;
    };

    std::size_t step = 0;
    for (;; ++step) {
        const bool scheduled = step % config.eval_every == 0;
        const bool last = step == limit;
        if (scheduled || last) {
            const auto point = evaluate(step, config.test_at_every_eval || step == 0 || last);
            if (to_target && point.train_accuracy >= config.target) {
                result.steps_to_target = step;
                if (!point.test_accuracy) {
                    result.eval_trace.back().test_accuracy = nn::accuracy(params, data.test);
                }
                break;
            }
        }
        if (last) break;

        const auto batch = data::next_batch(plan, data.train);
        const auto labels = nn::make_labels(batch.labels);
        const auto trace = nn::forward(params, batch.inputs);
        const double loss = nn::cross_entropy_loss(trace, labels);
        if (!std::isfinite(loss)) {
            result.failed = true;
            result.failure = "loss is not finite";
            break;
        }
        try {
            const auto grads = optim::clip_gradient(nn::backward(params, trace, labels),
                                                    config.clip_threshold);
            auto next = optim::step(std::move(state), nn::flatten(params), grads, loss);
            state = std::move(next.state);
            nn::assign(params, next.params);
        } catch (const InvalidInput& e) {
            result.failed = true;
            result.failure = e.what();
            break;
        }
    }
    result.steps_run = step;

    if (!result.failed) {
        result.final_test_accuracy = *result.eval_trace.back().test_accuracy;
        result.best_test_accuracy = result.final_test_accuracy;
        for (const auto& p : result.eval_trace) {
            if (p.test_accuracy) result.best_test_accuracy = std::max(result.best_test_accuracy, *p.test_accuracy);
        }
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const data::Split& data) {
    if (config.trials == 0) throw InvalidInput("trials must be at least 1");
    if (config.methods.empty()) throw InvalidInput("no methods given");

    std::vector<TrialConfig> jobs;
    for (const auto& method : config.methods) {
        for (std::size_t k = 0; k < config.trials; ++k) {
            TrialConfig job = config.trial;
            job.method = method;
            job.seed = config.base_seed + k;
            jobs.push_back(std::move(job));
        }
    }

    ExperimentResult out;
    out.trials.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> stop{false};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size() && !stop; i = next++) {
            try {
                out.trials[i] = run_trial(jobs[i], data);
            } catch (...) {
                if (!stop.exchange(true)) error = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, jobs.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    out.summary = summarize(out.trials, config.methods, config.trial.mode, config.trial.cap);
    return out;
}

std::vector<MethodSummary> summarize(const std::vector<TrialResult>& trials,
                                     const std::vector<MethodSpec>& methods, Mode mode,
                                     std::size_t cap) {
    std::vector<MethodSummary> out;
    for (const auto& method : methods) {
        MethodSummary s;
        s.method = method.label;
        double final_sum = 0.0;
        double best_sum = 0.0;
        double steps_sum = 0.0;
        double capped_sum = 0.0;
        std::size_t completed = 0;
        for (const auto& t : trials) {
            if (t.method != method.label) continue;
            ++s.trials;
            if (t.failed) {
                ++s.failed;
                continue;
            }
            ++completed;
            final_sum += t.final_test_accuracy;
            best_sum += t.best_test_accuracy;
            s.best_final_accuracy = std::max(s.best_final_accuracy, t.final_test_accuracy);
            if (t.steps_to_target) {
                ++s.reached_target;
                steps_sum += static_cast<double>(*t.steps_to_target);
                capped_sum += static_cast<double>(*t.steps_to_target);
            } else {
                capped_sum += static_cast<double>(cap);
            }
        }
        if (completed > 0) {
            s.mean_final_accuracy = final_sum / static_cast<double>(completed);
            s.mean_best_accuracy = best_sum / static_cast<double>(completed);
            if (mode == Mode::steps_to_target) s.mean_steps_capped = capped_sum / static_cast<double>(completed);
        }
        if (s.reached_target > 0) {
            s.mean_steps_to_target = steps_sum / static_cast<double>(s.reached_target);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_csv(const std::vector<TrialResult>& trials) {
    std::ostringstream out;
    out << kCsvHeader << '\n';
    char buf[32];
    for (const auto& t : trials) {
        out << t.method << ',' << t.seed << ',' << t.steps_run << ',';
        if (t.steps_to_target) out << *t.steps_to_target;
        out << ',';
        if (!t.failed) {
            std::snprintf(buf, sizeof buf, "%.6f", t.final_test_accuracy);
            out << buf << ',';
            std::snprintf(buf, sizeof buf, "%.6f", t.best_test_accuracy);
            out << buf;
        } else {
            out << ',';
        }
        out << ',' << (t.failed ? 1 : 0) << '\n';
    }
    return out.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<TrialResult>& trials) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << format_csv(trials);
    if (!out) throw IoError("write failed for " + path.string());
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        out[trim(text.substr(0, eq))] = trim(text.substr(eq + 1));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const Settings& settings) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [key, value] : settings) out << key << '=' << value << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace gravilon::harness
