#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "vtnet/errors.hpp"
#include "vtnet/et_data.hpp"
#include "vtnet/eval.hpp"
#include "vtnet/io.hpp"
#include "vtnet/model.hpp"
#include "vtnet/preprocess.hpp"
#include "vtnet/rng.hpp"

namespace vtnet::cli {

namespace {

constexpr std::uint64_t kTagTrainSplit = 21;
constexpr std::uint64_t kTagTrainBalance = 22;
constexpr std::uint64_t kTagTrainModel = 23;

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v, 10);
    if (ec != std::errc() || ptr != end) {
        throw InvalidConfig("bad " + what + ": '" + s + "'");
    }
    return v;
}

int to_int(const std::string& s, const std::string& key) {
    long v = 0;
    if (!io::parse_long(s, v)) {
        throw InvalidConfig("bad integer for config key '" + key + "': '" + s + "'");
    }
    return static_cast<int>(v);
}

double to_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    if (!io::parse_double(s, v)) {
        throw InvalidConfig("bad number for config key '" + key + "': '" + s + "'");
    }
    return v;
}

// Plain key=value config file shared by every verb. Precedence: flag > file >
// built-in default; the seed additionally falls back to VTNET_SEED.
class FileKeys {
  public:
    void add(const std::string& key, CLI::Option* opt,
             std::function<void(const std::string&)> set) {
        keys_.emplace_back(key, opt, std::move(set));
    }

    // Applies file values for keys whose flag was not given. Returns the keys
    // the file supplied. Unknown keys are rejected.
    std::set<std::string> apply(const std::string& path) const {
        std::set<std::string> seen;
        if (path.empty()) return seen;
        const std::string text = io::read_file(path);
        std::map<std::string, std::string> kv;
        std::size_t pos = 0;
        int line_no = 0;
        while (pos < text.size() || (pos == 0 && !text.empty())) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const auto is_space = [](char c) { return c == ' ' || c == '\t'; };
            std::size_t b = 0, e = line.size();
            while (b < e && is_space(line[b])) ++b;
            while (e > b && is_space(line[e - 1])) --e;
            line = line.substr(b, e - b);
            if (line.empty()) {
                if (pos > text.size()) break;
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw InvalidConfig(path + ":" + std::to_string(line_no) +
                                    ": expected key=value");
            }
            std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            while (!key.empty() && is_space(key.back())) key.pop_back();
            std::size_t vb = 0;
            while (vb < value.size() && is_space(value[vb])) ++vb;
            value = value.substr(vb);
            kv[key] = value;
            if (pos > text.size()) break;
        }
        for (const auto& [key, value] : kv) {
            bool known = false;
            for (const auto& [k, opt, set] : keys_) {
                if (k != key) continue;
                known = true;
                seen.insert(key);
                if (opt == nullptr || opt->count() == 0) set(value);
                break;
            }
            if (!known) {
                throw InvalidConfig(path + ": unknown config key '" + key + "'");
            }
        }
        return seen;
    }

  private:
    std::vector<std::tuple<std::string, CLI::Option*, std::function<void(const std::string&)>>>
        keys_;
};

CLI::Option* opt_int(CLI::App* cmd, FileKeys& fk, const std::string& flag,
                     const std::string& key, int& var, const std::string& desc) {
    CLI::Option* o = cmd->add_option(flag, var, desc);
    fk.add(key, o, [&var, key](const std::string& s) { var = to_int(s, key); });
    return o;
}

CLI::Option* opt_double(CLI::App* cmd, FileKeys& fk, const std::string& flag,
                        const std::string& key, double& var, const std::string& desc) {
    CLI::Option* o = cmd->add_option(flag, var, desc);
    fk.add(key, o, [&var, key](const std::string& s) { var = to_double(s, key); });
    return o;
}

CLI::Option* opt_seed(CLI::App* cmd, FileKeys& fk, std::uint64_t& var) {
    CLI::Option* o = cmd->add_option("--seed", var, "random seed");
    fk.add("seed", o, [&var](const std::string& s) { var = parse_u64(s, "config seed"); });
    return o;
}

void finish_seed(const CLI::Option* seed_opt, const std::set<std::string>& file_keys,
                 std::uint64_t& seed) {
    if (seed_opt->count() > 0 || file_keys.count("seed")) return;
    if (const char* env = std::getenv("VTNET_SEED")) {
        seed = parse_u64(env, "VTNET_SEED");
    }
}

void add_prep_flags(CLI::App* cmd, FileKeys& fk, prep::PreprocessConfig& prep) {
    opt_int(cmd, fk, "--seq-len", "seq_len", prep.seq_len, "sequence length (rows)");
    opt_double(cmd, fk, "--window", "window_s", prep.window_s, "window length in seconds");
    opt_int(cmd, fk, "--splits", "splits", prep.splits, "cyclic splits per task");
    opt_int(cmd, fk, "--downsize", "downsize", prep.downsize, "image downsize factor");
    opt_double(cmd, fk, "--dot-intensity", "dot_intensity", prep.dot_intensity,
               "intensity added per gaze point");
    opt_double(cmd, fk, "--line-intensity", "line_intensity", prep.line_intensity,
               "intensity added per line pixel");
    opt_double(cmd, fk, "--trim", "trim_ms", prep.trim_ms, "pre-report trim in ms");
}

void add_model_flags(CLI::App* cmd, FileKeys& fk, model::VtnetConfig& mc) {
    opt_int(cmd, fk, "--hidden", "hidden_size", mc.hidden_size, "GRU hidden size");
    opt_int(cmd, fk, "--conv1", "conv1_filters", mc.conv1_filters, "first conv filters");
    opt_int(cmd, fk, "--conv2", "conv2_filters", mc.conv2_filters, "second conv filters");
    opt_int(cmd, fk, "--kernel", "kernel", mc.kernel, "conv kernel size");
    opt_int(cmd, fk, "--head", "head_hidden", mc.head_hidden, "classifier hidden size");
    opt_int(cmd, fk, "--epochs", "max_epochs", mc.max_epochs, "maximum training epochs");
    opt_double(cmd, fk, "--lr", "lr0", mc.lr0, "initial learning rate");
    opt_int(cmd, fk, "--batch", "batch_size", mc.batch_size, "mini-batch size");
    opt_int(cmd, fk, "--patience", "patience", mc.patience, "early stopping patience");
}

const std::vector<std::string> kVariantNames{"gru_only", "cnn_only", "vtnet"};
const std::vector<std::string> kSignalModes{"temporal_only", "spatial_only", "both", "none",
                                            "split"};

// ---- verb states (shared_ptr-held so CLI11 option bindings stay valid) ----

struct SynthState {
    data::SynthConfig sc;
    std::string mode_str = "both";
    std::string out;
    std::string config_path;
    FileKeys fk;
    CLI::Option* seed_opt = nullptr;
};

struct PreprocessState {
    std::string data, out, config_path;
    prep::PreprocessConfig prep;
    FileKeys fk;
};

struct RenderState {
    std::string data, task_id, out, config_path;
    prep::PreprocessConfig prep;
    FileKeys fk;
};

struct TrainState {
    std::string data, out, log, config_path;
    std::string variant_str = "vtnet";
    double val_frac = 0.2;
    int smote_percent = 200;
    int smote_k = 5;
    std::uint64_t seed = 0;
    model::VtnetConfig mc;
    prep::PreprocessConfig prep;
    FileKeys fk;
    CLI::Option* seed_opt = nullptr;
};

struct CvState {
    std::string data, out, config_path;
    std::vector<std::string> variant_strs;
    int runs = 10;
    int folds = 10;
    int jobs = 1;
    double val_frac = 0.2;
    int smote_percent = 200;
    int smote_k = 5;
    std::uint64_t seed = 0;
    bool table = false;
    model::VtnetConfig mc;
    prep::PreprocessConfig prep;
    FileKeys fk;
    CLI::Option* seed_opt = nullptr;
};

struct GradcheckState {
    std::uint64_t seed = 0;
    int rounds = 1;
    std::string config_path;
    FileKeys fk;
    CLI::Option* seed_opt = nullptr;
};

struct ReportState {
    std::string in, out;
    std::string format = "table";
};

std::vector<std::string> dataset_users(const data::Dataset& ds) {
    std::vector<std::string> users;
    std::set<std::string> seen;
    for (const data::TaskRecord& t : ds.tasks) {
        if (seen.insert(t.user_id).second) users.push_back(t.user_id);
    }
    return users;
}

void run_synth(SynthState& st) {
    const std::set<std::string> keys = st.fk.apply(st.config_path);
    finish_seed(st.seed_opt, keys, st.sc.seed);
    st.sc.signal_mode = data::signal_mode_from_string(st.mode_str);
    const data::Dataset ds = data::synth_generate(st.sc);
    data::write_dataset(ds, st.out);
    long confused = 0;
    for (const data::TaskRecord& t : ds.tasks) {
        if (t.label == data::Label::Confused) ++confused;
    }
    std::cout << "wrote " << ds.tasks.size() << " tasks (" << confused << " confused) to "
              << st.out << "\n";
}

void run_preprocess(PreprocessState& st) {
    (void)st.fk.apply(st.config_path);
    const data::Dataset ds = data::load_dataset_dir(st.data);
    prep::BuildResult br = prep::build_items(ds, st.prep);
    const prep::FeatureStats stats =
        prep::compute_stats_items(br.items, ds.screen_width, ds.screen_height);
    for (prep::DataItem& item : br.items) {
        item.sequence = prep::normalize(item.sequence, stats);
    }
    prep::export_items(br.items, st.out);
    const char* names[4] = {"left_pupil", "left_dist", "right_pupil", "right_dist"};
    std::string cfg;
    for (int c = 0; c < 4; ++c) {
        cfg += "mean_" + std::string(names[c]) + "=" + io::format_double(stats.mean[c]) + "\n";
    }
    for (int c = 0; c < 4; ++c) {
        cfg += "sd_" + std::string(names[c]) + "=" + io::format_double(stats.sd[c]) + "\n";
    }
    cfg += "screen_width=" + std::to_string(stats.screen_width) + "\n";
    cfg += "screen_height=" + std::to_string(stats.screen_height) + "\n";
    io::atomic_write_file(std::filesystem::path(st.out) / "stats.cfg", cfg);
    std::cout << "exported " << br.items.size() << " items to " << st.out << " (dropped "
              << br.dropped_empty_trim << " empty-after-trim, " << br.dropped_no_gaze
              << " no-gaze)\n";
}

void run_render(RenderState& st) {
    (void)st.fk.apply(st.config_path);
    const data::Dataset ds = data::load_dataset_dir(st.data);
    const data::TaskRecord* found = nullptr;
    for (const data::TaskRecord& t : ds.tasks) {
        if (t.task_id == st.task_id) {
            found = &t;
            break;
        }
    }
    if (found == nullptr) throw UnknownTask("no task with id '" + st.task_id + "'");
    data::TaskRecord task = *found;
    if (task.label == data::Label::Confused) {
        task = data::trim_pre_report(task, st.prep.trim_ms);
    }
    const prep::ScanPathImage img =
        prep::rasterize_scanpath(task, ds.screen_width, ds.screen_height, st.prep.downsize,
                                 st.prep.dot_intensity, st.prep.line_intensity);
    prep::write_pgm(img, st.out);
    std::cout << "wrote " << img.width << "x" << img.height << " scan path to " << st.out
              << "\n";
}

void run_train(TrainState& st) {
    const std::set<std::string> keys = st.fk.apply(st.config_path);
    finish_seed(st.seed_opt, keys, st.seed);
    const model::Variant variant = model::variant_from_string(st.variant_str);
    const data::Dataset ds = data::load_dataset_dir(st.data);

    eval::EvalConfig ec;
    ec.val_frac = st.val_frac;
    ec.smote_percent = st.smote_percent;
    ec.smote_k = st.smote_k;
    ec.base_seed = st.seed;
    ec.model = st.mc;
    ec.prep = st.prep;

    const std::vector<std::string> users = dataset_users(ds);
    auto [fit_users, val_users] =
        eval::split_validation(ds, users, st.val_frac, mix_seed(st.seed, {kTagTrainSplit}));
    eval::FoldPlan plan;
    plan.train_users = std::move(fit_users);
    plan.val_users = std::move(val_users);
    const eval::FoldData fd = eval::prepare_fold(ds, plan, ec);
    const std::vector<prep::DataItem> train_items =
        eval::balance_training_set(fd.fit, variant, ec, mix_seed(st.seed, {kTagTrainBalance}));

    model::VtnetConfig mc = eval::resolve_model_geometry(st.mc, ds, st.prep);
    mc.variant = variant;
    mc.seed = mix_seed(st.seed, {kTagTrainModel});
    const model::VtnetModel m = model::fit(model::init_model(mc), train_items, fd.val);
    model::save_checkpoint(m, st.out);
    if (!st.log.empty()) io::atomic_write_file(st.log, model::history_tsv(m));

    double best = 0.0;
    for (const model::EpochRecord& r : m.history) best = std::max(best, r.val_combined);
    std::cout << "trained " << m.history.size() << " epochs (" << train_items.size()
              << " items); best val combined " << io::format_double(best) << "; checkpoint "
              << st.out << "\n";
}

void run_cv_verb(CvState& st) {
    const std::set<std::string> keys = st.fk.apply(st.config_path);
    finish_seed(st.seed_opt, keys, st.seed);
    const data::Dataset ds = data::load_dataset_dir(st.data);
    std::vector<std::string> names = st.variant_strs;
    if (names.empty()) names = kVariantNames;
    std::vector<model::Variant> variants;
    variants.reserve(names.size());
    for (const std::string& n : names) variants.push_back(model::variant_from_string(n));

    eval::EvalConfig ec;
    ec.runs = st.runs;
    ec.folds = st.folds;
    ec.val_frac = st.val_frac;
    ec.smote_percent = st.smote_percent;
    ec.smote_k = st.smote_k;
    ec.base_seed = st.seed;
    ec.jobs = st.jobs;
    ec.model = st.mc;
    ec.prep = st.prep;

    const eval::EvalReport rep = eval::run_cv(ds, variants, ec);
    io::atomic_write_file(st.out, eval::report_to_json(rep));
    if (st.table) {
        std::cout << eval::report_to_table(rep);
    } else {
        std::cout << "wrote " << rep.entries.size() << " fold entries to " << st.out << "\n";
    }
}

int run_gradcheck(GradcheckState& st) {
    const std::set<std::string> keys = st.fk.apply(st.config_path);
    finish_seed(st.seed_opt, keys, st.seed);
    if (st.rounds < 1) throw InvalidConfig("rounds must be >= 1");
    std::vector<model::LayerCheck> worst;
    for (int round = 0; round < st.rounds; ++round) {
        const std::vector<model::LayerCheck> checks =
            model::run_gradient_suite(st.seed + static_cast<std::uint64_t>(round));
        if (worst.empty()) {
            worst = checks;
        } else {
            for (std::size_t i = 0; i < checks.size(); ++i) {
                if (checks[i].max_rel_err > worst[i].max_rel_err) worst[i] = checks[i];
            }
        }
    }
    bool all_pass = true;
    for (const model::LayerCheck& c : worst) {
        std::cout << c.name << "\t" << io::format_double(c.max_rel_err) << "\t"
                  << (c.pass ? "PASS" : "FAIL") << "\n";
        all_pass = all_pass && c.pass;
    }
    if (!all_pass) {
        std::cerr << "error: gradient check exceeded tolerance 1e-4\n";
        return 1;
    }
    return 0;
}

void run_report(ReportState& st) {
    const eval::EvalReport rep = eval::report_from_json(io::read_file(st.in));
    const std::string rendered =
        st.format == "json" ? eval::report_to_json(rep) : eval::report_to_table(rep);
    if (st.out.empty()) {
        std::cout << rendered;
    } else {
        io::atomic_write_file(st.out, rendered);
    }
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    int rc = 0;
    CLI::App app{"eye-tracking confusion detection pipeline"};
    app.require_subcommand(1);

    auto sy = std::make_shared<SynthState>();
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", sy->out, "output dataset directory")->required();
    synth->add_option("--config", sy->config_path, "key=value config file");
    opt_int(synth, sy->fk, "--users", "users", sy->sc.n_users, "number of users");
    opt_int(synth, sy->fk, "--tasks-per-user", "tasks_per_user", sy->sc.tasks_per_user,
            "tasks per user");
    opt_double(synth, sy->fk, "--confused-fraction", "confused_fraction",
               sy->sc.confused_fraction, "fraction of confused tasks");
    CLI::Option* mode_opt = synth->add_option("--signal-mode", sy->mode_str,
                                              "temporal_only|spatial_only|both|none|split");
    mode_opt->check(CLI::IsMember(kSignalModes));
    sy->fk.add("signal_mode", mode_opt,
               [p = &sy->mode_str](const std::string& s) { *p = s; });
    opt_double(synth, sy->fk, "--signal-strength", "signal_strength", sy->sc.signal_strength,
               "planted cue strength in [0,1]");
    opt_double(synth, sy->fk, "--mean-duration", "mean_duration_s", sy->sc.mean_duration_s,
               "mean task duration (s)");
    opt_double(synth, sy->fk, "--sd-duration", "sd_duration_s", sy->sc.sd_duration_s,
               "sd of task duration (s)");
    opt_int(synth, sy->fk, "--screen-width", "screen_width", sy->sc.screen_width,
            "screen width (px)");
    opt_int(synth, sy->fk, "--screen-height", "screen_height", sy->sc.screen_height,
            "screen height (px)");
    opt_double(synth, sy->fk, "--rate", "sampling_rate_hz", sy->sc.sampling_rate_hz,
               "sampling rate (Hz)");
    sy->seed_opt = opt_seed(synth, sy->fk, sy->sc.seed);
    synth->callback([sy]() { run_synth(*sy); });

    auto pp = std::make_shared<PreprocessState>();
    CLI::App* preprocess =
        app.add_subcommand("preprocess", "build and export normalized data items");
    preprocess->add_option("--data", pp->data, "dataset directory")->required();
    preprocess->add_option("--out", pp->out, "output directory")->required();
    preprocess->add_option("--config", pp->config_path, "key=value config file");
    add_prep_flags(preprocess, pp->fk, pp->prep);
    preprocess->callback([pp]() { run_preprocess(*pp); });

    auto rd = std::make_shared<RenderState>();
    CLI::App* render = app.add_subcommand("render", "rasterize one task's scan path to PGM");
    render->add_option("--data", rd->data, "dataset directory")->required();
    render->add_option("--task", rd->task_id, "task id")->required();
    render->add_option("--out", rd->out, "output .pgm path")->required();
    render->add_option("--config", rd->config_path, "key=value config file");
    add_prep_flags(render, rd->fk, rd->prep);
    render->callback([rd]() { run_render(*rd); });

    auto tr = std::make_shared<TrainState>();
    CLI::App* train = app.add_subcommand("train", "train one model and save a checkpoint");
    train->add_option("--data", tr->data, "dataset directory")->required();
    train->add_option("--out", tr->out, "checkpoint output path")->required();
    train->add_option("--log", tr->log, "training history TSV path");
    train->add_option("--config", tr->config_path, "key=value config file");
    train->add_option("--variant", tr->variant_str, "model variant")
        ->check(CLI::IsMember(kVariantNames));
    opt_double(train, tr->fk, "--val-frac", "val_frac", tr->val_frac,
               "validation holdout fraction");
    opt_int(train, tr->fk, "--smote-percent", "smote_percent", tr->smote_percent,
            "SMOTE oversampling percent");
    opt_int(train, tr->fk, "--smote-k", "smote_k", tr->smote_k, "SMOTE neighbor count");
    add_model_flags(train, tr->fk, tr->mc);
    add_prep_flags(train, tr->fk, tr->prep);
    tr->seed_opt = opt_seed(train, tr->fk, tr->seed);
    train->callback([tr]() { run_train(*tr); });

    auto cv = std::make_shared<CvState>();
    CLI::App* cv_cmd = app.add_subcommand("cv", "run the cross-validation protocol");
    cv_cmd->add_option("--data", cv->data, "dataset directory")->required();
    cv_cmd->add_option("--out", cv->out, "report JSON output path")->required();
    cv_cmd->add_option("--config", cv->config_path, "key=value config file");
    cv_cmd->add_option("--variant", cv->variant_strs, "model variant (repeatable)")
        ->check(CLI::IsMember(kVariantNames));
    opt_int(cv_cmd, cv->fk, "--runs", "runs", cv->runs, "number of CV runs");
    opt_int(cv_cmd, cv->fk, "--folds", "folds", cv->folds, "folds per run");
    opt_int(cv_cmd, cv->fk, "--jobs", "jobs", cv->jobs, "parallel fold jobs");
    opt_double(cv_cmd, cv->fk, "--val-frac", "val_frac", cv->val_frac,
               "validation holdout fraction");
    opt_int(cv_cmd, cv->fk, "--smote-percent", "smote_percent", cv->smote_percent,
            "SMOTE oversampling percent");
    opt_int(cv_cmd, cv->fk, "--smote-k", "smote_k", cv->smote_k, "SMOTE neighbor count");
    cv_cmd->add_flag("--table", cv->table, "print the aggregate table to stdout");
    add_model_flags(cv_cmd, cv->fk, cv->mc);
    add_prep_flags(cv_cmd, cv->fk, cv->prep);
    cv->seed_opt = opt_seed(cv_cmd, cv->fk, cv->seed);
    cv_cmd->callback([cv]() { run_cv_verb(*cv); });

    auto gc = std::make_shared<GradcheckState>();
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference checks of every layer gradient");
    gradcheck->add_option("--config", gc->config_path, "key=value config file");
    gradcheck->add_option("--rounds", gc->rounds, "number of seeds to test");
    gc->seed_opt = opt_seed(gradcheck, gc->fk, gc->seed);
    gradcheck->callback([gc, &rc]() { rc = run_gradcheck(*gc); });

    auto rp = std::make_shared<ReportState>();
    CLI::App* report = app.add_subcommand("report", "render a CV report as json or table");
    report->add_option("--in", rp->in, "report JSON path")->required();
    report->add_option("--format", rp->format, "json|table")
        ->check(CLI::IsMember({"json", "table"}));
    report->add_option("--out", rp->out, "output path (default stdout)");
    report->callback([rp]() { run_report(*rp); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

int dispatch(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("vtnet");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& s : full) argv.push_back(s.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace vtnet::cli
