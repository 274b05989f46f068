// Acceptance suite for the confusion-detection pipeline. Each criterion
// prints one [PASS]/[FAIL] line; the process exits nonzero if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vtnet/errors.hpp"
#include "vtnet/et_data.hpp"
#include "vtnet/eval.hpp"
#include "vtnet/model.hpp"
#include "vtnet/preprocess.hpp"
#include "vtnet/rng.hpp"

using namespace vtnet;

namespace {

int g_failures = 0;

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct CheckFailed {
    std::string message;
};

void require(bool cond, const std::string& message) {
    if (!cond) throw CheckFailed{message};
}

void criterion(int id, const std::string& text, const std::function<void()>& body) {
    const double t0 = now_s();
    std::string failure;
    try {
        body();
    } catch (const CheckFailed& f) {
        failure = f.message;
    } catch (const std::exception& e) {
        failure = std::string("exception: ") + e.what();
    }
    const double dt = now_s() - t0;
    if (failure.empty()) {
        std::printf("[PASS] %d. %s (%.1fs)\n", id, text.c_str(), dt);
    } else {
        std::printf("[FAIL] %d. %s (%.1fs): %s\n", id, text.c_str(), dt, failure.c_str());
        ++g_failures;
    }
    std::fflush(stdout);
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

// ---- shared dataset builders ----------------------------------------------

data::RawSample sample_at(double ts, double x, double y) {
    data::RawSample s;
    s.timestamp_ms = ts;
    s.left_x = s.right_x = x;
    s.left_y = s.right_y = y;
    s.left_pupil = s.right_pupil = 3.5;
    s.left_dist = s.right_dist = 620.0;
    return s;
}

// Hand-built dataset with a fixed per-user label layout, so every user holds
// both classes no matter how the folds fall.
data::Dataset handmade_dataset(int n_users, int tasks_per_user, int confused_per_user) {
    data::Dataset ds;
    ds.screen_width = 640;
    ds.screen_height = 512;
    ds.sampling_rate_hz = 25.0;
    for (int u = 0; u < n_users; ++u) {
        const std::string user = "h" + std::to_string(u);
        for (int t = 0; t < tasks_per_user; ++t) {
            data::TaskRecord task;
            task.user_id = user;
            task.task_id = user + "_t" + std::to_string(t);
            for (int i = 0; i < 250; ++i) {
                const double x = 40.0 + 40.0 * ((i * 7 + u + 3 * t) % 13);
                const double y = 30.0 + 30.0 * ((i * 5 + 2 * u + t) % 11);
                task.samples.push_back(sample_at(i * 40.0, x, y));
            }
            if (t < confused_per_user) {
                task.label = data::Label::Confused;
                task.report_time_ms = task.samples.back().timestamp_ms;
            }
            ds.tasks.push_back(std::move(task));
        }
    }
    return ds;
}

// 16 trivially separable items: constant-sign sequences and corner blobs.
std::vector<prep::DataItem> toy_items(const model::VtnetConfig& cfg) {
    std::vector<prep::DataItem> items;
    for (int i = 0; i < 16; ++i) {
        const bool conf = i % 2 == 0;
        prep::DataItem it;
        it.label = conf ? data::Label::Confused : data::Label::NotConfused;
        it.parent_task_id = (conf ? "c" : "n") + std::to_string(i);
        it.user_id = "u" + std::to_string(i % 4);
        it.split_index = 0;
        it.sequence.rows = cfg.seq_len;
        it.sequence.values.assign(static_cast<std::size_t>(cfg.seq_len) * 8, 0.0);
        it.sequence.mask.assign(static_cast<std::size_t>(cfg.seq_len), 1);
        it.sequence.length_valid = cfg.seq_len;
        Rng rng(static_cast<std::uint64_t>(i) * 31 + 5);
        const double fill = conf ? 0.8 : -0.8;
        for (auto& v : it.sequence.values) v = fill + 0.1 * rng.uniform(-1.0, 1.0);
        auto img = std::make_shared<prep::ScanPathImage>();
        img->height = cfg.image_height;
        img->width = cfg.image_width;
        img->pixels.assign(static_cast<std::size_t>(cfg.image_height) * cfg.image_width, 0.0);
        const int y0 = conf ? 0 : cfg.image_height - 4;
        const int x0 = conf ? 0 : cfg.image_width - 4;
        for (int y = y0; y < y0 + 4; ++y) {
            for (int x = x0; x < x0 + 4; ++x) img->at(y, x) = 1.0;
        }
        it.image = img;
        items.push_back(std::move(it));
    }
    return items;
}

model::VtnetConfig toy_config() {
    model::VtnetConfig cfg;
    cfg.hidden_size = 8;
    cfg.conv1_filters = 2;
    cfg.conv2_filters = 3;
    cfg.kernel = 3;
    cfg.head_hidden = 16;
    cfg.max_epochs = 100;
    cfg.lr0 = 0.01;
    cfg.batch_size = 4;
    cfg.patience = 100;
    cfg.seed = 12;
    cfg.seq_len = 10;
    cfg.seq_features = 8;
    cfg.image_height = 12;
    cfg.image_width = 12;
    return cfg;
}

// ---- independent oracles ---------------------------------------------------

model::Prediction pred(double score, data::Label label) {
    model::Prediction p;
    p.score = score;
    p.label = label;
    return p;
}

double oracle_threshold(const std::vector<model::Prediction>& val) {
    std::vector<double> scores;
    long pos = 0, neg = 0;
    for (const auto& p : val) {
        scores.push_back(p.score);
        (p.label == data::Label::Confused ? pos : neg)++;
    }
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> cands{0.0, 1.0};
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) {
        cands.push_back(0.5 * (scores[i] + scores[i + 1]));
    }
    std::sort(cands.begin(), cands.end());
    double best = cands.front();
    double best_d2 = std::numeric_limits<double>::infinity();
    for (double theta : cands) {
        long tp = 0, tn = 0;
        for (const auto& p : val) {
            if (p.label == data::Label::Confused) {
                if (p.score >= theta) ++tp;
            } else if (p.score < theta) {
                ++tn;
            }
        }
        const double sens = static_cast<double>(tp) / static_cast<double>(pos);
        const double spec = static_cast<double>(tn) / static_cast<double>(neg);
        const double d2 = (1.0 - sens) * (1.0 - sens) + (1.0 - spec) * (1.0 - spec);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = theta;
        }
    }
    return best;
}

double trapezoid_auc(const std::vector<model::Prediction>& preds) {
    std::vector<std::pair<double, int>> sp;
    double P = 0, N = 0;
    for (const auto& p : preds) {
        const int y = p.label == data::Label::Confused ? 1 : 0;
        sp.emplace_back(p.score, y);
        (y ? P : N) += 1.0;
    }
    std::sort(sp.begin(), sp.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    double area = 0.0, tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < sp.size()) {
        const double s = sp[i].first;
        const double tp0 = tp, fp0 = fp;
        while (i < sp.size() && sp[i].first == s) {
            (sp[i].second ? tp : fp) += 1.0;
            ++i;
        }
        area += (fp - fp0) * (tp + tp0) / 2.0;
    }
    return area / (P * N);
}

// ---- per-criterion bodies ---------------------------------------------------

void check_gradients() {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto checks = model::run_gradient_suite(seed);
        require(checks.size() == 6, "expected 6 layer checks");
        bool end_to_end = false;
        for (const auto& c : checks) {
            require(c.pass && c.max_rel_err < 1e-4,
                    c.name + " seed " + std::to_string(seed) + " rel err " +
                        fmt(c.max_rel_err));
            end_to_end = end_to_end || c.name.find("end") != std::string::npos;
        }
        require(end_to_end, "no end-to-end check in the suite");
    }
}

void check_bookkeeping() {
    data::SynthConfig sc;
    sc.n_users = 136;
    sc.tasks_per_user = 40;
    sc.confused_fraction = 112.0 / 5440.0;
    sc.signal_mode = data::SignalMode::Both;
    sc.signal_strength = 1.0;
    sc.mean_duration_s = 6.0;
    sc.sd_duration_s = 3.0;
    sc.seed = 2026;
    sc.screen_width = 320;
    sc.screen_height = 256;
    sc.sampling_rate_hz = 24.0;
    const data::Dataset ds = data::synth_generate(sc);
    require(ds.tasks.size() == 5440, "expected 5440 tasks");
    std::set<std::string> users;
    long confused_tasks = 0;
    for (const auto& t : ds.tasks) {
        users.insert(t.user_id);
        if (t.label == data::Label::Confused) ++confused_tasks;
    }
    require(users.size() == 136, "expected 136 users");
    require(confused_tasks == 112,
            "expected 112 confused tasks, got " + std::to_string(confused_tasks));

    prep::PreprocessConfig pc;
    pc.seq_len = 60;
    const prep::BuildResult built = prep::build_items(ds, pc);
    require(built.dropped_empty_trim == 0 && built.dropped_no_gaze == 0,
            "no task may be dropped");
    std::vector<prep::FeatureSequence> confused_seqs;
    for (const auto& it : built.items) {
        if (it.label == data::Label::Confused) confused_seqs.push_back(it.sequence);
    }
    require(confused_seqs.size() == 448, "expected exactly 448 confused items, got " +
                                             std::to_string(confused_seqs.size()));

    const prep::SmoteResult res = prep::smote(confused_seqs, 200, 5, 99);
    require(res.synthetic.size() == 896, "expected 896 synthetic items, got " +
                                             std::to_string(res.synthetic.size()));
    require(confused_seqs.size() + res.synthetic.size() == 1344,
            "expected 1344 confused items after oversampling");
}

void check_cyclic_roundtrip() {
    Rng rng(333);
    long mismatches = 0;
    for (int round = 0; round < 1000; ++round) {
        const std::size_t n = rng.uniform_index(401);
        const std::size_t k = 1 + rng.uniform_index(8);
        std::vector<long> xs(n);
        for (std::size_t i = 0; i < n; ++i) xs[i] = static_cast<long>(rng.uniform_index(1u << 30));
        const auto parts = prep::cyclic_split(xs, k);
        require(parts.size() == k, "wrong part count");
        std::size_t total = 0;
        for (const auto& p : parts) total += p.size();
        require(total == n, "parts lose elements");
        for (std::size_t i = 0; i < n; ++i) {
            if (parts[i % k][i / k] != xs[i]) ++mismatches;
        }
    }
    require(mismatches == 0, std::to_string(mismatches) + " mismatches");
}

void check_protocol_shape() {
    const data::Dataset ds = handmade_dataset(10, 6, 2);
    eval::EvalConfig cfg;
    cfg.runs = 10;
    cfg.folds = 10;
    cfg.val_frac = 0.2;
    cfg.smote_percent = 200;
    cfg.smote_k = 3;
    cfg.base_seed = 400;
    cfg.jobs = 1;
    cfg.model.hidden_size = 8;
    cfg.model.conv1_filters = 2;
    cfg.model.conv2_filters = 3;
    cfg.model.kernel = 3;
    cfg.model.head_hidden = 8;
    cfg.model.max_epochs = 2;
    cfg.model.lr0 = 0.005;
    cfg.model.batch_size = 16;
    cfg.model.patience = 5;
    cfg.prep.seq_len = 12;
    const std::vector<model::Variant> variants{
        model::Variant::GruOnly, model::Variant::CnnOnly, model::Variant::Vtnet};

    const eval::EvalReport rep = eval::run_cv(ds, variants, cfg);
    std::map<model::Variant, long> per_variant;
    for (const auto& e : rep.entries) ++per_variant[e.variant];
    for (model::Variant v : variants) {
        require(per_variant[v] == 100, std::string("expected 100 entries for ") +
                                           model::to_string(v) + ", got " +
                                           std::to_string(per_variant[v]));
    }

    std::set<std::string> all_users;
    for (const auto& t : ds.tasks) all_users.insert(t.user_id);
    const auto plans = eval::make_fold_plans(ds, cfg);
    require(plans.size() == 100, "expected 100 fold plans");
    for (int r = 0; r < cfg.runs; ++r) {
        std::set<std::string> covered;
        for (const auto& p : plans) {
            if (p.run != r) continue;
            for (const auto& u : p.test_users) {
                require(covered.insert(u).second, "user " + u + " tested twice in run " +
                                                      std::to_string(r));
            }
        }
        require(covered == all_users, "test folds do not cover every user in run " +
                                          std::to_string(r));
    }

    // Sampled folds: no synthetic item anywhere near scoring, and the
    // normalization statistics equal those of the raw fit items alone.
    for (std::size_t pi : {std::size_t{0}, std::size_t{41}, std::size_t{99}}) {
        const eval::FoldPlan& plan = plans[pi];
        const eval::FoldData fd = eval::prepare_fold(ds, plan, cfg);
        for (const auto* set : {&fd.fit, &fd.val, &fd.test}) {
            for (const auto& it : *set) require(!it.synthetic, "synthetic item in fold data");
        }
        data::Dataset fit_only;
        fit_only.screen_width = ds.screen_width;
        fit_only.screen_height = ds.screen_height;
        fit_only.sampling_rate_hz = ds.sampling_rate_hz;
        const std::set<std::string> fit_users(plan.train_users.begin(),
                                              plan.train_users.end());
        for (const auto& t : ds.tasks) {
            if (fit_users.count(t.user_id)) fit_only.tasks.push_back(t);
        }
        const auto raw = prep::build_items(fit_only, cfg.prep);
        const prep::FeatureStats expect =
            prep::compute_stats_items(raw.items, ds.screen_width, ds.screen_height);
        for (int c = 0; c < 4; ++c) {
            require(fd.stats.mean[c] == expect.mean[c] && fd.stats.sd[c] == expect.sd[c],
                    "fold statistics drawn from more than the fit items");
        }
        for (const auto& it : fd.test) {
            require(fit_users.count(it.user_id) == 0, "test item from a training user");
        }
    }
}

void check_oracles() {
    Rng rng(0xACCE97);
    for (int round = 0; round < 1000; ++round) {
        const int n = 2 + static_cast<int>(rng.uniform_index(11));
        std::vector<model::Prediction> val;
        val.push_back(pred(rng.uniform01(), data::Label::Confused));
        val.push_back(pred(rng.uniform01(), data::Label::NotConfused));
        for (int i = 2; i < n; ++i) {
            double s = rng.uniform01();
            if (rng.bernoulli(0.5)) s = std::floor(s * 10.0) / 10.0;
            val.push_back(pred(
                s, rng.bernoulli(0.5) ? data::Label::Confused : data::Label::NotConfused));
        }
        const double got = eval::select_threshold(val);
        const double want = oracle_threshold(val);
        require(got == want, "threshold " + fmt(got) + " oracle " + fmt(want) + " round " +
                                 std::to_string(round));
    }
    for (int round = 0; round < 500; ++round) {
        const int n = 2 + static_cast<int>(rng.uniform_index(29));
        std::vector<model::Prediction> preds;
        preds.push_back(pred(rng.uniform01(), data::Label::Confused));
        preds.push_back(pred(rng.uniform01(), data::Label::NotConfused));
        for (int i = 2; i < n; ++i) {
            double s = rng.uniform01();
            if (rng.bernoulli(0.4)) s = std::floor(s * 8.0) / 8.0;
            preds.push_back(pred(
                s, rng.bernoulli(0.5) ? data::Label::Confused : data::Label::NotConfused));
        }
        const eval::Metrics m = eval::compute_metrics(preds, 0.5);
        require(m.auc.has_value(), "missing AUC");
        const double want = trapezoid_auc(preds);
        require(std::abs(*m.auc - want) <= 1e-9,
                "AUC " + fmt(*m.auc) + " vs trapezoid " + fmt(want));
    }
}

eval::EvalConfig signal_eval_config() {
    eval::EvalConfig cfg;
    cfg.val_frac = 0.2;
    cfg.smote_percent = 200;
    cfg.smote_k = 5;
    cfg.jobs = 1;
    cfg.model.kernel = 5;
    cfg.model.lr0 = 1e-3;
    cfg.prep.seq_len = 30;
    return cfg;
}

data::SynthConfig signal_synth_config() {
    data::SynthConfig sc;
    sc.signal_strength = 1.0;
    sc.sampling_rate_hz = 24.0;
    sc.screen_width = 256;
    sc.screen_height = 192;
    sc.mean_duration_s = 5.0;
    sc.sd_duration_s = 2.0;
    return sc;
}

void check_separable_signal() {
    data::SynthConfig sc = signal_synth_config();
    sc.n_users = 40;
    sc.tasks_per_user = 40;
    sc.confused_fraction = 0.1;
    sc.signal_mode = data::SignalMode::Both;
    sc.seed = 61;
    const data::Dataset ds = data::synth_generate(sc);

    eval::EvalConfig cfg = signal_eval_config();
    cfg.runs = 2;
    cfg.folds = 10;
    cfg.base_seed = 600;
    cfg.model.hidden_size = 32;
    cfg.model.conv1_filters = 6;
    cfg.model.conv2_filters = 16;
    cfg.model.head_hidden = 32;
    cfg.model.max_epochs = 25;
    cfg.model.batch_size = 64;
    cfg.model.patience = 8;

    const std::vector<model::Variant> variants{model::Variant::Vtnet};
    const eval::EvalReport rep = eval::run_cv(ds, variants, cfg);
    require(rep.aggregates.size() == 1, "expected one aggregate");
    const double combined = rep.aggregates[0].mean_combined;
    require(combined >= 0.95,
            "mean combined accuracy " + fmt(combined) + " below 0.95");
}

void check_fusion_advantage() {
    data::SynthConfig sc = signal_synth_config();
    sc.n_users = 20;
    sc.tasks_per_user = 16;
    sc.confused_fraction = 0.2;
    sc.signal_mode = data::SignalMode::Split;
    sc.mean_duration_s = 9.0;
    sc.seed = 71;
    const data::Dataset ds = data::synth_generate(sc);

    eval::EvalConfig cfg = signal_eval_config();
    cfg.runs = 5;
    cfg.folds = 10;
    cfg.base_seed = 700;
    cfg.model.hidden_size = 16;
    cfg.model.conv1_filters = 4;
    cfg.model.conv2_filters = 8;
    cfg.model.head_hidden = 16;
    cfg.model.max_epochs = 12;
    cfg.model.lr0 = 2e-3;
    cfg.model.batch_size = 32;
    cfg.model.patience = 6;

    const std::vector<model::Variant> variants{
        model::Variant::GruOnly, model::Variant::CnnOnly, model::Variant::Vtnet};
    const eval::EvalReport rep = eval::run_cv(ds, variants, cfg);
    require(rep.aggregates.size() == 3, "expected three aggregates");
    const double gru = rep.aggregates[0].mean_combined;
    const double cnn = rep.aggregates[1].mean_combined;
    const double fused = rep.aggregates[2].mean_combined;
    require(fused >= gru + 0.05, "fused " + fmt(fused) + " does not beat sequences-only " +
                                     fmt(gru) + " by 0.05");
    require(fused >= cnn + 0.05, "fused " + fmt(fused) + " does not beat images-only " +
                                     fmt(cnn) + " by 0.05");
}

void check_null_control() {
    data::SynthConfig sc = signal_synth_config();
    sc.n_users = 16;
    sc.tasks_per_user = 12;
    sc.confused_fraction = 0.25;
    sc.signal_mode = data::SignalMode::None;
    sc.seed = 81;
    const data::Dataset ds = data::synth_generate(sc);

    eval::EvalConfig cfg = signal_eval_config();
    cfg.runs = 3;
    cfg.folds = 10;
    cfg.base_seed = 800;
    cfg.model.hidden_size = 8;
    cfg.model.conv1_filters = 2;
    cfg.model.conv2_filters = 3;
    cfg.model.kernel = 3;
    cfg.model.head_hidden = 8;
    cfg.model.max_epochs = 4;
    cfg.model.batch_size = 32;
    cfg.model.patience = 4;

    const std::vector<model::Variant> variants{
        model::Variant::GruOnly, model::Variant::CnnOnly, model::Variant::Vtnet};
    const eval::EvalReport rep = eval::run_cv(ds, variants, cfg);
    require(rep.aggregates.size() == 3, "expected three aggregates");
    for (const auto& a : rep.aggregates) {
        require(std::abs(a.mean_combined - 0.5) <= 0.05,
                std::string(model::to_string(a.variant)) + " mean combined " +
                    fmt(a.mean_combined) + " outside 0.5 +/- 0.05");
    }
}

void check_determinism() {
    const data::Dataset ds = handmade_dataset(6, 4, 1);
    eval::EvalConfig cfg;
    cfg.runs = 1;
    cfg.folds = 3;
    cfg.val_frac = 0.25;
    cfg.smote_k = 3;
    cfg.base_seed = 900;
    cfg.jobs = 1;
    cfg.model.hidden_size = 8;
    cfg.model.conv1_filters = 2;
    cfg.model.conv2_filters = 3;
    cfg.model.kernel = 3;
    cfg.model.head_hidden = 8;
    cfg.model.max_epochs = 2;
    cfg.model.batch_size = 16;
    cfg.model.patience = 5;
    cfg.prep.seq_len = 12;
    const std::vector<model::Variant> variants{model::Variant::Vtnet};
    const std::string a = eval::report_to_json(eval::run_cv(ds, variants, cfg));
    const std::string b = eval::report_to_json(eval::run_cv(ds, variants, cfg));
    require(a == b, "two identically-seeded protocol runs differ");

    model::VtnetConfig mc = toy_config();
    mc.max_epochs = 5;
    const auto items = toy_items(mc);
    const model::VtnetModel m = model::fit(model::init_model(mc), items, items);
    const auto dir = std::filesystem::temp_directory_path() / "vtnet_acceptance_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.ckpt";
    model::save_checkpoint(m, path);
    const model::VtnetModel back = model::load_checkpoint(path);
    std::filesystem::remove_all(dir);
    const auto before = model::predict(m, items);
    const auto after = model::predict(back, items);
    require(before.size() == after.size(), "prediction count changed across reload");
    for (std::size_t i = 0; i < before.size(); ++i) {
        require(before[i].score == after[i].score,
                "prediction " + std::to_string(i) + " not bit-identical after reload");
    }
}

void check_overfit() {
    const model::VtnetConfig cfg = toy_config();
    const auto items = toy_items(cfg);
    require(items.size() == 16, "toy set must hold 16 items");
    const model::VtnetModel m = model::fit(model::init_model(cfg), items, items);
    require(m.history.size() <= 100, "trained past the 100-epoch cap");
    const auto preds = model::predict(m, items);
    int correct = 0;
    for (const auto& p : preds) {
        const bool conf = p.score >= 0.5;
        if (conf == (p.label == data::Label::Confused)) ++correct;
    }
    require(correct == 16, "training accuracy " + std::to_string(correct) + "/16");
}

}  // namespace

int main() {
    const double t0 = now_s();

    {
        const double start = now_s();
        criterion(1, "layer and end-to-end gradients match finite differences (20 seeds)",
                  check_gradients);
        const double dt = now_s() - start;
        if (dt >= 120.0) {
            std::printf("[FAIL] 1b. gradient suite runtime %.1fs exceeds 120s\n", dt);
            ++g_failures;
        }
    }

    criterion(2, "136 users / 5440 tasks / 112 confused yield 448 items, 1344 after SMOTE",
              check_bookkeeping);
    criterion(3, "cyclic split re-interleaves 1000 random sequences exactly",
              check_cyclic_roundtrip);
    criterion(4, "10x10 protocol: 100 entries per variant, user-partitioned, fit-only stats",
              check_protocol_shape);
    criterion(5, "threshold selection and AUC match independent oracles", check_oracles);

    {
        const double start = now_s();
        criterion(6, "separable signal: fused model reaches 0.95 combined accuracy",
                  check_separable_signal);
        const double dt = now_s() - start;
        if (dt >= 1800.0) {
            std::printf("[FAIL] 6b. separable-signal runtime %.1fs exceeds 1800s\n", dt);
            ++g_failures;
        }
    }

    criterion(7, "split signal: fusion beats either single branch by 0.05",
              check_fusion_advantage);
    criterion(8, "null signal: every variant stays within 0.5 +/- 0.05", check_null_control);
    criterion(9, "fixed seeds are bit-reproducible; checkpoints reload bit-exactly",
              check_determinism);
    criterion(10, "16-item toy set is memorized within 100 epochs", check_overfit);

    std::printf("%s: %d criterion(s) failed, total %.1fs\n",
                g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", g_failures,
                now_s() - t0);
    return g_failures == 0 ? 0 : 1;
}
