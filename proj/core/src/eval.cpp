#include "vtnet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <thread>
#include <tuple>
#include <utility>

#include <json.hpp>

#include "vtnet/errors.hpp"
#include "vtnet/rng.hpp"

namespace vtnet::eval {

namespace {

constexpr std::uint64_t kTagValSplit = 11;
constexpr std::uint64_t kTagVariantJob = 12;

struct UserLoad {
    long total = 0;
    long confused = 0;
};

// Surviving-task counts per user, in first-appearance order. Item counts are
// these counts times the constant split factor, so greedy balancing on task
// counts balances item counts identically. Survival mirrors the trim rule: a
// confused task survives iff any sample sits at or before report - trim.
std::vector<std::pair<std::string, UserLoad>> user_loads(const data::Dataset& ds,
                                                         double trim_ms) {
    std::vector<std::pair<std::string, UserLoad>> out;
    std::map<std::string, std::size_t> index;
    for (const data::TaskRecord& t : ds.tasks) {
        auto [it, fresh] = index.try_emplace(t.user_id, out.size());
        if (fresh) out.emplace_back(t.user_id, UserLoad{});
        if (t.samples.empty()) continue;
        if (t.label == data::Label::Confused) {
            if (!t.report_time_ms ||
                t.samples.front().timestamp_ms > *t.report_time_ms - trim_ms) {
                continue;
            }
        }
        UserLoad& load = out[it->second].second;
        ++load.total;
        if (t.label == data::Label::Confused) ++load.confused;
    }
    return out;
}

long user_items(const std::vector<std::pair<std::string, UserLoad>>& loads,
                const std::string& user) {
    for (const auto& [u, load] : loads) {
        if (u == user) return load.total;
    }
    return 0;
}

std::optional<double> pairwise_auc(const std::vector<double>& pos,
                                   const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) return std::nullopt;
    double wins = 0.0;
    for (double p : pos) {
        for (double n : neg) {
            if (p > n) {
                wins += 1.0;
            } else if (p == n) {
                wins += 0.5;
            }
        }
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace

std::vector<FoldPlan> make_folds(const data::Dataset& ds, int n_folds, std::uint64_t run_seed) {
    if (n_folds < 1) throw InvalidConfig("n_folds must be >= 1");
    std::vector<std::pair<std::string, UserLoad>> loads = user_loads(ds, 1000.0);
    if (loads.size() < static_cast<std::size_t>(n_folds)) {
        throw TooFewUsers(std::to_string(loads.size()) + " users for " +
                          std::to_string(n_folds) + " folds");
    }
    Rng rng(run_seed);
    rng.shuffle(loads);
    std::stable_sort(loads.begin(), loads.end(), [](const auto& a, const auto& b) {
        return a.second.confused > b.second.confused;
    });
    struct Tally {
        long conf = 0;
        long total = 0;
    };
    std::vector<Tally> tallies(static_cast<std::size_t>(n_folds));
    std::vector<std::vector<std::string>> fold_users(static_cast<std::size_t>(n_folds));
    for (const auto& [user, load] : loads) {
        std::size_t best = 0;
        for (std::size_t f = 1; f < tallies.size(); ++f) {
            if (std::tie(tallies[f].conf, tallies[f].total) <
                std::tie(tallies[best].conf, tallies[best].total)) {
                best = f;
            }
        }
        fold_users[best].push_back(user);
        tallies[best].conf += load.confused;
        tallies[best].total += load.total;
    }
    std::vector<FoldPlan> plans;
    plans.reserve(static_cast<std::size_t>(n_folds));
    for (int f = 0; f < n_folds; ++f) {
        FoldPlan p;
        p.fold = f;
        p.test_users = fold_users[static_cast<std::size_t>(f)];
        std::sort(p.test_users.begin(), p.test_users.end());
        for (int g = 0; g < n_folds; ++g) {
            if (g == f) continue;
            for (const std::string& u : fold_users[static_cast<std::size_t>(g)]) {
                p.train_users.push_back(u);
            }
        }
        std::sort(p.train_users.begin(), p.train_users.end());
        plans.push_back(std::move(p));
    }
    return plans;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_validation(
    const data::Dataset& ds, const std::vector<std::string>& train_users, double frac,
    std::uint64_t seed) {
    if (train_users.size() < 2) {
        throw TooFewUsers("validation split needs at least 2 users, got " +
                          std::to_string(train_users.size()));
    }
    if (!(frac > 0.0) || frac >= 1.0) {
        throw InvalidConfig("val_frac must lie in (0,1)");
    }
    const std::vector<std::pair<std::string, UserLoad>> loads = user_loads(ds, 1000.0);
    double total = 0.0;
    for (const std::string& u : train_users) total += static_cast<double>(user_items(loads, u));
    const double target = frac * total;
    std::vector<std::string> shuffled = train_users;
    Rng rng(seed);
    rng.shuffle(shuffled);
    std::vector<std::string> val;
    double acc = 0.0;
    std::size_t i = 0;
    while (i < shuffled.size() && acc < target) {
        acc += static_cast<double>(user_items(loads, shuffled[i]));
        val.push_back(shuffled[i]);
        ++i;
    }
    if (val.size() >= shuffled.size()) {
        throw InvalidConfig("validation holdout would consume every training user");
    }
    std::vector<std::string> fit(shuffled.begin() + static_cast<std::ptrdiff_t>(i),
                                 shuffled.end());
    std::sort(fit.begin(), fit.end());
    std::sort(val.begin(), val.end());
    return {std::move(fit), std::move(val)};
}

double select_threshold(std::span<const model::Prediction> val) {
    if (val.empty()) throw EmptyInput("no validation predictions");
    long pos = 0, neg = 0;
    for (const model::Prediction& p : val) {
        (p.label == data::Label::Confused ? pos : neg)++;
    }
    if (pos == 0 || neg == 0) {
        throw OneClassOnly("threshold selection needs both classes in validation");
    }
    std::vector<double> scores;
    scores.reserve(val.size());
    for (const model::Prediction& p : val) scores.push_back(p.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> cands{0.0, 1.0};
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) {
        cands.push_back(0.5 * (scores[i] + scores[i + 1]));
    }
    std::sort(cands.begin(), cands.end());
    double best_theta = cands.front();
    double best_d2 = std::numeric_limits<double>::infinity();
    for (double theta : cands) {
        long tp = 0, tn = 0;
        for (const model::Prediction& p : val) {
            const bool pred_conf = p.score >= theta;
            if (p.label == data::Label::Confused) {
                if (pred_conf) ++tp;
            } else {
                if (!pred_conf) ++tn;
            }
        }
        const double sens = static_cast<double>(tp) / static_cast<double>(pos);
        const double spec = static_cast<double>(tn) / static_cast<double>(neg);
        const double d2 = (1.0 - sens) * (1.0 - sens) + (1.0 - spec) * (1.0 - spec);
        if (d2 < best_d2) {
            best_d2 = d2;
            best_theta = theta;
        }
    }
    return best_theta;
}

Metrics compute_metrics(std::span<const model::Prediction> test, double threshold) {
    if (test.empty()) throw EmptyInput("no predictions to score");
    Metrics m;
    m.threshold = threshold;
    std::vector<double> pos, neg;
    for (const model::Prediction& p : test) {
        const bool pred_conf = p.score >= threshold;
        if (p.label == data::Label::Confused) {
            pos.push_back(p.score);
            (pred_conf ? m.tp : m.fn)++;
        } else {
            neg.push_back(p.score);
            (pred_conf ? m.fp : m.tn)++;
        }
    }
    m.sensitivity = (m.tp + m.fn) > 0
                        ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn)
                        : 0.0;
    m.specificity = (m.tn + m.fp) > 0
                        ? static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp)
                        : 0.0;
    m.combined = (m.sensitivity + m.specificity) / 2.0;
    m.auc = pairwise_auc(pos, neg);
    return m;
}

std::vector<FoldPlan> make_fold_plans(const data::Dataset& ds, const EvalConfig& cfg) {
    if (cfg.runs < 1) throw InvalidConfig("runs must be >= 1");
    std::vector<FoldPlan> plans;
    plans.reserve(static_cast<std::size_t>(cfg.runs) * static_cast<std::size_t>(cfg.folds));
    for (int r = 0; r < cfg.runs; ++r) {
        const std::uint64_t run_seed = cfg.base_seed + static_cast<std::uint64_t>(r);
        std::vector<FoldPlan> folds = make_folds(ds, cfg.folds, run_seed);
        for (FoldPlan& plan : folds) {
            plan.run = r;
            const std::uint64_t split_seed =
                mix_seed(run_seed, {kTagValSplit, static_cast<std::uint64_t>(plan.fold)});
            auto [fit, val] = split_validation(ds, plan.train_users, cfg.val_frac, split_seed);
            plan.train_users = std::move(fit);
            plan.val_users = std::move(val);
            plans.push_back(std::move(plan));
        }
    }
    return plans;
}

namespace {

data::Dataset subset_users(const data::Dataset& ds, const std::vector<std::string>& users) {
    const std::set<std::string> want(users.begin(), users.end());
    data::Dataset out;
    out.screen_width = ds.screen_width;
    out.screen_height = ds.screen_height;
    out.sampling_rate_hz = ds.sampling_rate_hz;
    for (const data::TaskRecord& t : ds.tasks) {
        if (want.count(t.user_id)) out.tasks.push_back(t);
    }
    return out;
}

}  // namespace

FoldData prepare_fold(const data::Dataset& ds, const FoldPlan& plan, const EvalConfig& cfg) {
    FoldData fd;
    fd.fit = prep::build_items(subset_users(ds, plan.train_users), cfg.prep).items;
    fd.val = prep::build_items(subset_users(ds, plan.val_users), cfg.prep).items;
    fd.test = prep::build_items(subset_users(ds, plan.test_users), cfg.prep).items;
    if (fd.fit.empty()) throw EmptyTrainingSet("fold has no training items");
    fd.stats = prep::compute_stats_items(fd.fit, ds.screen_width, ds.screen_height);
    for (std::vector<prep::DataItem>* set : {&fd.fit, &fd.val, &fd.test}) {
        for (prep::DataItem& item : *set) {
            item.sequence = prep::normalize(item.sequence, fd.stats);
        }
    }
    return fd;
}

std::vector<prep::DataItem> balance_training_set(const std::vector<prep::DataItem>& fit,
                                                 model::Variant variant, const EvalConfig& cfg,
                                                 std::uint64_t seed) {
    long conf = 0;
    for (const prep::DataItem& it : fit) {
        if (it.label == data::Label::Confused) ++conf;
    }
    const long notc = static_cast<long>(fit.size()) - conf;
    if (conf == 0 || notc == 0) {
        throw TooFewMinority("training fold holds a single class");
    }
    const data::Label minority = conf <= notc ? data::Label::Confused : data::Label::NotConfused;
    const std::size_t min_count = static_cast<std::size_t>(std::min(conf, notc));
    if (variant != model::Variant::GruOnly) {
        return prep::downsample_majority(fit, min_count, mix_seed(seed, {2}));
    }
    std::vector<prep::FeatureSequence> minority_seqs;
    std::vector<std::size_t> minority_idx;
    for (std::size_t i = 0; i < fit.size(); ++i) {
        if (fit[i].label == minority) {
            minority_seqs.push_back(fit[i].sequence);
            minority_idx.push_back(i);
        }
    }
    const prep::SmoteResult res =
        prep::smote(minority_seqs, cfg.smote_percent, cfg.smote_k, mix_seed(seed, {1}));
    std::vector<prep::DataItem> all = fit;
    all.reserve(fit.size() + res.synthetic.size());
    for (std::size_t i = 0; i < res.synthetic.size(); ++i) {
        const prep::DataItem& base = fit[minority_idx[res.provenance[i].base_index]];
        prep::DataItem syn;
        syn.sequence = res.synthetic[i];
        syn.image = nullptr;
        syn.label = minority;
        syn.parent_task_id = "syn" + std::to_string(i) + "_" + base.parent_task_id;
        syn.user_id = base.user_id;
        syn.split_index = 0;
        syn.synthetic = true;
        all.push_back(std::move(syn));
    }
    const std::size_t post_minority = min_count + res.synthetic.size();
    return prep::downsample_majority(std::move(all), post_minority, mix_seed(seed, {2}));
}

model::VtnetConfig resolve_model_geometry(model::VtnetConfig mc, const data::Dataset& ds,
                                          const prep::PreprocessConfig& prep) {
    mc.seq_len = prep.seq_len;
    mc.seq_features = prep::FeatureSequence::kFeatures;
    mc.image_height = (ds.screen_height + prep.downsize - 1) / prep.downsize;
    mc.image_width = (ds.screen_width + prep.downsize - 1) / prep.downsize;
    return mc;
}

namespace {

Metrics task_level_metrics(const std::vector<model::Prediction>& preds, double threshold) {
    struct TaskAcc {
        data::Label label = data::Label::NotConfused;
        long votes_conf = 0;
        long votes_total = 0;
        double score_sum = 0.0;
    };
    std::map<std::string, TaskAcc> by_task;
    for (const model::Prediction& p : preds) {
        TaskAcc& acc = by_task[p.parent_task_id];
        acc.label = p.label;
        acc.votes_total += 1;
        if (p.score >= threshold) acc.votes_conf += 1;
        acc.score_sum += p.score;
    }
    Metrics m;
    m.threshold = threshold;
    std::vector<double> pos, neg;
    for (const auto& [task, acc] : by_task) {
        const bool pred_conf = 2 * acc.votes_conf >= acc.votes_total;
        const double mean_score = acc.score_sum / static_cast<double>(acc.votes_total);
        if (acc.label == data::Label::Confused) {
            pos.push_back(mean_score);
            (pred_conf ? m.tp : m.fn)++;
        } else {
            neg.push_back(mean_score);
            (pred_conf ? m.fp : m.tn)++;
        }
    }
    m.sensitivity = (m.tp + m.fn) > 0
                        ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn)
                        : 0.0;
    m.specificity = (m.tn + m.fp) > 0
                        ? static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp)
                        : 0.0;
    m.combined = (m.sensitivity + m.specificity) / 2.0;
    m.auc = pairwise_auc(pos, neg);
    return m;
}

void eval_fold(const data::Dataset& ds, const FoldPlan& plan,
               std::span<const model::Variant> variants, const EvalConfig& cfg,
               FoldEntry* out) {
    FoldData fd;
    try {
        fd = prepare_fold(ds, plan, cfg);
    } catch (const std::exception& e) {
        throw Error("run " + std::to_string(plan.run) + " fold " + std::to_string(plan.fold) +
                    ": " + e.what());
    }
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        const model::Variant v = variants[vi];
        try {
            const std::uint64_t vseed = mix_seed(
                cfg.base_seed,
                {kTagVariantJob, static_cast<std::uint64_t>(plan.run),
                 static_cast<std::uint64_t>(plan.fold), static_cast<std::uint64_t>(vi)});
            const std::vector<prep::DataItem> train =
                balance_training_set(fd.fit, v, cfg, mix_seed(vseed, {1}));
            model::VtnetConfig mc = resolve_model_geometry(cfg.model, ds, cfg.prep);
            mc.variant = v;
            mc.seed = mix_seed(vseed, {2});
            const model::VtnetModel m = model::fit(model::init_model(mc), train, fd.val);
            const double theta = select_threshold(model::predict(m, fd.val));
            const std::vector<model::Prediction> test_preds = model::predict(m, fd.test);
            FoldEntry entry;
            entry.run = plan.run;
            entry.fold = plan.fold;
            entry.variant = v;
            entry.metrics = compute_metrics(test_preds, theta);
            entry.task_metrics = task_level_metrics(test_preds, theta);
            out[vi] = std::move(entry);
        } catch (const std::exception& e) {
            throw Error("run " + std::to_string(plan.run) + " fold " +
                        std::to_string(plan.fold) + " variant " + model::to_string(v) + ": " +
                        e.what());
        }
    }
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double population_sd(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    const double mu = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

EvalReport run_cv(const data::Dataset& ds, std::span<const model::Variant> variants,
                  const EvalConfig& cfg) {
    if (cfg.jobs < 1) throw InvalidConfig("jobs must be >= 1");
    EvalReport rep;
    rep.config = cfg;
    for (model::Variant v : variants) rep.variants.push_back(model::to_string(v));

    const std::vector<FoldPlan> plans = make_fold_plans(ds, cfg);
    rep.entries.resize(plans.size() * variants.size());
    if (!variants.empty()) {
        const std::size_t n_workers =
            std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), plans.size());
        if (n_workers <= 1) {
            for (std::size_t i = 0; i < plans.size(); ++i) {
                eval_fold(ds, plans[i], variants, cfg, rep.entries.data() + i * variants.size());
            }
        } else {
            std::atomic<std::size_t> next{0};
            std::mutex err_mutex;
            std::optional<std::string> first_error;
            auto worker = [&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= plans.size()) return;
                    {
                        std::lock_guard<std::mutex> lock(err_mutex);
                        if (first_error) return;
                    }
                    try {
                        eval_fold(ds, plans[i], variants, cfg,
                                  rep.entries.data() + i * variants.size());
                    } catch (const std::exception& e) {
                        std::lock_guard<std::mutex> lock(err_mutex);
                        if (!first_error) first_error = e.what();
                        return;
                    }
                }
            };
            std::vector<std::thread> threads;
            threads.reserve(n_workers);
            for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
            for (std::thread& t : threads) t.join();
            if (first_error) throw Error(*first_error);
        }
    }

    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        VariantAggregate agg;
        agg.variant = variants[vi];
        std::vector<double> run_sens, run_spec, run_comb, run_auc;
        for (int r = 0; r < cfg.runs; ++r) {
            std::vector<double> sens, spec, comb, auc;
            for (const FoldEntry& e : rep.entries) {
                if (e.run != r || e.variant != variants[vi]) continue;
                sens.push_back(e.metrics.sensitivity);
                spec.push_back(e.metrics.specificity);
                comb.push_back(e.metrics.combined);
                if (e.metrics.auc) auc.push_back(*e.metrics.auc);
            }
            run_sens.push_back(mean_of(sens));
            run_spec.push_back(mean_of(spec));
            run_comb.push_back(mean_of(comb));
            run_auc.push_back(mean_of(auc));
        }
        agg.mean_sensitivity = mean_of(run_sens);
        agg.sd_sensitivity = population_sd(run_sens);
        agg.mean_specificity = mean_of(run_spec);
        agg.sd_specificity = population_sd(run_spec);
        agg.mean_combined = mean_of(run_comb);
        agg.sd_combined = population_sd(run_comb);
        agg.mean_auc = mean_of(run_auc);
        agg.sd_auc = population_sd(run_auc);
        rep.aggregates.push_back(agg);
    }
    return rep;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json metrics_to_json(const Metrics& m) {
    ordered_json j;
    j["sensitivity"] = m.sensitivity;
    j["specificity"] = m.specificity;
    j["combined"] = m.combined;
    if (m.auc) {
        j["auc"] = *m.auc;
    } else {
        j["auc"] = nullptr;
    }
    j["threshold"] = m.threshold;
    j["tp"] = m.tp;
    j["fp"] = m.fp;
    j["tn"] = m.tn;
    j["fn"] = m.fn;
    return j;
}

Metrics metrics_from_json(const ordered_json& j) {
    Metrics m;
    m.sensitivity = j.at("sensitivity").get<double>();
    m.specificity = j.at("specificity").get<double>();
    m.combined = j.at("combined").get<double>();
    if (!j.at("auc").is_null()) m.auc = j.at("auc").get<double>();
    m.threshold = j.at("threshold").get<double>();
    m.tp = j.at("tp").get<long>();
    m.fp = j.at("fp").get<long>();
    m.tn = j.at("tn").get<long>();
    m.fn = j.at("fn").get<long>();
    return m;
}

ordered_json config_to_json(const EvalConfig& c) {
    ordered_json j;
    j["runs"] = c.runs;
    j["folds"] = c.folds;
    j["val_frac"] = c.val_frac;
    j["smote_percent"] = c.smote_percent;
    j["smote_k"] = c.smote_k;
    j["base_seed"] = c.base_seed;
    j["jobs"] = c.jobs;
    ordered_json m;
    m["hidden_size"] = c.model.hidden_size;
    m["conv1_filters"] = c.model.conv1_filters;
    m["conv2_filters"] = c.model.conv2_filters;
    m["kernel"] = c.model.kernel;
    m["head_hidden"] = c.model.head_hidden;
    m["classes"] = c.model.classes;
    m["max_epochs"] = c.model.max_epochs;
    m["lr0"] = c.model.lr0;
    m["batch_size"] = c.model.batch_size;
    m["patience"] = c.model.patience;
    m["seed"] = c.model.seed;
    m["variant"] = model::to_string(c.model.variant);
    m["seq_len"] = c.model.seq_len;
    m["seq_features"] = c.model.seq_features;
    m["image_height"] = c.model.image_height;
    m["image_width"] = c.model.image_width;
    j["model"] = std::move(m);
    ordered_json p;
    p["seq_len"] = c.prep.seq_len;
    p["window_s"] = c.prep.window_s;
    p["splits"] = c.prep.splits;
    p["downsize"] = c.prep.downsize;
    p["dot_intensity"] = c.prep.dot_intensity;
    p["line_intensity"] = c.prep.line_intensity;
    p["trim_ms"] = c.prep.trim_ms;
    j["prep"] = std::move(p);
    return j;
}

EvalConfig config_from_json(const ordered_json& j) {
    EvalConfig c;
    c.runs = j.at("runs").get<int>();
    c.folds = j.at("folds").get<int>();
    c.val_frac = j.at("val_frac").get<double>();
    c.smote_percent = j.at("smote_percent").get<int>();
    c.smote_k = j.at("smote_k").get<int>();
    c.base_seed = j.at("base_seed").get<std::uint64_t>();
    c.jobs = j.at("jobs").get<int>();
    const ordered_json& m = j.at("model");
    c.model.hidden_size = m.at("hidden_size").get<int>();
    c.model.conv1_filters = m.at("conv1_filters").get<int>();
    c.model.conv2_filters = m.at("conv2_filters").get<int>();
    c.model.kernel = m.at("kernel").get<int>();
    c.model.head_hidden = m.at("head_hidden").get<int>();
    c.model.classes = m.at("classes").get<int>();
    c.model.max_epochs = m.at("max_epochs").get<int>();
    c.model.lr0 = m.at("lr0").get<double>();
    c.model.batch_size = m.at("batch_size").get<int>();
    c.model.patience = m.at("patience").get<int>();
    c.model.seed = m.at("seed").get<std::uint64_t>();
    c.model.variant = model::variant_from_string(m.at("variant").get<std::string>());
    c.model.seq_len = m.at("seq_len").get<int>();
    c.model.seq_features = m.at("seq_features").get<int>();
    c.model.image_height = m.at("image_height").get<int>();
    c.model.image_width = m.at("image_width").get<int>();
    const ordered_json& p = j.at("prep");
    c.prep.seq_len = p.at("seq_len").get<int>();
    c.prep.window_s = p.at("window_s").get<double>();
    c.prep.splits = p.at("splits").get<int>();
    c.prep.downsize = p.at("downsize").get<int>();
    c.prep.dot_intensity = p.at("dot_intensity").get<double>();
    c.prep.line_intensity = p.at("line_intensity").get<double>();
    c.prep.trim_ms = p.at("trim_ms").get<double>();
    return c;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    ordered_json j;
    j["config"] = config_to_json(report.config);
    j["variants"] = report.variants;
    ordered_json entries = ordered_json::array();
    for (const FoldEntry& e : report.entries) {
        ordered_json je;
        je["run"] = e.run;
        je["fold"] = e.fold;
        je["variant"] = model::to_string(e.variant);
        je["metrics"] = metrics_to_json(e.metrics);
        if (e.task_metrics) {
            je["task_metrics"] = metrics_to_json(*e.task_metrics);
        } else {
            je["task_metrics"] = nullptr;
        }
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    ordered_json aggs = ordered_json::array();
    for (const VariantAggregate& a : report.aggregates) {
        ordered_json ja;
        ja["variant"] = model::to_string(a.variant);
        ja["mean_sensitivity"] = a.mean_sensitivity;
        ja["sd_sensitivity"] = a.sd_sensitivity;
        ja["mean_specificity"] = a.mean_specificity;
        ja["sd_specificity"] = a.sd_specificity;
        ja["mean_combined"] = a.mean_combined;
        ja["sd_combined"] = a.sd_combined;
        ja["mean_auc"] = a.mean_auc;
        ja["sd_auc"] = a.sd_auc;
        aggs.push_back(std::move(ja));
    }
    j["aggregates"] = std::move(aggs);
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw IoError(std::string("report parse: ") + e.what());
    }
    try {
        EvalReport rep;
        rep.config = config_from_json(j.at("config"));
        rep.variants = j.at("variants").get<std::vector<std::string>>();
        for (const ordered_json& je : j.at("entries")) {
            FoldEntry e;
            e.run = je.at("run").get<int>();
            e.fold = je.at("fold").get<int>();
            e.variant = model::variant_from_string(je.at("variant").get<std::string>());
            e.metrics = metrics_from_json(je.at("metrics"));
            if (!je.at("task_metrics").is_null()) {
                e.task_metrics = metrics_from_json(je.at("task_metrics"));
            }
            rep.entries.push_back(std::move(e));
        }
        for (const ordered_json& ja : j.at("aggregates")) {
            VariantAggregate a;
            a.variant = model::variant_from_string(ja.at("variant").get<std::string>());
            a.mean_sensitivity = ja.at("mean_sensitivity").get<double>();
            a.sd_sensitivity = ja.at("sd_sensitivity").get<double>();
            a.mean_specificity = ja.at("mean_specificity").get<double>();
            a.sd_specificity = ja.at("sd_specificity").get<double>();
            a.mean_combined = ja.at("mean_combined").get<double>();
            a.sd_combined = ja.at("sd_combined").get<double>();
            a.mean_auc = ja.at("mean_auc").get<double>();
            a.sd_auc = ja.at("sd_auc").get<double>();
            rep.aggregates.push_back(a);
        }
        return rep;
    } catch (const ordered_json::exception& e) {
        throw IoError(std::string("report parse: ") + e.what());
    }
}

namespace {

std::string display_name(model::Variant v) {
    switch (v) {
        case model::Variant::GruOnly: return "GRU";
        case model::Variant::CnnOnly: return "CNN";
        case model::Variant::Vtnet: return "VTNet";
    }
    throw Error("bad variant value");
}

// Half-up rounding to 2 decimals for the table view: 0.775 renders as 0.78.
std::string round2(double x) {
    const double r = std::floor(x * 100.0 + 0.5) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", r);
    return buf;
}

}  // namespace

std::string report_to_table(const EvalReport& report) {
    std::string out = "Variant  Sens.  Spec.  Combined  AUC   SD\n";
    for (const VariantAggregate& a : report.aggregates) {
        std::string name = display_name(a.variant);
        name.resize(8, ' ');
        out += name;
        out += ' ' + round2(a.mean_sensitivity);
        out += "   " + round2(a.mean_specificity);
        out += "   " + round2(a.mean_combined);
        out += "      " + round2(a.mean_auc);
        out += "  " + round2(a.sd_combined);
        out += '\n';
    }
    return out;
}

}  // namespace vtnet::eval
