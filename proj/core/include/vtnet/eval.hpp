#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtnet/et_data.hpp"
#include "vtnet/model.hpp"
#include "vtnet/preprocess.hpp"

namespace vtnet::eval {

struct FoldPlan {
    int run = 0;
    int fold = 0;
    std::vector<std::string> train_users;  // before the validation split
    std::vector<std::string> val_users;
    std::vector<std::string> test_users;
};

struct Metrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double combined = 0.0;
    std::optional<double> auc;  // absent when the set has one class
    double threshold = 0.5;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct FoldEntry {
    int run = 0;
    int fold = 0;
    model::Variant variant = model::Variant::Vtnet;
    Metrics metrics;  // per data item
    // Per parent task: majority vote of item predictions (ties count as
    // confused); AUC uses the mean item score.
    std::optional<Metrics> task_metrics;
};

struct VariantAggregate {
    model::Variant variant = model::Variant::Vtnet;
    // Mean and population sd over the per-run means (10 values for the full
    // protocol).
    double mean_sensitivity = 0.0, sd_sensitivity = 0.0;
    double mean_specificity = 0.0, sd_specificity = 0.0;
    double mean_combined = 0.0, sd_combined = 0.0;
    double mean_auc = 0.0, sd_auc = 0.0;
};

struct EvalConfig {
    int runs = 10;
    int folds = 10;
    double val_frac = 0.2;
    int smote_percent = 200;
    int smote_k = 5;
    std::uint64_t base_seed = 0;
    int jobs = 1;
    model::VtnetConfig model;  // variant field overridden per requested variant
    prep::PreprocessConfig prep;
};

struct EvalReport {
    EvalConfig config;
    std::vector<std::string> variants;  // evaluation order
    std::vector<FoldEntry> entries;
    std::vector<VariantAggregate> aggregates;
};

// Greedy stratified user partition: users sorted by confused-item count
// descending (seeded shuffle breaks ties), each assigned to the fold with the
// fewest confused items so far (then fewest total items). Only train/test
// sets are filled here; split_validation carves val out of train.
std::vector<FoldPlan> make_folds(const data::Dataset& ds, int n_folds, std::uint64_t run_seed);

// User-grouped validation holdout: walks a seeded shuffle of train_users,
// moving users to val until val's item count reaches frac * total train
// items. The holdout is not re-added for the final fit.
std::pair<std::vector<std::string>, std::vector<std::string>> split_validation(
    const data::Dataset& ds, const std::vector<std::string>& train_users, double frac,
    std::uint64_t seed);

// Candidate thresholds: 0, 1, and midpoints between adjacent distinct sorted
// scores. Returns the candidate whose validation ROC point minimizes the
// Euclidean distance to (0,1); ties break toward the smaller threshold.
double select_threshold(std::span<const model::Prediction> val);

// Confusion counts at score >= threshold -> confused, plus pairwise AUC
// (ties count one half). AUC is absent when only one class is present.
Metrics compute_metrics(std::span<const model::Prediction> test, double threshold);

// Every run x fold plan with the validation holdout already carved out of
// train; run r folds with seed base_seed + r.
std::vector<FoldPlan> make_fold_plans(const data::Dataset& ds, const EvalConfig& cfg);

// One fold's item sets, built from raw tasks. Normalization statistics come
// from the fit items only; val and test are normalized with those statistics
// but never influence them.
struct FoldData {
    std::vector<prep::DataItem> fit;
    std::vector<prep::DataItem> val;
    std::vector<prep::DataItem> test;
    prep::FeatureStats stats;
};
FoldData prepare_fold(const data::Dataset& ds, const FoldPlan& plan, const EvalConfig& cfg);

// Class-balanced training set for one variant. gru_only: SMOTE the minority
// by smote_percent, then downsample the majority to the post-SMOTE minority
// count. cnn_only/vtnet: downsample the majority to the minority count (no
// synthetic images exist to feed the CNN).
std::vector<prep::DataItem> balance_training_set(const std::vector<prep::DataItem>& fit,
                                                 model::Variant variant, const EvalConfig& cfg,
                                                 std::uint64_t seed);

// Model geometry implied by the dataset screen and the preprocessing
// settings: seq_len, feature count, and the downsized image dimensions.
model::VtnetConfig resolve_model_geometry(model::VtnetConfig mc, const data::Dataset& ds,
                                          const prep::PreprocessConfig& prep);

// The full protocol: per run, folds with base_seed+run; per fold, build items
// with training-fold statistics only, balance each variant's training set,
// fit with the validation holdout, select the threshold on validation, score
// the untouched test fold.
EvalReport run_cv(const data::Dataset& ds, std::span<const model::Variant> variants,
                  const EvalConfig& cfg);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

// Variant rows x Sens./Spec./Combined columns (2-decimal half-up rounding)
// plus AUC and sd columns.
std::string report_to_table(const EvalReport& report);

}  // namespace vtnet::eval
