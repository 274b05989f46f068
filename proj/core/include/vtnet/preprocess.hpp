#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vtnet/et_data.hpp"

namespace vtnet::prep {

// Fixed-length T x 8 feature array. Column order:
//   0 left_x, 1 left_y, 2 left_pupil, 3 left_dist,
//   4 right_x, 5 right_y, 6 right_pupil, 7 right_dist.
// Padding occupies a prefix of all-zero rows with mask false; real samples
// sit at the suffix so the last row is always the most recent sample.
struct FeatureSequence {
    static constexpr int kFeatures = 8;

    int rows = 0;
    std::vector<double> values;  // rows * kFeatures, row-major
    std::vector<std::uint8_t> mask;
    int length_valid = 0;

    double& at(int t, int c) { return values[static_cast<std::size_t>(t) * kFeatures + c]; }
    double at(int t, int c) const { return values[static_cast<std::size_t>(t) * kFeatures + c]; }
};

// Grayscale scan-path raster, intensities in [0, 1].
struct ScanPathImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // height * width, row-major

    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// One training unit. The four split items of a task share one image (by
// pointer) and one label. SMOTE products carry synthetic=true and no image.
struct DataItem {
    FeatureSequence sequence;
    std::shared_ptr<const ScanPathImage> image;
    data::Label label = data::Label::NotConfused;
    std::string parent_task_id;
    std::string user_id;
    int split_index = 0;
    bool synthetic = false;

    std::string id() const;
};

// Normalization constants, computed on training items only. Order of the four
// tracked columns: left_pupil, left_dist, right_pupil, right_dist.
struct FeatureStats {
    static constexpr double kSdFloor = 1e-8;

    std::array<double, 4> mean{};
    std::array<double, 4> sd{};
    int screen_width = 0;
    int screen_height = 0;
};

struct PreprocessConfig {
    int seq_len = 150;
    double window_s = 5.0;
    int splits = 4;
    int downsize = 6;
    double dot_intensity = 0.4;
    double line_intensity = 0.2;
    double trim_ms = 1000.0;
};

// Keeps the samples in the final window_s seconds: timestamp_ms strictly
// greater than last_timestamp - window_s * 1000. Shorter tasks pass whole.
data::TaskRecord extract_window(const data::TaskRecord& task, double window_s = 5.0);

// Deals xs into k interleaved lists: output j holds xs[j], xs[j+k], ...
template <class T>
std::vector<std::vector<T>> cyclic_split(const std::vector<T>& xs, std::size_t k) {
    std::vector<std::vector<T>> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j].reserve(xs.size() / k + 1);
    for (std::size_t i = 0; i < xs.size(); ++i) out[i % k].push_back(xs[i]);
    return out;
}

// Builds the T x 8 array from samples. Invalid eyes reuse that eye's last
// valid measurements (zeros before any); sequences longer than seq_len keep
// the most recent seq_len samples.
FeatureSequence build_sequence(const std::vector<data::RawSample>& samples, int seq_len);

FeatureStats compute_stats(std::span<const FeatureSequence> sequences, int screen_width,
                           int screen_height);
FeatureStats compute_stats_items(std::span<const DataItem> items, int screen_width,
                                 int screen_height);

// x,y scaled into [0,1] by the screen dimensions; pupil and distance columns
// z-scored by the supplied stats. Padding rows stay zero.
FeatureSequence normalize(const FeatureSequence& seq, const FeatureStats& stats);

// Rasterizes a task's gaze path: per sample the mean of the valid eyes'
// coordinates, mapped into the downsized grid; each point accumulates
// dot_intensity, the integer line between consecutive points accumulates
// line_intensity on its interior pixels; everything clamps at 1. Samples with
// no valid eye are skipped and break line continuity. Throws NoValidGaze when
// every sample is invalid.
ScanPathImage rasterize_scanpath(const data::TaskRecord& task, int screen_width,
                                 int screen_height, int downsize = 6,
                                 double dot_intensity = 0.4, double line_intensity = 0.2);

struct SmoteProvenance {
    std::size_t base_index = 0;
    std::size_t neighbor_index = 0;
    double lambda = 0.0;
};

struct SmoteResult {
    std::vector<FeatureSequence> synthetic;
    std::vector<SmoteProvenance> provenance;
};

// Emits floor(percent/100 * |minority|) synthetic sequences, each
// base + lambda * (neighbor - base) on the flattened vector, lambda uniform
// in [0,1], neighbor among the k nearest minority points by Euclidean
// distance. Requires |minority| > k_neighbors and uniform sequence length.
SmoteResult smote(const std::vector<FeatureSequence>& minority, int percent = 200,
                  int k_neighbors = 5, std::uint64_t seed = 0);

// Uniform subset without replacement of the majority class down to target;
// the minority class and the original relative order are preserved.
std::vector<DataItem> downsample_majority(std::vector<DataItem> items, std::size_t target,
                                          std::uint64_t seed);

struct BuildResult {
    std::vector<DataItem> items;
    int dropped_empty_trim = 0;
    int dropped_no_gaze = 0;
};

// Full per-task pipeline: trim (confused only), rasterize the whole trimmed
// trial, window to the last window_s seconds, cyclic split, pad to seq_len.
// Emits splits items per surviving task, in dataset order. Sequences are left
// unnormalized; apply compute_stats + normalize with training-fold items.
BuildResult build_items(const data::Dataset& ds, const PreprocessConfig& cfg);

// Binary PGM (P5, maxval 255, intensity*255 rounded half-up).
void write_pgm(const ScanPathImage& img, const std::filesystem::path& path);
ScanPathImage read_pgm(const std::filesystem::path& path);

// Directory layout: items/<task>_<split>.tsv, images/<task>.pgm, index.tsv.
void export_items(const std::vector<DataItem>& items, const std::filesystem::path& dir);

}  // namespace vtnet::prep
