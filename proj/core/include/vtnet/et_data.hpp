#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vtnet/errors.hpp"

namespace vtnet::data {

enum class Label : int { NotConfused = 0, Confused = 1 };

std::string to_string(Label label);
Label label_from_string(const std::string& s);

// One raw eye-tracker reading. Coordinates are screen pixels, pupil diameters
// millimeters, head distances millimeters. When an eye's valid flag is false,
// that eye's four measurements carry no information and every consumer must
// ignore them.
struct RawSample {
    double timestamp_ms = 0.0;
    double left_x = 0.0, left_y = 0.0;
    double right_x = 0.0, right_y = 0.0;
    double left_pupil = 0.0, right_pupil = 0.0;
    double left_dist = 0.0, right_dist = 0.0;
    bool left_valid = true, right_valid = true;
};

// One task segment: samples sorted by timestamp; report_time_ms is present
// iff the segment ended with a confusion report.
struct TaskRecord {
    std::string user_id;
    std::string task_id;
    std::vector<RawSample> samples;
    Label label = Label::NotConfused;
    std::optional<double> report_time_ms;
};

struct Dataset {
    int screen_width = 1280;
    int screen_height = 1024;
    double sampling_rate_hz = 120.0;
    std::vector<TaskRecord> tasks;
};

struct MetaConfig {
    int screen_width = 1280;
    int screen_height = 1024;
    double sampling_rate_hz = 120.0;
};

enum class SignalMode { TemporalOnly, SpatialOnly, Both, None, Split };

std::string to_string(SignalMode mode);
SignalMode signal_mode_from_string(const std::string& s);

// Synthetic dataset generator settings. The planted class signal depends on
// signal_mode:
//   TemporalOnly  late burst (final 2 s of kept data) of rapid revisits plus
//                 pupil dilation / head-distance dip; gone once sample order
//                 is shuffled.
//   SpatialOnly   wider revisit geometry across the whole trial; survives any
//                 reordering of samples.
//   Both          both cues on every confused task.
//   Split         each confused task carries exactly one cue: either a
//                 pupil/distance-only late burst (invisible in the scan-path
//                 image) or an early wide-geometry episode that ends more than
//                 5 s before the segment end (invisible to a last-5s window).
//   None          no cue; classes are statistically indistinguishable.
struct SynthConfig {
    int n_users = 136;
    int tasks_per_user = 40;
    double confused_fraction = 112.0 / 5440.0;
    SignalMode signal_mode = SignalMode::Both;
    double signal_strength = 1.0;
    double mean_duration_s = 13.7;
    double sd_duration_s = 11.3;
    std::uint64_t seed = 0;
    // Geometry of the simulated device; defaults match the parser defaults.
    int screen_width = 1280;
    int screen_height = 1024;
    double sampling_rate_hz = 120.0;
};

MetaConfig read_meta(const std::filesystem::path& path);
void write_meta(const MetaConfig& meta, const std::filesystem::path& path);

// Parses the TSV pair into a Dataset: one TaskRecord per distinct task_id,
// samples grouped and time-sorted (stable for equal timestamps), labels
// joined by task_id. Throws MalformedRow / UnknownTask / UnlabeledTask.
Dataset parse_dataset(const std::filesystem::path& samples_path,
                      const std::filesystem::path& labels_path,
                      const MetaConfig& meta);

// Convenience wrappers over the directory layout samples.tsv / labels.tsv /
// meta.cfg used by the CLI.
Dataset load_dataset_dir(const std::filesystem::path& dir);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Removes the final trim_ms of data before the confusion report: keeps
// samples with timestamp_ms <= report_time_ms - trim_ms. Not-confused tasks
// pass through unchanged. Throws EmptyAfterTrim when nothing remains.
TaskRecord trim_pre_report(const TaskRecord& task, double trim_ms = 1000.0);

struct TrimResult {
    Dataset dataset;
    int dropped_empty = 0;
};

// Dataset-wide trim; tasks that become empty are dropped and counted.
TrimResult trim_dataset(const Dataset& ds, double trim_ms = 1000.0);

// Deterministic synthetic dataset; see SynthConfig. Throws InvalidConfig.
Dataset synth_generate(const SynthConfig& cfg);

// Structural equality that ignores the measurements of invalid eyes (they are
// unobservable by contract, and round-trip through the TSV schema writes them
// as nan).
bool semantically_equal(const Dataset& a, const Dataset& b);

// Checks Dataset/TaskRecord/RawSample invariants; throws Error on violation.
void validate(const Dataset& ds);

}  // namespace vtnet::data
