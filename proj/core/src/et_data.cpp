#include "vtnet/et_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "vtnet/io.hpp"

namespace vtnet::io {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return std::move(ss).str();
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string());
}

std::string format_double(double v) {
    std::array<char, 40> buf;
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) throw IoError("number formatting failed");
    return std::string(buf.data(), p);
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [p, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && p == last;
}

bool parse_long(const std::string& s, long& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [p, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && p == last;
}

}  // namespace vtnet::io

namespace vtnet::data {

namespace {

constexpr const char* kSamplesHeader =
    "user_id\ttask_id\ttimestamp_ms\tleft_x\tleft_y\tright_x\tright_y\tleft_pupil\tright_pupil"
    "\tleft_dist\tright_dist\tleft_valid\tright_valid";
constexpr const char* kLabelsHeader = "task_id\tlabel\treport_time_ms";

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Reads lines tolerant of a trailing \r (files may arrive CRLF-edited).
std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::string text = io::read_file(path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        std::string line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = pos + 1;
    }
    return lines;
}

double field_double(const std::string& s, const std::string& file, std::size_t line,
                    const char* col) {
    double v;
    if (!io::parse_double(s, v)) {
        throw MalformedRow(file, line, std::string("bad number in column ") + col + ": '" + s +
                                           "'");
    }
    return v;
}

bool field_flag(const std::string& s, const std::string& file, std::size_t line, const char* col) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw MalformedRow(file, line,
                       std::string("bad flag in column ") + col + ": '" + s + "' (want 0 or 1)");
}

}  // namespace

std::string to_string(Label label) {
    return label == Label::Confused ? "confused" : "not_confused";
}

Label label_from_string(const std::string& s) {
    if (s == "confused") return Label::Confused;
    if (s == "not_confused") return Label::NotConfused;
    throw Error("unknown label: '" + s + "'");
}

std::string to_string(SignalMode mode) {
    switch (mode) {
        case SignalMode::TemporalOnly: return "temporal_only";
        case SignalMode::SpatialOnly: return "spatial_only";
        case SignalMode::Both: return "both";
        case SignalMode::None: return "none";
        case SignalMode::Split: return "split";
    }
    throw Error("bad signal mode value");
}

SignalMode signal_mode_from_string(const std::string& s) {
    if (s == "temporal_only") return SignalMode::TemporalOnly;
    if (s == "spatial_only") return SignalMode::SpatialOnly;
    if (s == "both") return SignalMode::Both;
    if (s == "none") return SignalMode::None;
    if (s == "split") return SignalMode::Split;
    throw InvalidConfig("unknown signal_mode: '" + s + "'");
}

MetaConfig read_meta(const std::filesystem::path& path) {
    MetaConfig meta;
    std::vector<std::string> lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig(path.string() + ":" + std::to_string(i + 1) +
                                ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        long lv;
        double dv;
        if (key == "screen_width" && io::parse_long(value, lv) && lv > 0) {
            meta.screen_width = static_cast<int>(lv);
        } else if (key == "screen_height" && io::parse_long(value, lv) && lv > 0) {
            meta.screen_height = static_cast<int>(lv);
        } else if (key == "sampling_rate_hz" && io::parse_double(value, dv) && dv > 0) {
            meta.sampling_rate_hz = dv;
        } else {
            throw InvalidConfig(path.string() + ":" + std::to_string(i + 1) + ": bad entry '" +
                                line + "'");
        }
    }
    return meta;
}

void write_meta(const MetaConfig& meta, const std::filesystem::path& path) {
    std::string out;
    out += "screen_width=" + std::to_string(meta.screen_width) + "\n";
    out += "screen_height=" + std::to_string(meta.screen_height) + "\n";
    out += "sampling_rate_hz=" + io::format_double(meta.sampling_rate_hz) + "\n";
    io::atomic_write_file(path, out);
}

Dataset parse_dataset(const std::filesystem::path& samples_path,
                      const std::filesystem::path& labels_path, const MetaConfig& meta) {
    Dataset ds;
    ds.screen_width = meta.screen_width;
    ds.screen_height = meta.screen_height;
    ds.sampling_rate_hz = meta.sampling_rate_hz;

    const std::string sfile = samples_path.string();
    std::vector<std::string> lines = read_lines(samples_path);
    if (lines.empty() || lines[0] != kSamplesHeader) {
        throw MalformedRow(sfile, 1, "missing or malformed header");
    }
    if (lines.size() == 1) throw EmptyInput(sfile + ": no sample rows");

    std::unordered_map<std::string, std::size_t> task_index;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty() && i + 1 == lines.size()) break;  // trailing newline
        std::vector<std::string> cols = split_tabs(lines[i]);
        const std::size_t row = i + 1;
        if (cols.size() != 13) {
            throw MalformedRow(sfile, row,
                               "expected 13 columns, got " + std::to_string(cols.size()));
        }
        RawSample s;
        s.timestamp_ms = field_double(cols[2], sfile, row, "timestamp_ms");
        if (s.timestamp_ms < 0) throw MalformedRow(sfile, row, "negative timestamp");
        s.left_x = field_double(cols[3], sfile, row, "left_x");
        s.left_y = field_double(cols[4], sfile, row, "left_y");
        s.right_x = field_double(cols[5], sfile, row, "right_x");
        s.right_y = field_double(cols[6], sfile, row, "right_y");
        s.left_pupil = field_double(cols[7], sfile, row, "left_pupil");
        s.right_pupil = field_double(cols[8], sfile, row, "right_pupil");
        s.left_dist = field_double(cols[9], sfile, row, "left_dist");
        s.right_dist = field_double(cols[10], sfile, row, "right_dist");
        s.left_valid = field_flag(cols[11], sfile, row, "left_valid");
        s.right_valid = field_flag(cols[12], sfile, row, "right_valid");

        auto [it, inserted] = task_index.try_emplace(cols[1], ds.tasks.size());
        if (inserted) {
            TaskRecord task;
            task.user_id = cols[0];
            task.task_id = cols[1];
            ds.tasks.push_back(std::move(task));
        }
        TaskRecord& task = ds.tasks[it->second];
        if (task.user_id != cols[0]) {
            throw MalformedRow(sfile, row,
                               "task " + cols[1] + " appears under two users: " + task.user_id +
                                   " and " + cols[0]);
        }
        task.samples.push_back(s);
    }

    const std::string lfile = labels_path.string();
    std::vector<std::string> llines = read_lines(labels_path);
    if (llines.empty() || llines[0] != kLabelsHeader) {
        throw MalformedRow(lfile, 1, "missing or malformed header");
    }
    std::unordered_set<std::string> labeled;
    for (std::size_t i = 1; i < llines.size(); ++i) {
        if (llines[i].empty() && i + 1 == llines.size()) break;
        std::vector<std::string> cols = split_tabs(llines[i]);
        const std::size_t row = i + 1;
        if (cols.size() != 3) {
            throw MalformedRow(lfile, row,
                               "expected 3 columns, got " + std::to_string(cols.size()));
        }
        auto it = task_index.find(cols[0]);
        if (it == task_index.end()) {
            throw UnknownTask(lfile + ":" + std::to_string(row) +
                              ": label references absent task '" + cols[0] + "'");
        }
        if (!labeled.insert(cols[0]).second) {
            throw MalformedRow(lfile, row, "duplicate label for task '" + cols[0] + "'");
        }
        TaskRecord& task = ds.tasks[it->second];
        if (cols[1] == "confused") {
            task.label = Label::Confused;
            task.report_time_ms = field_double(cols[2], lfile, row, "report_time_ms");
        } else if (cols[1] == "not_confused") {
            task.label = Label::NotConfused;
            if (!cols[2].empty()) {
                throw MalformedRow(lfile, row, "report_time_ms must be empty for not_confused");
            }
            task.report_time_ms.reset();
        } else {
            throw MalformedRow(lfile, row, "bad label '" + cols[1] + "'");
        }
    }
    for (const TaskRecord& task : ds.tasks) {
        if (!labeled.count(task.task_id)) {
            throw UnlabeledTask("task '" + task.task_id + "' has no label row");
        }
    }
    for (TaskRecord& task : ds.tasks) {
        std::stable_sort(task.samples.begin(), task.samples.end(),
                         [](const RawSample& a, const RawSample& b) {
                             return a.timestamp_ms < b.timestamp_ms;
                         });
    }
    return ds;
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
    MetaConfig meta = read_meta(dir / "meta.cfg");
    return parse_dataset(dir / "samples.tsv", dir / "labels.tsv", meta);
}

namespace {

void append_measurement(std::string& out, double v, bool valid) {
    out += '\t';
    if (!valid) {
        out += "nan";
    } else {
        out += io::format_double(v);
    }
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string samples = kSamplesHeader;
    samples += '\n';
    for (const TaskRecord& task : ds.tasks) {
        for (const RawSample& s : task.samples) {
            samples += task.user_id;
            samples += '\t';
            samples += task.task_id;
            samples += '\t';
            samples += io::format_double(s.timestamp_ms);
            append_measurement(samples, s.left_x, s.left_valid);
            append_measurement(samples, s.left_y, s.left_valid);
            append_measurement(samples, s.right_x, s.right_valid);
            append_measurement(samples, s.right_y, s.right_valid);
            append_measurement(samples, s.left_pupil, s.left_valid);
            append_measurement(samples, s.right_pupil, s.right_valid);
            append_measurement(samples, s.left_dist, s.left_valid);
            append_measurement(samples, s.right_dist, s.right_valid);
            samples += s.left_valid ? "\t1" : "\t0";
            samples += s.right_valid ? "\t1" : "\t0";
            samples += '\n';
        }
    }
    io::atomic_write_file(dir / "samples.tsv", samples);

    std::string labels = kLabelsHeader;
    labels += '\n';
    for (const TaskRecord& task : ds.tasks) {
        labels += task.task_id;
        labels += '\t';
        labels += to_string(task.label);
        labels += '\t';
        if (task.report_time_ms) labels += io::format_double(*task.report_time_ms);
        labels += '\n';
    }
    io::atomic_write_file(dir / "labels.tsv", labels);

    MetaConfig meta;
    meta.screen_width = ds.screen_width;
    meta.screen_height = ds.screen_height;
    meta.sampling_rate_hz = ds.sampling_rate_hz;
    write_meta(meta, dir / "meta.cfg");
}

TaskRecord trim_pre_report(const TaskRecord& task, double trim_ms) {
    if (task.label != Label::Confused || !task.report_time_ms) return task;
    const double cutoff = *task.report_time_ms - trim_ms;
    TaskRecord out = task;
    out.samples.clear();
    for (const RawSample& s : task.samples) {
        if (s.timestamp_ms <= cutoff) out.samples.push_back(s);
    }
    if (out.samples.empty()) {
        throw EmptyAfterTrim("task '" + task.task_id + "': no samples at or before " +
                             io::format_double(cutoff) + " ms");
    }
    return out;
}

TrimResult trim_dataset(const Dataset& ds, double trim_ms) {
    TrimResult res;
    res.dataset.screen_width = ds.screen_width;
    res.dataset.screen_height = ds.screen_height;
    res.dataset.sampling_rate_hz = ds.sampling_rate_hz;
    for (const TaskRecord& task : ds.tasks) {
        try {
            res.dataset.tasks.push_back(trim_pre_report(task, trim_ms));
        } catch (const EmptyAfterTrim&) {
            ++res.dropped_empty;
        }
    }
    return res;
}

namespace {

bool eye_equal(double a, double b) { return a == b; }

bool sample_equal(const RawSample& a, const RawSample& b) {
    if (a.timestamp_ms != b.timestamp_ms) return false;
    if (a.left_valid != b.left_valid || a.right_valid != b.right_valid) return false;
    if (a.left_valid) {
        if (!eye_equal(a.left_x, b.left_x) || !eye_equal(a.left_y, b.left_y) ||
            !eye_equal(a.left_pupil, b.left_pupil) || !eye_equal(a.left_dist, b.left_dist)) {
            return false;
        }
    }
    if (a.right_valid) {
        if (!eye_equal(a.right_x, b.right_x) || !eye_equal(a.right_y, b.right_y) ||
            !eye_equal(a.right_pupil, b.right_pupil) || !eye_equal(a.right_dist, b.right_dist)) {
            return false;
        }
    }
    return true;
}

}  // namespace

bool semantically_equal(const Dataset& a, const Dataset& b) {
    if (a.screen_width != b.screen_width || a.screen_height != b.screen_height ||
        a.sampling_rate_hz != b.sampling_rate_hz) {
        return false;
    }
    if (a.tasks.size() != b.tasks.size()) return false;
    for (std::size_t i = 0; i < a.tasks.size(); ++i) {
        const TaskRecord& x = a.tasks[i];
        const TaskRecord& y = b.tasks[i];
        if (x.user_id != y.user_id || x.task_id != y.task_id || x.label != y.label) return false;
        if (x.report_time_ms.has_value() != y.report_time_ms.has_value()) return false;
        if (x.report_time_ms && *x.report_time_ms != *y.report_time_ms) return false;
        if (x.samples.size() != y.samples.size()) return false;
        for (std::size_t j = 0; j < x.samples.size(); ++j) {
            if (!sample_equal(x.samples[j], y.samples[j])) return false;
        }
    }
    return true;
}

void validate(const Dataset& ds) {
    if (ds.screen_width <= 0 || ds.screen_height <= 0 || ds.sampling_rate_hz <= 0) {
        throw Error("bad geometry/rate");
    }
    std::unordered_set<std::string> ids;
    for (const TaskRecord& task : ds.tasks) {
        if (!ids.insert(task.task_id).second) {
            throw Error("duplicate task_id '" + task.task_id + "'");
        }
        if (task.samples.empty()) throw Error("task '" + task.task_id + "' has no samples");
        if ((task.label == Label::Confused) != task.report_time_ms.has_value()) {
            throw Error("task '" + task.task_id + "': label and report_time_ms disagree");
        }
        double prev = -std::numeric_limits<double>::infinity();
        for (const RawSample& s : task.samples) {
            if (s.timestamp_ms < 0) {
                throw Error("task '" + task.task_id + "': negative timestamp");
            }
            if (s.timestamp_ms < prev) {
                throw Error("task '" + task.task_id + "': timestamps not sorted");
            }
            prev = s.timestamp_ms;
            if (s.left_valid && (s.left_x < 0 || s.left_x >= ds.screen_width || s.left_y < 0 ||
                                 s.left_y >= ds.screen_height)) {
                throw Error("task '" + task.task_id + "': left gaze out of bounds");
            }
            if (s.right_valid && (s.right_x < 0 || s.right_x >= ds.screen_width ||
                                  s.right_y < 0 || s.right_y >= ds.screen_height)) {
                throw Error("task '" + task.task_id + "': right gaze out of bounds");
            }
        }
    }
}

}  // namespace vtnet::data
