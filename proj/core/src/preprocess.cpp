#include "vtnet/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>

#include "vtnet/errors.hpp"
#include "vtnet/io.hpp"
#include "vtnet/rng.hpp"

namespace vtnet::prep {

std::string DataItem::id() const {
    return parent_task_id + "_" + std::to_string(split_index);
}

data::TaskRecord extract_window(const data::TaskRecord& task, double window_s) {
    if (task.samples.empty()) throw EmptyInput("task '" + task.task_id + "' has no samples");
    const double cutoff = task.samples.back().timestamp_ms - window_s * 1000.0;
    data::TaskRecord out = task;
    out.samples.clear();
    for (const data::RawSample& s : task.samples) {
        if (s.timestamp_ms > cutoff) out.samples.push_back(s);
    }
    return out;
}

FeatureSequence build_sequence(const std::vector<data::RawSample>& samples, int seq_len) {
    if (seq_len <= 0) throw InvalidConfig("seq_len must be positive");
    FeatureSequence seq;
    seq.rows = seq_len;
    seq.values.assign(static_cast<std::size_t>(seq_len) * FeatureSequence::kFeatures, 0.0);
    seq.mask.assign(static_cast<std::size_t>(seq_len), 0);

    const std::size_t n = samples.size();
    const std::size_t keep = std::min<std::size_t>(n, static_cast<std::size_t>(seq_len));
    const std::size_t src_start = n - keep;   // most recent samples win
    const std::size_t dst_start = static_cast<std::size_t>(seq_len) - keep;

    // Carry-forward state covers the whole (possibly truncated-away) prefix
    // so the first kept row still sees the latest valid measurements.
    double lx = 0, ly = 0, lp = 0, ld = 0;
    double rx = 0, ry = 0, rp = 0, rd = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const data::RawSample& s = samples[i];
        if (s.left_valid) {
            lx = s.left_x;
            ly = s.left_y;
            lp = s.left_pupil;
            ld = s.left_dist;
        }
        if (s.right_valid) {
            rx = s.right_x;
            ry = s.right_y;
            rp = s.right_pupil;
            rd = s.right_dist;
        }
        if (i < src_start) continue;
        const std::size_t t = dst_start + (i - src_start);
        double* row = seq.values.data() + t * FeatureSequence::kFeatures;
        row[0] = lx;
        row[1] = ly;
        row[2] = lp;
        row[3] = ld;
        row[4] = rx;
        row[5] = ry;
        row[6] = rp;
        row[7] = rd;
        seq.mask[t] = 1;
    }
    seq.length_valid = static_cast<int>(keep);
    return seq;
}

namespace {

constexpr std::array<int, 4> kTrackedCols{2, 3, 6, 7};  // pupil/distance columns

}  // namespace

FeatureStats compute_stats(std::span<const FeatureSequence> sequences, int screen_width,
                           int screen_height) {
    FeatureStats stats;
    stats.screen_width = screen_width;
    stats.screen_height = screen_height;
    std::array<double, 4> sum{};
    std::array<double, 4> sumsq{};
    std::size_t count = 0;
    for (const FeatureSequence& seq : sequences) {
        for (int t = 0; t < seq.rows; ++t) {
            if (!seq.mask[static_cast<std::size_t>(t)]) continue;
            ++count;
            for (std::size_t c = 0; c < kTrackedCols.size(); ++c) {
                const double v = seq.at(t, kTrackedCols[c]);
                sum[c] += v;
                sumsq[c] += v * v;
            }
        }
    }
    if (count == 0) throw EmptyInput("no unmasked rows to compute statistics from");
    const double n = static_cast<double>(count);
    for (std::size_t c = 0; c < 4; ++c) {
        stats.mean[c] = sum[c] / n;
        const double var = std::max(0.0, sumsq[c] / n - stats.mean[c] * stats.mean[c]);
        stats.sd[c] = std::max(FeatureStats::kSdFloor, std::sqrt(var));
    }
    return stats;
}

FeatureStats compute_stats_items(std::span<const DataItem> items, int screen_width,
                                 int screen_height) {
    std::vector<FeatureSequence> seqs;
    seqs.reserve(items.size());
    for (const DataItem& it : items) seqs.push_back(it.sequence);
    return compute_stats(seqs, screen_width, screen_height);
}

FeatureSequence normalize(const FeatureSequence& seq, const FeatureStats& stats) {
    FeatureSequence out = seq;
    const double w = static_cast<double>(stats.screen_width);
    const double h = static_cast<double>(stats.screen_height);
    for (int t = 0; t < out.rows; ++t) {
        if (!out.mask[static_cast<std::size_t>(t)]) continue;
        out.at(t, 0) /= w;
        out.at(t, 1) /= h;
        out.at(t, 4) /= w;
        out.at(t, 5) /= h;
        for (std::size_t c = 0; c < kTrackedCols.size(); ++c) {
            double& v = out.values[static_cast<std::size_t>(t) * FeatureSequence::kFeatures +
                                   kTrackedCols[c]];
            v = (v - stats.mean[c]) / stats.sd[c];
        }
    }
    return out;
}

namespace {

struct GridPoint {
    int x = 0, y = 0;
};

void add_pixel(ScanPathImage& img, int x, int y, double amount) {
    double& px = img.at(y, x);
    px = std::min(1.0, px + amount);
}

// Integer line between two grid cells; interior cells only (endpoints belong
// to the dot pass).
void add_line_interior(ScanPathImage& img, GridPoint a, GridPoint b, double amount) {
    int x = a.x, y = a.y;
    const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
    const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (!(x == a.x && y == a.y) && !(x == b.x && y == b.y)) {
            add_pixel(img, x, y, amount);
        }
        if (x == b.x && y == b.y) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
}

}  // namespace

ScanPathImage rasterize_scanpath(const data::TaskRecord& task, int screen_width,
                                 int screen_height, int downsize, double dot_intensity,
                                 double line_intensity) {
    if (downsize < 1) throw InvalidConfig("downsize must be >= 1");
    ScanPathImage img;
    img.width = (screen_width + downsize - 1) / downsize;
    img.height = (screen_height + downsize - 1) / downsize;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0.0);

    bool any = false;
    bool have_prev = false;
    GridPoint prev;
    for (const data::RawSample& s : task.samples) {
        double x, y;
        if (s.left_valid && s.right_valid) {
            x = 0.5 * (s.left_x + s.right_x);
            y = 0.5 * (s.left_y + s.right_y);
        } else if (s.left_valid) {
            x = s.left_x;
            y = s.left_y;
        } else if (s.right_valid) {
            x = s.right_x;
            y = s.right_y;
        } else {
            have_prev = false;  // gap breaks line continuity
            continue;
        }
        GridPoint p;
        p.x = std::clamp(static_cast<int>(std::floor(x / downsize)), 0, img.width - 1);
        p.y = std::clamp(static_cast<int>(std::floor(y / downsize)), 0, img.height - 1);
        add_pixel(img, p.x, p.y, dot_intensity);
        if (have_prev) add_line_interior(img, prev, p, line_intensity);
        prev = p;
        have_prev = true;
        any = true;
    }
    if (!any) throw NoValidGaze("task '" + task.task_id + "': every sample is invalid");
    return img;
}

SmoteResult smote(const std::vector<FeatureSequence>& minority, int percent, int k_neighbors,
                  std::uint64_t seed) {
    const std::size_t n = minority.size();
    if (k_neighbors < 1) throw InvalidConfig("k_neighbors must be >= 1");
    if (percent < 0) throw InvalidConfig("percent must be >= 0");
    if (n <= static_cast<std::size_t>(k_neighbors)) {
        throw TooFewMinority("need more than " + std::to_string(k_neighbors) +
                             " minority items, have " + std::to_string(n));
    }
    const int rows = minority.front().rows;
    for (const FeatureSequence& s : minority) {
        if (s.rows != rows) throw ShapeMismatch("smote: mixed sequence lengths");
    }
    const std::size_t dim = static_cast<std::size_t>(rows) * FeatureSequence::kFeatures;

    // k nearest minority neighbours by Euclidean distance on the flattened
    // vectors; ties break toward the smaller index.
    std::vector<std::vector<std::size_t>> nearest(n);
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        cand.reserve(n - 1);
        const double* a = minority[i].values.data();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double* b = minority[j].values.data();
            double d2 = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = a[c] - b[c];
                d2 += diff * diff;
            }
            cand.emplace_back(d2, j);
        }
        const std::size_t k = static_cast<std::size_t>(k_neighbors);
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        nearest[i].reserve(k);
        for (std::size_t c = 0; c < k; ++c) nearest[i].push_back(cand[c].second);
    }

    const std::size_t count = n * static_cast<std::size_t>(percent) / 100;
    Rng rng(seed);
    SmoteResult res;
    res.synthetic.reserve(count);
    res.provenance.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t base = c % n;
        const std::size_t nb = nearest[base][rng.uniform_index(nearest[base].size())];
        const double lambda = rng.uniform01();
        FeatureSequence syn;
        syn.rows = rows;
        syn.values.resize(dim);
        syn.mask.resize(static_cast<std::size_t>(rows));
        const FeatureSequence& pb = minority[base];
        const FeatureSequence& pn = minority[nb];
        for (std::size_t i = 0; i < dim; ++i) {
            syn.values[i] = pb.values[i] + lambda * (pn.values[i] - pb.values[i]);
        }
        for (std::size_t t = 0; t < syn.mask.size(); ++t) {
            syn.mask[t] = (pb.mask[t] || pn.mask[t]) ? 1 : 0;
        }
        syn.length_valid = static_cast<int>(
            std::count(syn.mask.begin(), syn.mask.end(), static_cast<std::uint8_t>(1)));
        res.synthetic.push_back(std::move(syn));
        res.provenance.push_back({base, nb, lambda});
    }
    return res;
}

std::vector<DataItem> downsample_majority(std::vector<DataItem> items, std::size_t target,
                                          std::uint64_t seed) {
    std::size_t conf = 0, not_conf = 0;
    for (const DataItem& it : items) {
        (it.label == data::Label::Confused ? conf : not_conf)++;
    }
    const data::Label majority =
        conf > not_conf ? data::Label::Confused : data::Label::NotConfused;
    const std::size_t maj_count = std::max(conf, not_conf);
    if (maj_count <= target) return items;

    std::vector<std::size_t> maj_idx;
    maj_idx.reserve(maj_count);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].label == majority) maj_idx.push_back(i);
    }
    Rng rng(seed);
    rng.shuffle(maj_idx);
    std::vector<std::uint8_t> keep(items.size(), 0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].label != majority) keep[i] = 1;
    }
    for (std::size_t i = 0; i < target; ++i) keep[maj_idx[i]] = 1;
    std::vector<DataItem> out;
    out.reserve(items.size() - (maj_count - target));
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (keep[i]) out.push_back(std::move(items[i]));
    }
    return out;
}

BuildResult build_items(const data::Dataset& ds, const PreprocessConfig& cfg) {
    BuildResult res;
    for (const data::TaskRecord& task : ds.tasks) {
        data::TaskRecord trimmed;
        try {
            trimmed = data::trim_pre_report(task, cfg.trim_ms);
        } catch (const EmptyAfterTrim&) {
            ++res.dropped_empty_trim;
            continue;
        }
        std::shared_ptr<const ScanPathImage> image;
        try {
            image = std::make_shared<const ScanPathImage>(
                rasterize_scanpath(trimmed, ds.screen_width, ds.screen_height, cfg.downsize,
                                   cfg.dot_intensity, cfg.line_intensity));
        } catch (const NoValidGaze&) {
            ++res.dropped_no_gaze;
            continue;
        }
        const data::TaskRecord windowed = extract_window(trimmed, cfg.window_s);
        const std::vector<std::vector<data::RawSample>> parts =
            cyclic_split(windowed.samples, static_cast<std::size_t>(cfg.splits));
        for (int j = 0; j < cfg.splits; ++j) {
            DataItem item;
            item.sequence = build_sequence(parts[static_cast<std::size_t>(j)], cfg.seq_len);
            item.image = image;
            item.label = task.label;
            item.parent_task_id = task.task_id;
            item.user_id = task.user_id;
            item.split_index = j;
            item.synthetic = false;
            res.items.push_back(std::move(item));
        }
    }
    return res;
}

void write_pgm(const ScanPathImage& img, const std::filesystem::path& path) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (double v : img.pixels) {
        const long q = std::lround(v * 255.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(q, 0L, 255L))));
    }
    io::atomic_write_file(path, out);
}

ScanPathImage read_pgm(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < text.size()) {
            if (std::isspace(static_cast<unsigned char>(text[pos]))) {
                ++pos;
            } else if (text[pos] == '#') {
                while (pos < text.size() && text[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        return text.substr(start, pos - start);
    };
    if (next_token() != "P5") throw IoError(path.string() + ": not a P5 PGM");
    long w, h, maxval;
    if (!io::parse_long(next_token(), w) || !io::parse_long(next_token(), h) ||
        !io::parse_long(next_token(), maxval) || w <= 0 || h <= 0 || maxval != 255) {
        throw IoError(path.string() + ": bad PGM header");
    }
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (text.size() - pos < need) throw IoError(path.string() + ": truncated PGM payload");
    ScanPathImage img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.pixels.resize(need);
    for (std::size_t i = 0; i < need; ++i) {
        img.pixels[i] = static_cast<unsigned char>(text[pos + i]) / 255.0;
    }
    return img;
}

void export_items(const std::vector<DataItem>& items, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "items");
    std::filesystem::create_directories(dir / "images");
    std::string index = "item_id\tlabel\tuser_id\tsynthetic\n";
    for (const DataItem& it : items) {
        index += it.id() + "\t" + data::to_string(it.label) + "\t" + it.user_id + "\t" +
                 (it.synthetic ? "1" : "0") + "\n";
        std::string seq =
            "mask\tleft_x\tleft_y\tleft_pupil\tleft_dist\tright_x\tright_y\tright_pupil"
            "\tright_dist\n";
        for (int t = 0; t < it.sequence.rows; ++t) {
            seq += it.sequence.mask[static_cast<std::size_t>(t)] ? '1' : '0';
            for (int c = 0; c < FeatureSequence::kFeatures; ++c) {
                seq += '\t';
                seq += io::format_double(it.sequence.at(t, c));
            }
            seq += '\n';
        }
        io::atomic_write_file(dir / "items" / (it.id() + ".tsv"), seq);
        if (it.image && it.split_index == 0) {
            write_pgm(*it.image, dir / "images" / (it.parent_task_id + ".pgm"));
        }
    }
    io::atomic_write_file(dir / "index.tsv", index);
}

}  // namespace vtnet::prep
