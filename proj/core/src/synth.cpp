#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vtnet/et_data.hpp"
#include "vtnet/rng.hpp"

namespace vtnet::data {

namespace {

// Seed-stream tags; every per-task stream is independent of the label so the
// null mode is leak-free by construction.
constexpr std::uint64_t kTagLabelPick = 1;
constexpr std::uint64_t kTagWalk = 2;
constexpr std::uint64_t kTagCue = 3;

struct Vec2 {
    double x = 0.0, y = 0.0;
};

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

std::string pad_number(long v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

int digits_for(long n) {
    int d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

// Base gaze behaviour shared by both classes: a smooth pursuit toward a
// sequence of uniformly drawn targets, with per-eye jitter, slowly drifting
// pupil diameter and head distance, and occasional invalid samples.
struct Walker {
    Rng& rng;
    double w, h;
    Vec2 pos, target;
    double pupil_base, dist_base;
    double pupil_drift = 0.0, dist_drift = 0.0;
    double alpha;

    Walker(Rng& rng, double w, double h, double rate) : rng(rng), w(w), h(h) {
        pos = {rng.uniform(0.2 * w, 0.8 * w), rng.uniform(0.2 * h, 0.8 * h)};
        target = draw_target();
        pupil_base = rng.normal(3.5, 0.25);
        dist_base = rng.normal(620.0, 25.0);
        alpha = std::min(0.5, 14.4 / rate);
    }

    Vec2 draw_target() {
        return {rng.uniform(0.1 * w, 0.9 * w), rng.uniform(0.1 * h, 0.9 * h)};
    }

    RawSample step(double timestamp) {
        pos.x += (target.x - pos.x) * alpha + rng.normal(0.0, 2.0);
        pos.y += (target.y - pos.y) * alpha + rng.normal(0.0, 2.0);
        pos.x = clampd(pos.x, 0.0, w - 1.0);
        pos.y = clampd(pos.y, 0.0, h - 1.0);
        if (std::fabs(target.x - pos.x) < 30.0 && std::fabs(target.y - pos.y) < 30.0) {
            target = draw_target();
        }
        pupil_drift = clampd(pupil_drift + rng.normal(0.0, 0.01), -0.3, 0.3);
        dist_drift = clampd(dist_drift + rng.normal(0.0, 0.4), -12.0, 12.0);

        RawSample s;
        s.timestamp_ms = timestamp;
        s.left_x = clampd(pos.x - 12.0 + rng.normal(0.0, 1.5), 0.0, w - 1.0);
        s.left_y = clampd(pos.y + rng.normal(0.0, 1.5), 0.0, h - 1.0);
        s.right_x = clampd(pos.x + 12.0 + rng.normal(0.0, 1.5), 0.0, w - 1.0);
        s.right_y = clampd(pos.y + rng.normal(0.0, 1.5), 0.0, h - 1.0);
        s.left_pupil = std::max(0.5, pupil_base + pupil_drift + rng.normal(0.0, 0.05));
        s.right_pupil = std::max(0.5, pupil_base + pupil_drift + rng.normal(0.0, 0.05));
        s.left_dist = std::max(100.0, dist_base + dist_drift + rng.normal(0.0, 1.0));
        s.right_dist = std::max(100.0, dist_base + dist_drift + rng.normal(0.0, 1.0));
        const bool blink = rng.bernoulli(0.01);
        s.left_valid = !(blink || rng.bernoulli(0.015));
        s.right_valid = !(blink || rng.bernoulli(0.015));
        return s;
    }
};

void write_gaze(RawSample& s, Vec2 p, Rng& rng, double w, double h) {
    s.left_x = clampd(p.x - 12.0 + rng.normal(0.0, 1.5), 0.0, w - 1.0);
    s.left_y = clampd(p.y + rng.normal(0.0, 1.5), 0.0, h - 1.0);
    s.right_x = clampd(p.x + 12.0 + rng.normal(0.0, 1.5), 0.0, w - 1.0);
    s.right_y = clampd(p.y + rng.normal(0.0, 1.5), 0.0, h - 1.0);
}

// Saccade-like alternation between two anchors over the final two seconds of
// the kept data, plus a pupil-dilation / head-approach ramp. Order-sensitive:
// shuffling the window roughly halves the per-step displacement and destroys
// the ramp.
void plant_gaze_burst(std::vector<RawSample>& samples, std::size_t begin, std::size_t end,
                      Rng& cue, double strength, double w, double h) {
    if (end <= begin + 1) return;
    const double lx = 0.15 * w, hx = 0.85 * w, ly = 0.15 * h, hy = 0.85 * h;
    Vec2 a{clampd(samples[begin].left_x + 12.0, lx, hx), clampd(samples[begin].left_y, ly, hy)};
    const double len = strength * 0.30 * std::min(w, h);
    const double ang = cue.uniform(0.0, 2.0 * std::numbers::pi);
    Vec2 b{a.x + len * std::cos(ang), a.y + len * std::sin(ang)};
    if (b.x < lx || b.x > hx || b.y < ly || b.y > hy) {
        b = {a.x - len * std::cos(ang), a.y - len * std::sin(ang)};
        b.x = clampd(b.x, lx, hx);
        b.y = clampd(b.y, ly, hy);
    }
    const double span = static_cast<double>(end - begin - 1);
    for (std::size_t j = begin; j < end; ++j) {
        const double u = span > 0 ? static_cast<double>(j - begin) / span : 1.0;
        Vec2 p = ((j - begin) % 2 == 0) ? a : b;
        p.x += cue.normal(0.0, 3.0);
        p.y += cue.normal(0.0, 3.0);
        write_gaze(samples[j], p, cue, w, h);
        const double dp = strength * 0.7 * u;
        const double dd = strength * 25.0 * u;
        samples[j].left_pupil = std::max(0.5, samples[j].left_pupil + dp);
        samples[j].right_pupil = std::max(0.5, samples[j].right_pupil + dp);
        samples[j].left_dist = std::max(100.0, samples[j].left_dist - dd);
        samples[j].right_dist = std::max(100.0, samples[j].right_dist - dd);
    }
}

// Pupil/head-distance-only burst: same late placement, no gaze change, so the
// scan-path image is untouched. The alternating term gives the ramp an
// order-sensitive texture.
void plant_pupil_burst(std::vector<RawSample>& samples, std::size_t begin, std::size_t end,
                       double strength) {
    if (end <= begin + 1) return;
    const double span = static_cast<double>(end - begin - 1);
    for (std::size_t j = begin; j < end; ++j) {
        const double u = span > 0 ? static_cast<double>(j - begin) / span : 1.0;
        const double alt = ((j - begin) % 2 == 0) ? 1.0 : -1.0;
        const double dp = strength * (0.9 * u + 0.3 * alt * u);
        const double dd = strength * 35.0 * u;
        samples[j].left_pupil = std::max(0.5, samples[j].left_pupil + dp);
        samples[j].right_pupil = std::max(0.5, samples[j].right_pupil + dp);
        samples[j].left_dist = std::max(100.0, samples[j].left_dist - dd);
        samples[j].right_dist = std::max(100.0, samples[j].right_dist - dd);
    }
}

// Two fast loops around a screen-spanning ellipse. The geometry survives any
// reordering of samples (it is a property of the visited positions), and it
// lights a ring in the rasterized image that the base walk never draws.
void plant_ring(std::vector<RawSample>& samples, std::size_t begin, std::size_t end, Rng& cue,
                double strength, double w, double h) {
    if (end <= begin + 1) return;
    constexpr int kWaypoints = 8;
    constexpr int kLegs = 2 * kWaypoints;
    const double phase = cue.uniform(0.0, 2.0 * std::numbers::pi);
    const double f = 0.40 * strength;
    Vec2 ring[kWaypoints];
    for (int k = 0; k < kWaypoints; ++k) {
        const double th = phase + 2.0 * std::numbers::pi * k / kWaypoints;
        ring[k] = {0.5 * w + f * w * std::cos(th), 0.5 * h + f * h * std::sin(th)};
    }
    Vec2 p{samples[begin].left_x + 12.0, samples[begin].left_y};
    const std::size_t n = end - begin;
    for (std::size_t j = begin; j < end; ++j) {
        const std::size_t leg = (j - begin) * kLegs / n;
        const Vec2& tgt = ring[leg % kWaypoints];
        p.x += (tgt.x - p.x) * 0.45 + cue.normal(0.0, 2.0);
        p.y += (tgt.y - p.y) * 0.45 + cue.normal(0.0, 2.0);
        p.x = clampd(p.x, 0.0, w - 1.0);
        p.y = clampd(p.y, 0.0, h - 1.0);
        write_gaze(samples[j], p, cue, w, h);
    }
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
    if (cfg.n_users < 1 || cfg.tasks_per_user < 1) throw InvalidConfig("counts must be >= 1");
    if (cfg.confused_fraction < 0.0 || cfg.confused_fraction > 1.0) {
        throw InvalidConfig("confused_fraction must lie in [0,1]");
    }
    if (cfg.signal_strength < 0.0 || cfg.signal_strength > 1.0) {
        throw InvalidConfig("signal_strength must lie in [0,1]");
    }
    if (cfg.mean_duration_s <= 0.0 || cfg.sd_duration_s < 0.0) {
        throw InvalidConfig("bad duration parameters");
    }
    if (cfg.screen_width < 32 || cfg.screen_height < 32) {
        throw InvalidConfig("screen too small");
    }
    if (cfg.sampling_rate_hz < 10.0) throw InvalidConfig("sampling rate too low");

    const long n_tasks = static_cast<long>(cfg.n_users) * cfg.tasks_per_user;
    const long n_confused = std::llround(cfg.confused_fraction * static_cast<double>(n_tasks));
    std::vector<std::uint32_t> order(static_cast<std::size_t>(n_tasks));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng pick(mix_seed(cfg.seed, {kTagLabelPick}));
    pick.shuffle(order);
    std::vector<std::uint8_t> confused(order.size(), 0);
    for (long i = 0; i < n_confused; ++i) confused[order[static_cast<std::size_t>(i)]] = 1;

    const double rate = cfg.sampling_rate_hz;
    const double w = cfg.screen_width, h = cfg.screen_height;
    // Split mode leaves >5 s between the early spatial episode and the kept
    // end; the floor applies to both classes so duration carries no label.
    const double min_core_s = cfg.signal_mode == SignalMode::Split ? 8.5 : 3.0;
    const double max_core_s = 40.0;
    const long tail = std::llround(rate);  // one second of post-report data

    Dataset ds;
    ds.screen_width = cfg.screen_width;
    ds.screen_height = cfg.screen_height;
    ds.sampling_rate_hz = cfg.sampling_rate_hz;
    ds.tasks.reserve(order.size());

    const int udig = digits_for(cfg.n_users);
    const int tdig = digits_for(cfg.tasks_per_user);
    for (int u = 0; u < cfg.n_users; ++u) {
        const std::string user_id = "u" + pad_number(u + 1, udig);
        for (int k = 0; k < cfg.tasks_per_user; ++k) {
            const std::size_t g = static_cast<std::size_t>(u) * cfg.tasks_per_user + k;
            const bool is_conf = confused[g] != 0;
            Rng rng(mix_seed(cfg.seed, {kTagWalk, g}));
            Rng cue(mix_seed(cfg.seed, {kTagCue, g}));

            const double dur = clampd(rng.normal(cfg.mean_duration_s, cfg.sd_duration_s),
                                      min_core_s, max_core_s);
            const long n_core = std::max<long>(2, std::llround(dur * rate));
            const long n = n_core + (is_conf ? tail : 0);

            TaskRecord task;
            task.user_id = user_id;
            task.task_id = user_id + "_t" + pad_number(k + 1, tdig);
            task.label = is_conf ? Label::Confused : Label::NotConfused;
            task.samples.reserve(static_cast<std::size_t>(n));
            Walker walker(rng, w, h, rate);
            for (long i = 0; i < n; ++i) {
                const double ts = static_cast<double>(std::llround(i * 1000.0 / rate));
                task.samples.push_back(walker.step(ts));
            }
            task.samples[0].left_valid = true;
            task.samples[0].right_valid = true;
            if (is_conf) {
                task.report_time_ms = task.samples.back().timestamp_ms;
                if (cfg.signal_mode != SignalMode::None && cfg.signal_strength > 0.0) {
                    const std::size_t core = static_cast<std::size_t>(n_core);
                    const std::size_t burst_begin =
                        core > static_cast<std::size_t>(std::llround(2.0 * rate))
                            ? core - static_cast<std::size_t>(std::llround(2.0 * rate))
                            : 0;
                    const std::size_t ring_begin =
                        std::min<std::size_t>(core, std::llround(0.5 * rate));
                    const std::size_t ring_end =
                        std::min<std::size_t>(core, std::llround(3.0 * rate));
                    switch (cfg.signal_mode) {
                        case SignalMode::TemporalOnly:
                            plant_gaze_burst(task.samples, burst_begin, core, cue,
                                             cfg.signal_strength, w, h);
                            break;
                        case SignalMode::SpatialOnly:
                            plant_ring(task.samples, ring_begin, ring_end, cue,
                                       cfg.signal_strength, w, h);
                            break;
                        case SignalMode::Both:
                            plant_ring(task.samples, ring_begin, ring_end, cue,
                                       cfg.signal_strength, w, h);
                            plant_gaze_burst(task.samples, burst_begin, core, cue,
                                             cfg.signal_strength, w, h);
                            break;
                        case SignalMode::Split:
                            if (cue.bernoulli(0.5)) {
                                plant_pupil_burst(task.samples, burst_begin, core,
                                                  cfg.signal_strength);
                            } else {
                                plant_ring(task.samples, ring_begin, ring_end, cue,
                                           cfg.signal_strength, w, h);
                            }
                            break;
                        case SignalMode::None:
                            break;
                    }
                }
            }
            ds.tasks.push_back(std::move(task));
        }
    }
    return ds;
}

}  // namespace vtnet::data
