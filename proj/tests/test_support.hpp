#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vtnet/et_data.hpp"
#include "vtnet/preprocess.hpp"

namespace testsup {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<unsigned> counter{0};
        std::random_device rd;
        const std::string name = "vtnet_test_" + std::to_string(rd()) + "_" +
                                 std::to_string(counter.fetch_add(1));
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& sub) const { return path / sub; }
    std::string str(const std::string& sub) const { return (path / sub).string(); }
};

// One fully valid sample with both eyes at (x, y).
inline vtnet::data::RawSample sample_at(double ts, double x, double y, double pupil = 3.5,
                                        double dist = 620.0) {
    vtnet::data::RawSample s;
    s.timestamp_ms = ts;
    s.left_x = s.right_x = x;
    s.left_y = s.right_y = y;
    s.left_pupil = s.right_pupil = pupil;
    s.left_dist = s.right_dist = dist;
    s.left_valid = s.right_valid = true;
    return s;
}

// n samples on a dt_ms grid wandering inside the screen bounds.
inline vtnet::data::TaskRecord make_task(const std::string& user, const std::string& id,
                                         int n, double dt_ms = 10.0, double x0 = 100.0,
                                         double y0 = 100.0) {
    vtnet::data::TaskRecord t;
    t.user_id = user;
    t.task_id = id;
    t.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = x0 + 40.0 * ((i * 7) % 13);
        const double y = y0 + 30.0 * ((i * 5) % 11);
        t.samples.push_back(sample_at(i * dt_ms, x, y, 3.0 + 0.01 * (i % 9),
                                      600.0 + 0.5 * (i % 7)));
    }
    return t;
}

}  // namespace testsup
