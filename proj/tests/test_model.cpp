#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vtnet/errors.hpp"
#include "vtnet/io.hpp"
#include "vtnet/model.hpp"
#include "vtnet/nn_core.hpp"
#include "vtnet/rng.hpp"

using namespace vtnet;
using testsup::TempDir;

namespace {

model::VtnetConfig tiny_config(model::Variant variant = model::Variant::Vtnet) {
    model::VtnetConfig cfg;
    cfg.hidden_size = 8;
    cfg.conv1_filters = 2;
    cfg.conv2_filters = 3;
    cfg.kernel = 3;
    cfg.head_hidden = 16;
    cfg.max_epochs = 20;
    cfg.lr0 = 0.01;
    cfg.batch_size = 4;
    cfg.patience = 10;
    cfg.seed = 3;
    cfg.variant = variant;
    cfg.seq_len = 10;
    cfg.seq_features = 8;
    cfg.image_height = 12;
    cfg.image_width = 12;
    return cfg;
}

// One item whose sequence is a constant fill plus per-row ripple and whose
// image carries a corner blob; the two classes get opposite signs/corners.
prep::DataItem make_item(const model::VtnetConfig& cfg, data::Label label, int index,
                         double jitter = 0.0) {
    prep::DataItem it;
    it.label = label;
    it.parent_task_id = (label == data::Label::Confused ? "c" : "n") + std::to_string(index);
    it.user_id = "u" + std::to_string(index % 4);
    it.split_index = index % 4;

    const double fill = label == data::Label::Confused ? 0.8 : -0.8;
    it.sequence.rows = cfg.seq_len;
    it.sequence.values.assign(static_cast<std::size_t>(cfg.seq_len) * 8, 0.0);
    it.sequence.mask.assign(static_cast<std::size_t>(cfg.seq_len), 1);
    it.sequence.length_valid = cfg.seq_len;
    Rng rng(static_cast<std::uint64_t>(index) * 977 + 11);
    for (int t = 0; t < cfg.seq_len; ++t) {
        for (int c = 0; c < 8; ++c) {
            it.sequence.at(t, c) = fill + 0.05 * ((t + c) % 3) + jitter * rng.uniform(-1.0, 1.0);
        }
    }

    auto img = std::make_shared<prep::ScanPathImage>();
    img->height = cfg.image_height;
    img->width = cfg.image_width;
    img->pixels.assign(static_cast<std::size_t>(cfg.image_height) * cfg.image_width, 0.0);
    const int y0 = label == data::Label::Confused ? 0 : cfg.image_height - 4;
    const int x0 = label == data::Label::Confused ? 0 : cfg.image_width - 4;
    for (int y = y0; y < y0 + 4; ++y) {
        for (int x = x0; x < x0 + 4; ++x) img->at(y, x) = 1.0;
    }
    it.image = img;
    return it;
}

std::vector<prep::DataItem> make_items(const model::VtnetConfig& cfg, int per_class,
                                       double jitter = 0.0) {
    std::vector<prep::DataItem> items;
    for (int i = 0; i < per_class; ++i) {
        items.push_back(make_item(cfg, data::Label::Confused, i, jitter));
        items.push_back(make_item(cfg, data::Label::NotConfused, per_class + i, jitter));
    }
    return items;
}

bool params_bit_equal(model::VtnetModel& a, model::VtnetModel& b) {
    auto pa = a.params();
    auto pb = b.params();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->name != pb[i]->name) return false;
        if (pa[i]->value.data != pb[i]->value.data) return false;
    }
    return true;
}

double batch_loss(const model::VtnetModel& m, const model::Batch& batch) {
    const nn::Tensor lp = model::forward(m, batch);
    return nn::nll_loss(lp, batch.targets, nullptr);
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

TEST_CASE("variant strings round-trip") {
    CHECK(model::to_string(model::Variant::GruOnly) == "gru_only");
    CHECK(model::to_string(model::Variant::CnnOnly) == "cnn_only");
    CHECK(model::to_string(model::Variant::Vtnet) == "vtnet");
    CHECK(model::variant_from_string("vtnet") == model::Variant::Vtnet);
    CHECK_THROWS_AS(model::variant_from_string("rnn"), Error);
}

TEST_CASE("config validation") {
    model::VtnetConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    SUBCASE("classes must be two") {
        cfg.classes = 3;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    }
    SUBCASE("lr must be positive") {
        cfg.lr0 = 0.0;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    }
    SUBCASE("negative epochs rejected") {
        cfg.max_epochs = -1;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    }
    SUBCASE("image too small for the conv stack") {
        cfg.kernel = 5;
        cfg.image_height = 8;
        cfg.image_width = 8;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
        cfg.variant = model::Variant::GruOnly;  // no CNN, no constraint
        CHECK_NOTHROW(cfg.validate());
    }
}

TEST_CASE("default geometry matches the documented conv stack") {
    model::VtnetConfig cfg;  // 1280x1024 screen / 6, kernel 5, 150x8 sequences
    CHECK(cfg.image_height == 171);
    CHECK(cfg.image_width == 214);
    CHECK(cfg.conv_out_height() == 39);
    CHECK(cfg.conv_out_width() == 50);
    CHECK(cfg.cnn_flat_size() == 16 * 39 * 50);
    CHECK(cfg.head_input_size() == 256 + 16 * 39 * 50);

    cfg.variant = model::Variant::GruOnly;
    CHECK(cfg.head_input_size() == 256);
    cfg.variant = model::Variant::CnnOnly;
    CHECK(cfg.head_input_size() == 16 * 39 * 50);
}

TEST_CASE("init_model allocates only the live branches") {
    model::VtnetModel full = model::init_model(tiny_config(model::Variant::Vtnet));
    CHECK(full.params().size() == 9 + 4 + 4);  // gru + two convs + two head layers
    CHECK(full.head1.in_features() ==
          static_cast<std::size_t>(tiny_config().head_input_size()));
    CHECK(full.history.empty());

    model::VtnetModel gru = model::init_model(tiny_config(model::Variant::GruOnly));
    CHECK(gru.params().size() == 9 + 4);
    for (nn::Param* p : gru.params()) CHECK(p->name.find("conv") == std::string::npos);

    model::VtnetModel cnn = model::init_model(tiny_config(model::Variant::CnnOnly));
    CHECK(cnn.params().size() == 4 + 4);
    for (nn::Param* p : cnn.params()) CHECK(p->name.find("gru") == std::string::npos);
}

TEST_CASE("init_model is seed-deterministic") {
    model::VtnetModel a = model::init_model(tiny_config());
    model::VtnetModel b = model::init_model(tiny_config());
    CHECK(params_bit_equal(a, b));

    model::VtnetConfig other = tiny_config();
    other.seed = 4;
    model::VtnetModel c = model::init_model(other);
    CHECK_FALSE(params_bit_equal(a, c));
}

TEST_CASE("make_batch shapes and shape errors") {
    const model::VtnetConfig cfg = tiny_config();
    const auto items = make_items(cfg, 2);
    const auto idx = all_indices(items.size());
    const model::Batch batch = model::make_batch(items, idx, cfg);
    CHECK(batch.seq.shape == std::vector<std::size_t>{4, 10, 8});
    CHECK(batch.mask.size() == 40);
    CHECK(batch.img.shape == std::vector<std::size_t>{4, 1, 12, 12});
    CHECK(batch.targets == std::vector<int>{1, 0, 1, 0});

    SUBCASE("gru_only carries no image tensor") {
        const model::VtnetConfig gcfg = tiny_config(model::Variant::GruOnly);
        const model::Batch gb = model::make_batch(items, idx, gcfg);
        CHECK(gb.img.numel() == 0);
        CHECK(gb.seq.numel() > 0);
    }
    SUBCASE("missing image for a CNN variant") {
        auto broken = items;
        broken[1].image = nullptr;
        CHECK_THROWS_AS(model::make_batch(broken, idx, cfg), ShapeMismatch);
    }
    SUBCASE("wrong sequence length") {
        auto broken = items;
        broken[0].sequence.rows = cfg.seq_len + 1;
        broken[0].sequence.values.resize((cfg.seq_len + 1) * 8, 0.0);
        broken[0].sequence.mask.resize(cfg.seq_len + 1, 1);
        CHECK_THROWS_AS(model::make_batch(broken, idx, cfg), ShapeMismatch);
    }
    SUBCASE("wrong image size") {
        auto broken = items;
        auto img = std::make_shared<prep::ScanPathImage>();
        img->height = 5;
        img->width = 5;
        img->pixels.assign(25, 0.0);
        broken[2].image = img;
        CHECK_THROWS_AS(model::make_batch(broken, idx, cfg), ShapeMismatch);
    }
}

TEST_CASE("forward is pure and log-softmax-normalized") {
    const model::VtnetConfig cfg = tiny_config();
    model::VtnetModel m = model::init_model(cfg);
    auto items = make_items(cfg, 2);
    items.push_back(items[0]);  // identical twin of the first item
    const model::Batch batch = model::make_batch(items, all_indices(items.size()), cfg);
    const nn::Tensor lp = model::forward(m, batch);
    REQUIRE(lp.shape == std::vector<std::size_t>{5, 2});
    for (std::size_t r = 0; r < 5; ++r) {
        const double sum = std::exp(lp.data[r * 2]) + std::exp(lp.data[r * 2 + 1]);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(lp.data[0] == lp.data[8]);  // identical inputs, identical outputs
    CHECK(lp.data[1] == lp.data[9]);
}

TEST_CASE("all-zero parameters emit uniform log-probabilities") {
    const model::VtnetConfig cfg = tiny_config();
    model::VtnetModel m = model::init_model(cfg);
    for (nn::Param* p : m.params()) {
        for (auto& v : p->value.data) v = 0.0;
    }
    const auto items = make_items(cfg, 2);
    const model::Batch batch = model::make_batch(items, all_indices(items.size()), cfg);
    const nn::Tensor lp = model::forward(m, batch);
    for (double v : lp.data) CHECK(v == doctest::Approx(std::log(0.5)).epsilon(1e-12));

    const auto preds = model::predict(m, items);
    REQUIRE(preds.size() == items.size());
    for (const auto& p : preds) CHECK(p.score == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("predictions carry provenance and stay within [0,1]") {
    const model::VtnetConfig cfg = tiny_config();
    const model::VtnetModel m = model::init_model(cfg);
    const auto items = make_items(cfg, 3);
    const auto preds = model::predict(m, items);
    REQUIRE(preds.size() == items.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i].item_id == items[i].id());
        CHECK(preds[i].label == items[i].label);
        CHECK(preds[i].parent_task_id == items[i].parent_task_id);
        CHECK(preds[i].user_id == items[i].user_id);
        CHECK(preds[i].score >= 0.0);
        CHECK(preds[i].score <= 1.0);
    }
}

TEST_CASE("both branches are live: zeroing either input changes predictions") {
    const model::VtnetConfig cfg = tiny_config();
    const model::VtnetModel m = model::init_model(cfg);
    const auto items = make_items(cfg, 1);
    const double base = model::predict(m, {items.begin(), items.begin() + 1})[0].score;

    auto no_image = items[0];
    auto blank = std::make_shared<prep::ScanPathImage>();
    blank->height = cfg.image_height;
    blank->width = cfg.image_width;
    blank->pixels.assign(static_cast<std::size_t>(cfg.image_height) * cfg.image_width, 0.0);
    no_image.image = blank;
    std::vector<prep::DataItem> v1{no_image};
    CHECK(model::predict(m, v1)[0].score != base);

    auto no_seq = items[0];
    for (auto& v : no_seq.sequence.values) v = 0.0;
    std::vector<prep::DataItem> v2{no_seq};
    CHECK(model::predict(m, v2)[0].score != base);
}

TEST_CASE("fit applies the exact linear learning-rate decay") {
    model::VtnetConfig cfg = tiny_config(model::Variant::GruOnly);
    cfg.max_epochs = 5;
    cfg.patience = 50;
    const auto items = make_items(cfg, 3);
    const model::VtnetModel m = model::fit(model::init_model(cfg), items, {});
    REQUIRE(m.history.size() == 5);
    for (int e = 0; e < 5; ++e) {
        CHECK(m.history[static_cast<std::size_t>(e)].epoch == e);
        CHECK(m.history[static_cast<std::size_t>(e)].lr == cfg.lr0 * (1.0 - e / 5.0));
    }
}

TEST_CASE("fit is reproducible and max_epochs=0 is the identity") {
    model::VtnetConfig cfg = tiny_config();
    cfg.max_epochs = 4;
    const auto items = make_items(cfg, 4, 0.05);
    const auto val = make_items(cfg, 2, 0.05);

    model::VtnetModel a = model::fit(model::init_model(cfg), items, val);
    model::VtnetModel b = model::fit(model::init_model(cfg), items, val);
    CHECK(params_bit_equal(a, b));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_combined == b.history[i].val_combined);
    }

    SUBCASE("zero epochs returns the initial parameters") {
        model::VtnetConfig zero = cfg;
        zero.max_epochs = 0;
        model::VtnetModel init = model::init_model(zero);
        model::VtnetModel out = model::fit(model::init_model(zero), items, val);
        CHECK(params_bit_equal(init, out));
        CHECK(out.history.empty());
    }
    SUBCASE("empty training set throws") {
        CHECK_THROWS_AS(model::fit(model::init_model(cfg), {}, val), EmptyTrainingSet);
    }
}

TEST_CASE("one small step on a fixed batch decreases the batch loss") {
    model::VtnetConfig cfg = tiny_config();
    cfg.max_epochs = 1;
    cfg.lr0 = 1e-3;
    cfg.batch_size = 64;  // the whole set in one step
    const auto items = make_items(cfg, 4);
    const model::Batch batch = model::make_batch(items, all_indices(items.size()), cfg);

    const model::VtnetModel before = model::init_model(cfg);
    const double loss_before = batch_loss(before, batch);
    const model::VtnetModel after = model::fit(model::init_model(cfg), items, {});
    const double loss_after = batch_loss(after, batch);
    CHECK(loss_after < loss_before);
}

TEST_CASE("fit returns the best validation epoch") {
    model::VtnetConfig cfg = tiny_config();
    cfg.max_epochs = 12;
    cfg.patience = 3;
    const auto train = make_items(cfg, 6, 0.3);
    const auto val = make_items(cfg, 3, 0.3);
    model::VtnetModel m = model::fit(model::init_model(cfg), train, val);
    REQUIRE(!m.history.empty());
    CHECK(m.history.size() <= 12);

    double best = 0.0;
    for (const auto& r : m.history) best = std::max(best, r.val_combined);
    // score the returned parameters on val at the 0.5 threshold
    const auto preds = model::predict(m, val);
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (const auto& p : preds) {
        const bool conf = p.score >= 0.5;
        if (p.label == data::Label::Confused) (conf ? tp : fn) += 1;
        else (conf ? fp : tn) += 1;
    }
    const double sens = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double spec = tn + fp > 0 ? tn / (tn + fp) : 0.0;
    CHECK((sens + spec) / 2.0 == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("a separable 16-item toy set reaches perfect training accuracy") {
    model::VtnetConfig cfg = tiny_config();
    cfg.max_epochs = 100;
    cfg.patience = 100;
    const auto items = make_items(cfg, 8, 0.1);  // 16 items
    REQUIRE(items.size() == 16);
    const model::VtnetModel m = model::fit(model::init_model(cfg), items, items);
    const auto preds = model::predict(m, items);
    int correct = 0;
    for (const auto& p : preds) {
        const bool conf = p.score >= 0.5;
        correct += conf == (p.label == data::Label::Confused) ? 1 : 0;
    }
    CHECK(correct == 16);
    CHECK(m.history.size() <= 100);
}

TEST_CASE("history_tsv lists one row per epoch") {
    model::VtnetConfig cfg = tiny_config(model::Variant::GruOnly);
    cfg.max_epochs = 3;
    cfg.patience = 10;
    const auto items = make_items(cfg, 3);
    const model::VtnetModel m = model::fit(model::init_model(cfg), items, items);
    const std::string tsv = model::history_tsv(m);

    std::istringstream in(tsv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "epoch\tlr\ttrain_loss\tval_sensitivity\tval_specificity\tval_combined");
    int rows = 0;
    while (std::getline(in, line)) {
        std::istringstream cols(line);
        std::string col;
        int n = 0;
        while (std::getline(cols, col, '\t')) {
            double v = 0.0;
            CHECK(io::parse_double(col, v));
            ++n;
        }
        CHECK(n == 6);
        ++rows;
    }
    CHECK(rows == static_cast<int>(m.history.size()));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    TempDir dir;
    model::VtnetConfig cfg = tiny_config();
    cfg.max_epochs = 2;
    cfg.seed = 0xDEADBEEFCAFEF00DULL;  // exercises both 32-bit seed halves
    const auto items = make_items(cfg, 3, 0.05);
    model::VtnetModel m = model::fit(model::init_model(cfg), items, items);
    const auto path = dir / "model.ckpt";
    model::save_checkpoint(m, path);

    const std::string raw = io::read_file(path);
    CHECK(raw.rfind("VTNET1", 0) == 0);

    model::VtnetModel back = model::load_checkpoint(path);
    CHECK(back.config.seed == cfg.seed);
    CHECK(back.config.variant == cfg.variant);
    CHECK(back.config.hidden_size == cfg.hidden_size);
    CHECK(back.config.image_width == cfg.image_width);
    CHECK(back.config.seq_len == cfg.seq_len);
    CHECK(params_bit_equal(m, back));

    const auto before = model::predict(m, items);
    const auto after = model::predict(back, items);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].score == after[i].score);  // bit-exact
    }

    SUBCASE("bad magic") {
        io::atomic_write_file(path, "NOTNET" + raw.substr(6));
        CHECK_THROWS_AS(model::load_checkpoint(path), IoError);
    }
    SUBCASE("truncated payload") {
        io::atomic_write_file(path, raw.substr(0, raw.size() / 2));
        CHECK_THROWS_AS(model::load_checkpoint(path), IoError);
    }
}

TEST_CASE("gradient suite covers every layer and the end-to-end loss") {
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        const auto checks = model::run_gradient_suite(seed);
        REQUIRE(checks.size() == 6);
        bool saw_end_to_end = false;
        for (const auto& c : checks) {
            CAPTURE(c.name);
            CHECK(c.pass);
            CHECK(c.max_rel_err < 1e-4);
            saw_end_to_end = saw_end_to_end || c.name.find("end") != std::string::npos;
        }
        CHECK(saw_end_to_end);
    }
}
