#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "vtnet/et_data.hpp"
#include "vtnet/model.hpp"
#include "vtnet/nn_core.hpp"
#include "vtnet/preprocess.hpp"
#include "vtnet/rng.hpp"

namespace {

using namespace vtnet;

nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    nn::Tensor t = nn::Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void bench_linear_forward(benchmark::State& state) {
    Rng rng(1);
    nn::Linear lin(512, 256, "lin");
    lin.init(rng);
    const nn::Tensor x = random_tensor({64, 512}, rng);
    for (auto _ : state) {
        nn::Linear::Ctx ctx;
        benchmark::DoNotOptimize(lin.forward(x, ctx));
    }
}
BENCHMARK(bench_linear_forward);

void bench_conv_forward(benchmark::State& state) {
    Rng rng(2);
    nn::Conv2d conv(1, 6, 5, "conv");
    conv.init(rng);
    const nn::Tensor x = random_tensor({1, 1, 171, 214}, rng);
    for (auto _ : state) {
        nn::Conv2d::Ctx ctx;
        benchmark::DoNotOptimize(conv.forward(x, ctx));
    }
}
BENCHMARK(bench_conv_forward);

void bench_gru_forward(benchmark::State& state) {
    Rng rng(3);
    nn::Gru gru(8, 256, "gru");
    gru.init(rng);
    const nn::Tensor x = random_tensor({16, 150, 8}, rng);
    const std::vector<std::uint8_t> mask(16 * 150, 1);
    for (auto _ : state) {
        nn::Gru::Ctx ctx;
        benchmark::DoNotOptimize(gru.forward(x, mask, ctx));
    }
}
BENCHMARK(bench_gru_forward);

data::Dataset small_dataset() {
    data::SynthConfig sc;
    sc.n_users = 4;
    sc.tasks_per_user = 4;
    sc.confused_fraction = 0.25;
    sc.seed = 9;
    sc.screen_width = 320;
    sc.screen_height = 256;
    sc.sampling_rate_hz = 30.0;
    sc.mean_duration_s = 10.0;
    sc.sd_duration_s = 2.0;
    return data::synth_generate(sc);
}

void bench_rasterize(benchmark::State& state) {
    const data::Dataset ds = small_dataset();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            prep::rasterize_scanpath(ds.tasks.front(), ds.screen_width, ds.screen_height));
    }
}
BENCHMARK(bench_rasterize);

void bench_build_items(benchmark::State& state) {
    const data::Dataset ds = small_dataset();
    prep::PreprocessConfig pc;
    pc.seq_len = 40;
    for (auto _ : state) {
        benchmark::DoNotOptimize(prep::build_items(ds, pc));
    }
}
BENCHMARK(bench_build_items);

void bench_smote(benchmark::State& state) {
    Rng rng(4);
    std::vector<prep::FeatureSequence> minority(32);
    for (prep::FeatureSequence& s : minority) {
        s.rows = 40;
        s.values.resize(40 * prep::FeatureSequence::kFeatures);
        s.mask.assign(40, 1);
        s.length_valid = 40;
        for (double& v : s.values) v = rng.uniform(0.0, 1.0);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(prep::smote(minority, 200, 5, 7));
    }
}
BENCHMARK(bench_smote);

void bench_training_step(benchmark::State& state) {
    model::VtnetConfig mc;
    mc.hidden_size = 32;
    mc.head_hidden = 32;
    mc.seq_len = 40;
    mc.image_height = 43;
    mc.image_width = 54;
    mc.seed = 5;
    model::VtnetModel m = model::init_model(mc);
    Rng rng(6);
    model::Batch b;
    b.seq = random_tensor({8, 40, 8}, rng);
    b.mask.assign(8 * 40, 1);
    b.img = random_tensor({8, 1, 43, 54}, rng);
    for (double& v : b.img.data) v = v < 0.0 ? 0.0 : v;
    b.targets = {0, 1, 0, 1, 0, 1, 0, 1};
    nn::Adam adam(m.params());
    for (auto _ : state) {
        adam.zero_grad();
        benchmark::DoNotOptimize(model::loss_and_gradients(m, b));
        adam.step(1e-3);
    }
}
BENCHMARK(bench_training_step);

}  // namespace

BENCHMARK_MAIN();
