#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vtnet/et_data.hpp"
#include "vtnet/nn_core.hpp"
#include "vtnet/preprocess.hpp"

namespace vtnet::model {

enum class Variant { GruOnly, CnnOnly, Vtnet };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct VtnetConfig {
    int hidden_size = 256;
    int conv1_filters = 6;
    int conv2_filters = 16;
    int kernel = 5;
    int head_hidden = 256;
    int classes = 2;
    int max_epochs = 100;
    double lr0 = 1e-3;
    int batch_size = 64;
    int patience = 10;
    std::uint64_t seed = 0;
    Variant variant = Variant::Vtnet;

    // Input geometry; defaults match a 1280x1024 screen downsized by 6 and
    // the 150-step split sequences.
    int seq_len = 150;
    int seq_features = 8;
    int image_height = 171;
    int image_width = 214;

    void validate() const;  // throws InvalidConfig

    bool has_gru() const { return variant != Variant::CnnOnly; }
    bool has_cnn() const { return variant != Variant::GruOnly; }
    // Spatial size after conv(k) -> pool2 -> conv(k) -> pool2.
    int conv_out_height() const;
    int conv_out_width() const;
    int cnn_flat_size() const;
    int head_input_size() const;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_sensitivity = 0.0;
    double val_specificity = 0.0;
    double val_combined = 0.0;
};

struct Prediction {
    std::string item_id;
    double score = 0.0;  // probability of the confused class
    data::Label label = data::Label::NotConfused;
    std::string parent_task_id;
    std::string user_id;
    bool synthetic = false;
};

// Tensor views of a batch of items, ready for the network.
struct Batch {
    nn::Tensor seq;                  // (N, T, F); empty when variant is cnn_only
    std::vector<std::uint8_t> mask;  // N*T
    nn::Tensor img;                  // (N, 1, H, W); empty when variant is gru_only
    std::vector<int> targets;        // N
};

class VtnetModel {
  public:
    VtnetModel() = default;

    VtnetConfig config;
    std::vector<EpochRecord> history;

    nn::Gru gru;        // used iff config.has_gru()
    nn::Conv2d conv1;   // used iff config.has_cnn()
    nn::Conv2d conv2;
    nn::Linear head1;
    nn::Linear head2;

    std::vector<nn::Param*> params();
};

VtnetModel init_model(const VtnetConfig& cfg);

Batch make_batch(std::span<const prep::DataItem> items, std::span<const std::size_t> idx,
                 const VtnetConfig& cfg);

// Log-probabilities (N, classes). Pure: allocates its own scratch, safe to
// call concurrently on a shared model.
nn::Tensor forward(const VtnetModel& m, const Batch& batch);

// One full forward+backward over a batch; returns the mean NLL and leaves
// gradients accumulated in the model's params.
double loss_and_gradients(VtnetModel& m, const Batch& batch);

// Adam + linear LR decay (lr_e = lr0*(1 - e/max_epochs)) + early stopping on
// validation combined accuracy at the 0.5 threshold (patience epochs without
// improvement), restoring the best epoch's parameters. Empty val disables
// early stopping and keeps the final epoch. History is appended per epoch.
VtnetModel fit(VtnetModel m, std::span<const prep::DataItem> train,
               std::span<const prep::DataItem> val);

std::vector<Prediction> predict(const VtnetModel& m, std::span<const prep::DataItem> items);

// Tab-separated history: epoch, lr, train_loss, val_sensitivity,
// val_specificity, val_combined. One row per epoch, header included.
std::string history_tsv(const VtnetModel& m);

// Binary checkpoint: magic "VTNET1", u64 record count, then per record a
// u32-length-prefixed name, u32 rank, rank u64 dims, and the float64 payload,
// all little-endian. Config scalars travel as rank-0 "meta/..." records.
// Round-trips bit-exactly.
void save_checkpoint(const VtnetModel& m, const std::filesystem::path& path);
VtnetModel load_checkpoint(const std::filesystem::path& path);

struct LayerCheck {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Finite-difference verification of every layer's analytic gradient plus the
// end-to-end loss on a tiny model. Tolerance 1e-4.
std::vector<LayerCheck> run_gradient_suite(std::uint64_t seed);

}  // namespace vtnet::model
