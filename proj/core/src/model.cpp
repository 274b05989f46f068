#include "vtnet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include "vtnet/errors.hpp"
#include "vtnet/io.hpp"
#include "vtnet/rng.hpp"

namespace vtnet::model {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::GruOnly: return "gru_only";
        case Variant::CnnOnly: return "cnn_only";
        case Variant::Vtnet: return "vtnet";
    }
    throw Error("bad variant value");
}

Variant variant_from_string(const std::string& s) {
    if (s == "gru_only") return Variant::GruOnly;
    if (s == "cnn_only") return Variant::CnnOnly;
    if (s == "vtnet") return Variant::Vtnet;
    throw InvalidConfig("unknown variant: '" + s + "'");
}

void VtnetConfig::validate() const {
    if (hidden_size < 1 || conv1_filters < 1 || conv2_filters < 1 || kernel < 1 ||
        head_hidden < 1 || batch_size < 1 || seq_len < 1 || seq_features < 1) {
        throw InvalidConfig("model dimensions must be >= 1");
    }
    if (classes != 2) throw InvalidConfig("binary classifier: classes must be 2");
    if (max_epochs < 0 || patience < 0) throw InvalidConfig("negative training bound");
    if (!(lr0 > 0.0)) throw InvalidConfig("lr0 must be > 0");
    if (has_cnn()) {
        if (conv_out_height() < 1 || conv_out_width() < 1) {
            throw InvalidConfig("image too small for the conv stack");
        }
    }
}

namespace {

int stack_dim(int in, int kernel) {
    const int c1 = in - kernel + 1;
    const int p1 = c1 / 2;
    const int c2 = p1 - kernel + 1;
    return c2 / 2;
}

}  // namespace

int VtnetConfig::conv_out_height() const { return stack_dim(image_height, kernel); }
int VtnetConfig::conv_out_width() const { return stack_dim(image_width, kernel); }

int VtnetConfig::cnn_flat_size() const {
    return conv2_filters * conv_out_height() * conv_out_width();
}

int VtnetConfig::head_input_size() const {
    return (has_gru() ? hidden_size : 0) + (has_cnn() ? cnn_flat_size() : 0);
}

std::vector<nn::Param*> VtnetModel::params() {
    std::vector<nn::Param*> out;
    if (config.has_gru()) {
        for (nn::Param* p : gru.params()) out.push_back(p);
    }
    if (config.has_cnn()) {
        for (nn::Param* p : conv1.params()) out.push_back(p);
        for (nn::Param* p : conv2.params()) out.push_back(p);
    }
    for (nn::Param* p : head1.params()) out.push_back(p);
    for (nn::Param* p : head2.params()) out.push_back(p);
    return out;
}

VtnetModel init_model(const VtnetConfig& cfg) {
    cfg.validate();
    VtnetModel m;
    m.config = cfg;
    Rng rng(mix_seed(cfg.seed, {0x1417}));
    const std::size_t hidden = static_cast<std::size_t>(cfg.hidden_size);
    if (cfg.has_gru()) {
        m.gru = nn::Gru(static_cast<std::size_t>(cfg.seq_features), hidden, "gru");
        m.gru.init(rng);
    }
    if (cfg.has_cnn()) {
        m.conv1 = nn::Conv2d(1, static_cast<std::size_t>(cfg.conv1_filters),
                             static_cast<std::size_t>(cfg.kernel), "conv1");
        m.conv2 = nn::Conv2d(static_cast<std::size_t>(cfg.conv1_filters),
                             static_cast<std::size_t>(cfg.conv2_filters),
                             static_cast<std::size_t>(cfg.kernel), "conv2");
        m.conv1.init(rng);
        m.conv2.init(rng);
    }
    m.head1 = nn::Linear(static_cast<std::size_t>(cfg.head_input_size()),
                         static_cast<std::size_t>(cfg.head_hidden), "head1");
    m.head2 = nn::Linear(static_cast<std::size_t>(cfg.head_hidden),
                         static_cast<std::size_t>(cfg.classes), "head2");
    m.head1.init(rng);
    m.head2.init(rng);
    return m;
}

Batch make_batch(std::span<const prep::DataItem> items, std::span<const std::size_t> idx,
                 const VtnetConfig& cfg) {
    Batch b;
    const std::size_t n = idx.size();
    if (n == 0) throw EmptyInput("empty batch");
    const std::size_t t_len = static_cast<std::size_t>(cfg.seq_len);
    const std::size_t feats = static_cast<std::size_t>(cfg.seq_features);
    if (cfg.has_gru()) {
        b.seq = nn::Tensor::zeros({n, t_len, feats});
        b.mask.assign(n * t_len, 0);
    }
    if (cfg.has_cnn()) {
        b.img = nn::Tensor::zeros({n, 1, static_cast<std::size_t>(cfg.image_height),
                                   static_cast<std::size_t>(cfg.image_width)});
    }
    b.targets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const prep::DataItem& it = items[idx[i]];
        b.targets[i] = static_cast<int>(it.label);
        if (cfg.has_gru()) {
            if (it.sequence.rows != cfg.seq_len ||
                it.sequence.values.size() != t_len * feats) {
                throw ShapeMismatch("item '" + it.id() + "': sequence length " +
                                    std::to_string(it.sequence.rows) + ", model expects " +
                                    std::to_string(cfg.seq_len));
            }
            std::copy(it.sequence.values.begin(), it.sequence.values.end(),
                      b.seq.data.begin() + static_cast<std::ptrdiff_t>(i * t_len * feats));
            std::copy(it.sequence.mask.begin(), it.sequence.mask.end(),
                      b.mask.begin() + static_cast<std::ptrdiff_t>(i * t_len));
        }
        if (cfg.has_cnn()) {
            if (!it.image) {
                throw ShapeMismatch("item '" + it.id() + "' has no image for a CNN variant");
            }
            if (it.image->height != cfg.image_height || it.image->width != cfg.image_width) {
                throw ShapeMismatch("item '" + it.id() + "': image " +
                                    std::to_string(it.image->width) + "x" +
                                    std::to_string(it.image->height) + ", model expects " +
                                    std::to_string(cfg.image_width) + "x" +
                                    std::to_string(cfg.image_height));
            }
            std::copy(it.image->pixels.begin(), it.image->pixels.end(),
                      b.img.data.begin() +
                          static_cast<std::ptrdiff_t>(i * it.image->pixels.size()));
        }
    }
    return b;
}

namespace {

struct Tape {
    nn::Gru::Ctx gru;
    nn::Conv2d::Ctx c1, c2;
    nn::ReluCtx r1, r2, rh;
    nn::PoolCtx p1, p2;
    nn::Linear::Ctx h1, h2;
    std::size_t n = 0;
    std::size_t gru_width = 0;
    std::size_t cnn_width = 0;
};

nn::Tensor run_forward(const VtnetModel& m, const Batch& batch, Tape& tape) {
    const VtnetConfig& cfg = m.config;
    tape.n = batch.targets.size();
    nn::Tensor gru_out, cnn_flat;
    if (cfg.has_gru()) {
        gru_out = m.gru.forward(batch.seq, batch.mask, tape.gru);
        tape.gru_width = static_cast<std::size_t>(cfg.hidden_size);
    }
    if (cfg.has_cnn()) {
        nn::Tensor y = m.conv1.forward(batch.img, tape.c1);
        y = nn::relu(y, tape.r1);
        y = nn::maxpool2(y, tape.p1);
        y = m.conv2.forward(y, tape.c2);
        y = nn::relu(y, tape.r2);
        y = nn::maxpool2(y, tape.p2);
        tape.cnn_width = y.numel() / tape.n;
        cnn_flat = std::move(y);
        cnn_flat.shape = {tape.n, tape.cnn_width};
    }
    nn::Tensor concat;
    if (cfg.has_gru() && cfg.has_cnn()) {
        concat = nn::Tensor::zeros({tape.n, tape.gru_width + tape.cnn_width});
        for (std::size_t i = 0; i < tape.n; ++i) {
            std::copy(gru_out.data.begin() + static_cast<std::ptrdiff_t>(i * tape.gru_width),
                      gru_out.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * tape.gru_width),
                      concat.data.begin() +
                          static_cast<std::ptrdiff_t>(i * (tape.gru_width + tape.cnn_width)));
            std::copy(cnn_flat.data.begin() + static_cast<std::ptrdiff_t>(i * tape.cnn_width),
                      cnn_flat.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * tape.cnn_width),
                      concat.data.begin() +
                          static_cast<std::ptrdiff_t>(i * (tape.gru_width + tape.cnn_width) +
                                                      tape.gru_width));
        }
    } else if (cfg.has_gru()) {
        concat = std::move(gru_out);
    } else {
        concat = std::move(cnn_flat);
    }
    nn::Tensor hid = m.head1.forward(concat, tape.h1);
    hid = nn::relu(hid, tape.rh);
    nn::Tensor logits = m.head2.forward(hid, tape.h2);
    return nn::log_softmax(logits);
}

void run_backward(VtnetModel& m, Tape& tape, const nn::Tensor& dlogits) {
    const VtnetConfig& cfg = m.config;
    nn::Tensor dhid = m.head2.backward(dlogits, tape.h2);
    dhid = nn::relu_backward(dhid, tape.rh);
    nn::Tensor dconcat = m.head1.backward(dhid, tape.h1);
    nn::Tensor dgru, dcnn;
    if (cfg.has_gru() && cfg.has_cnn()) {
        dgru = nn::Tensor::zeros({tape.n, tape.gru_width});
        dcnn = nn::Tensor::zeros({tape.n, tape.cnn_width});
        const std::size_t w = tape.gru_width + tape.cnn_width;
        for (std::size_t i = 0; i < tape.n; ++i) {
            std::copy(dconcat.data.begin() + static_cast<std::ptrdiff_t>(i * w),
                      dconcat.data.begin() + static_cast<std::ptrdiff_t>(i * w + tape.gru_width),
                      dgru.data.begin() + static_cast<std::ptrdiff_t>(i * tape.gru_width));
            std::copy(dconcat.data.begin() + static_cast<std::ptrdiff_t>(i * w + tape.gru_width),
                      dconcat.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * w),
                      dcnn.data.begin() + static_cast<std::ptrdiff_t>(i * tape.cnn_width));
        }
    } else if (cfg.has_gru()) {
        dgru = std::move(dconcat);
    } else {
        dcnn = std::move(dconcat);
    }
    if (cfg.has_gru()) {
        (void)m.gru.backward(dgru, tape.gru);
    }
    if (cfg.has_cnn()) {
        dcnn.shape = {tape.n, static_cast<std::size_t>(cfg.conv2_filters),
                      static_cast<std::size_t>(cfg.conv_out_height()),
                      static_cast<std::size_t>(cfg.conv_out_width())};
        nn::Tensor d = nn::maxpool2_backward(dcnn, tape.p2);
        d = nn::relu_backward(d, tape.r2);
        d = m.conv2.backward(d, tape.c2);
        d = nn::maxpool2_backward(d, tape.p1);
        d = nn::relu_backward(d, tape.r1);
        (void)m.conv1.backward(d, tape.c1);
    }
}

std::vector<std::vector<double>> snapshot_params(VtnetModel& m) {
    std::vector<std::vector<double>> snap;
    for (nn::Param* p : m.params()) snap.push_back(p->value.data);
    return snap;
}

void restore_params(VtnetModel& m, const std::vector<std::vector<double>>& snap) {
    std::vector<nn::Param*> ps = m.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data = snap[i];
}

}  // namespace

nn::Tensor forward(const VtnetModel& m, const Batch& batch) {
    Tape tape;
    return run_forward(m, batch, tape);
}

double loss_and_gradients(VtnetModel& m, const Batch& batch) {
    Tape tape;
    nn::Tensor logprobs = run_forward(m, batch, tape);
    nn::Tensor dlogits;
    const double loss = nn::nll_loss(logprobs, batch.targets, &dlogits);
    run_backward(m, tape, dlogits);
    return loss;
}

std::vector<Prediction> predict(const VtnetModel& m, std::span<const prep::DataItem> items) {
    std::vector<Prediction> out;
    out.reserve(items.size());
    const std::size_t bs = static_cast<std::size_t>(m.config.batch_size);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < items.size(); start += bs) {
        const std::size_t end = std::min(items.size(), start + bs);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch batch = make_batch(items, idx, m.config);
        const nn::Tensor logprobs = forward(m, batch);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const prep::DataItem& it = items[idx[i]];
            Prediction p;
            p.item_id = it.id();
            p.score = std::exp(logprobs[i * 2 + 1]);
            p.label = it.label;
            p.parent_task_id = it.parent_task_id;
            p.user_id = it.user_id;
            p.synthetic = it.synthetic;
            out.push_back(std::move(p));
        }
    }
    return out;
}

namespace {

// Sensitivity/specificity/combined at the fixed 0.5 threshold, for the early
// stopping monitor.
std::array<double, 3> val_accuracy(const std::vector<Prediction>& preds) {
    long tp = 0, fn = 0, tn = 0, fp = 0;
    for (const Prediction& p : preds) {
        const bool pred_conf = p.score >= 0.5;
        if (p.label == data::Label::Confused) {
            (pred_conf ? tp : fn)++;
        } else {
            (pred_conf ? fp : tn)++;
        }
    }
    const double sens = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double spec = (tn + fp) > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
    return {sens, spec, 0.5 * (sens + spec)};
}

}  // namespace

VtnetModel fit(VtnetModel m, std::span<const prep::DataItem> train,
               std::span<const prep::DataItem> val) {
    if (train.empty()) throw EmptyTrainingSet("no training items");
    const VtnetConfig& cfg = m.config;
    cfg.validate();

    nn::Adam adam(m.params());
    Rng shuffle_rng(mix_seed(cfg.seed, {0x5eed}));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    double best_combined = -1.0;
    std::vector<std::vector<double>> best_params;
    int since_best = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr =
            cfg.lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs));
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Batch batch = make_batch(train, idx, cfg);
            adam.zero_grad();
            const double loss = loss_and_gradients(m, batch);
            adam.step(lr);
            loss_sum += loss * static_cast<double>(end - start);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) {
            const std::array<double, 3> acc = val_accuracy(predict(m, val));
            rec.val_sensitivity = acc[0];
            rec.val_specificity = acc[1];
            rec.val_combined = acc[2];
        }
        m.history.push_back(rec);
        if (val.empty()) continue;
        if (rec.val_combined > best_combined) {
            best_combined = rec.val_combined;
            best_params = snapshot_params(m);
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= cfg.patience) break;
        }
    }
    if (!best_params.empty()) restore_params(m, best_params);
    return m;
}

std::string history_tsv(const VtnetModel& m) {
    std::string out = "epoch\tlr\ttrain_loss\tval_sensitivity\tval_specificity\tval_combined\n";
    for (const EpochRecord& r : m.history) {
        out += std::to_string(r.epoch);
        out += '\t';
        out += io::format_double(r.lr);
        out += '\t';
        out += io::format_double(r.train_loss);
        out += '\t';
        out += io::format_double(r.val_sensitivity);
        out += '\t';
        out += io::format_double(r.val_specificity);
        out += '\t';
        out += io::format_double(r.val_combined);
        out += '\n';
    }
    return out;
}

namespace {

constexpr char kMagic[6] = {'V', 'T', 'N', 'E', 'T', '1'};

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
    const std::string& s;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > s.size()) throw IoError("truncated checkpoint");
    }
    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        }
        pos += 8;
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string out = s.substr(pos, n);
        pos += n;
        return out;
    }
};

void put_record(std::string& out, const std::string& name, const std::vector<std::size_t>& dims,
                const double* data, std::size_t count) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (std::size_t d : dims) put_u64(out, d);
    for (std::size_t i = 0; i < count; ++i) put_f64(out, data[i]);
}

void put_scalar(std::string& out, const std::string& name, double v) {
    put_record(out, name, {}, &v, 1);
}

struct Record {
    std::vector<std::size_t> dims;
    std::vector<double> data;
};

}  // namespace

void save_checkpoint(const VtnetModel& m, const std::filesystem::path& path) {
    VtnetModel& mm = const_cast<VtnetModel&>(m);  // params() is logically const here
    std::vector<nn::Param*> params = mm.params();
    std::string out(kMagic, sizeof(kMagic));
    const std::size_t meta_count = 17;
    put_u64(out, params.size() + meta_count);
    const VtnetConfig& c = m.config;
    put_scalar(out, "meta/hidden_size", c.hidden_size);
    put_scalar(out, "meta/conv1_filters", c.conv1_filters);
    put_scalar(out, "meta/conv2_filters", c.conv2_filters);
    put_scalar(out, "meta/kernel", c.kernel);
    put_scalar(out, "meta/head_hidden", c.head_hidden);
    put_scalar(out, "meta/classes", c.classes);
    put_scalar(out, "meta/max_epochs", c.max_epochs);
    put_scalar(out, "meta/lr0", c.lr0);
    put_scalar(out, "meta/batch_size", c.batch_size);
    put_scalar(out, "meta/patience", c.patience);
    put_scalar(out, "meta/seed_lo", static_cast<double>(c.seed & 0xffffffffULL));
    put_scalar(out, "meta/seed_hi", static_cast<double>(c.seed >> 32));
    put_scalar(out, "meta/variant", static_cast<double>(static_cast<int>(c.variant)));
    put_scalar(out, "meta/seq_len", c.seq_len);
    put_scalar(out, "meta/seq_features", c.seq_features);
    put_scalar(out, "meta/image_height", c.image_height);
    put_scalar(out, "meta/image_width", c.image_width);
    for (const nn::Param* p : params) {
        put_record(out, p->name, p->value.shape, p->value.data.data(), p->value.numel());
    }
    io::atomic_write_file(path, out);
}

VtnetModel load_checkpoint(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    ByteReader r{text};
    if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw IoError(path.string() + ": bad checkpoint magic");
    }
    const std::uint64_t count = r.get_u64();
    std::map<std::string, Record> records;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.get_u32();
        std::string name = r.get_bytes(name_len);
        const std::uint32_t rank = r.get_u32();
        Record rec;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            rec.dims.push_back(static_cast<std::size_t>(r.get_u64()));
            numel *= rec.dims.back();
        }
        rec.data.resize(numel);
        for (std::size_t j = 0; j < numel; ++j) rec.data[j] = r.get_f64();
        records.emplace(std::move(name), std::move(rec));
    }
    auto scalar = [&](const std::string& name) -> double {
        auto it = records.find(name);
        if (it == records.end() || it->second.data.size() != 1) {
            throw IoError(path.string() + ": missing checkpoint field " + name);
        }
        return it->second.data[0];
    };
    VtnetConfig cfg;
    cfg.hidden_size = static_cast<int>(scalar("meta/hidden_size"));
    cfg.conv1_filters = static_cast<int>(scalar("meta/conv1_filters"));
    cfg.conv2_filters = static_cast<int>(scalar("meta/conv2_filters"));
    cfg.kernel = static_cast<int>(scalar("meta/kernel"));
    cfg.head_hidden = static_cast<int>(scalar("meta/head_hidden"));
    cfg.classes = static_cast<int>(scalar("meta/classes"));
    cfg.max_epochs = static_cast<int>(scalar("meta/max_epochs"));
    cfg.lr0 = scalar("meta/lr0");
    cfg.batch_size = static_cast<int>(scalar("meta/batch_size"));
    cfg.patience = static_cast<int>(scalar("meta/patience"));
    cfg.seed = static_cast<std::uint64_t>(scalar("meta/seed_lo")) |
               (static_cast<std::uint64_t>(scalar("meta/seed_hi")) << 32);
    cfg.variant = static_cast<Variant>(static_cast<int>(scalar("meta/variant")));
    cfg.seq_len = static_cast<int>(scalar("meta/seq_len"));
    cfg.seq_features = static_cast<int>(scalar("meta/seq_features"));
    cfg.image_height = static_cast<int>(scalar("meta/image_height"));
    cfg.image_width = static_cast<int>(scalar("meta/image_width"));

    VtnetModel m = init_model(cfg);
    for (nn::Param* p : m.params()) {
        auto it = records.find(p->name);
        if (it == records.end()) {
            throw IoError(path.string() + ": missing parameter " + p->name);
        }
        if (it->second.dims != p->value.shape || it->second.data.size() != p->value.numel()) {
            throw IoError(path.string() + ": shape mismatch for " + p->name);
        }
        p->value.data = it->second.data;
        p->zero_grad();
    }
    return m;
}

namespace {

double weighted_sum(const nn::Tensor& y, const std::vector<double>& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * weights[i];
    return s;
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
    std::vector<double> w(n);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    return w;
}

void fill_uniform(nn::Tensor& t, Rng& rng, double a) {
    for (double& v : t.data) v = rng.uniform(-a, a);
}

LayerCheck check_linear(std::uint64_t seed) {
    Rng rng(mix_seed(seed, {11}));
    nn::Linear lin(4, 3, "lin");
    lin.init(rng);
    nn::Param x("x", {3, 4});
    fill_uniform(x.value, rng, 1.0);
    const std::vector<double> w = random_weights(9, rng);
    auto loss = [&]() {
        nn::Linear::Ctx ctx;
        return weighted_sum(lin.forward(x.value, ctx), w);
    };
    nn::Linear::Ctx ctx;
    nn::Tensor y = lin.forward(x.value, ctx);
    nn::Tensor dy = y;
    std::copy(w.begin(), w.end(), dy.data.begin());
    x.grad = lin.backward(dy, ctx);
    std::vector<nn::Param*> ps{&lin.weight(), &lin.bias(), &x};
    const nn::GradCheckResult res = nn::grad_check(ps, loss);
    return {"linear", res.max_rel_err, res.pass()};
}

LayerCheck check_conv(std::uint64_t seed) {
    Rng rng(mix_seed(seed, {12}));
    nn::Conv2d conv(1, 2, 5, "conv");
    conv.init(rng);
    nn::Param x("x", {1, 1, 8, 8});
    fill_uniform(x.value, rng, 1.0);
    const std::vector<double> w = random_weights(2 * 4 * 4, rng);
    auto loss = [&]() {
        nn::Conv2d::Ctx ctx;
        return weighted_sum(conv.forward(x.value, ctx), w);
    };
    nn::Conv2d::Ctx ctx;
    nn::Tensor y = conv.forward(x.value, ctx);
    nn::Tensor dy = y;
    std::copy(w.begin(), w.end(), dy.data.begin());
    x.grad = conv.backward(dy, ctx);
    std::vector<nn::Param*> ps{&conv.weight(), &conv.bias(), &x};
    const nn::GradCheckResult res = nn::grad_check(ps, loss);
    return {"conv2d", res.max_rel_err, res.pass()};
}

// ReLU and max-pool are checked at points away from their kinks: instances
// whose preactivations sit within 1e-4 of a tie or zero are redrawn.
LayerCheck check_relu_pool(std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, {13, attempt}));
        nn::Param x("x", {1, 2, 6, 6});
        fill_uniform(x.value, rng, 1.0);
        bool safe = true;
        for (double v : x.value.data) {
            if (std::fabs(v) < 1e-3) safe = false;
        }
        nn::ReluCtx rctx;
        nn::PoolCtx pctx;
        nn::Tensor y = nn::relu(x.value, rctx);
        y = nn::maxpool2(y, pctx);
        // Tie safety: the pooled max must clear the runner-up by a margin.
        for (std::size_t nc = 0; nc < 2 && safe; ++nc) {
            nn::Tensor after_relu = x.value;
            for (double& v : after_relu.data) v = std::max(v, 0.0);
            const double* plane = after_relu.data.data() + nc * 36;
            for (std::size_t i = 0; i < 3 && safe; ++i) {
                for (std::size_t j = 0; j < 3 && safe; ++j) {
                    double vals[4] = {plane[(2 * i) * 6 + 2 * j], plane[(2 * i) * 6 + 2 * j + 1],
                                      plane[(2 * i + 1) * 6 + 2 * j],
                                      plane[(2 * i + 1) * 6 + 2 * j + 1]};
                    std::sort(vals, vals + 4);
                    if (vals[3] - vals[2] < 1e-3) safe = false;
                }
            }
        }
        if (!safe) continue;
        const std::vector<double> w = random_weights(y.numel(), rng);
        auto loss = [&]() {
            nn::ReluCtx rc;
            nn::PoolCtx pc;
            nn::Tensor t = nn::relu(x.value, rc);
            t = nn::maxpool2(t, pc);
            return weighted_sum(t, w);
        };
        nn::Tensor dy = y;
        std::copy(w.begin(), w.end(), dy.data.begin());
        nn::Tensor dx = nn::maxpool2_backward(dy, pctx);
        x.grad = nn::relu_backward(dx, rctx);
        std::vector<nn::Param*> ps{&x};
        const nn::GradCheckResult res = nn::grad_check(ps, loss);
        return {"relu_maxpool", res.max_rel_err, res.pass()};
    }
}

LayerCheck check_gru(std::uint64_t seed) {
    Rng rng(mix_seed(seed, {14}));
    nn::Gru gru(3, 4, "gru");
    gru.init(rng);
    nn::Param x("x", {2, 6, 3});
    fill_uniform(x.value, rng, 1.0);
    // One fully live row, one with a padded prefix: the mask path must be
    // differentiated too.
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1};
    const std::vector<double> w = random_weights(2 * 4, rng);
    auto loss = [&]() {
        nn::Gru::Ctx ctx;
        return weighted_sum(gru.forward(x.value, mask, ctx), w);
    };
    nn::Gru::Ctx ctx;
    nn::Tensor h = gru.forward(x.value, mask, ctx);
    nn::Tensor dh = h;
    std::copy(w.begin(), w.end(), dh.data.begin());
    x.grad = gru.backward(dh, ctx);
    std::vector<nn::Param*> ps = gru.params();
    ps.push_back(&x);
    const nn::GradCheckResult res = nn::grad_check(ps, loss);
    return {"gru", res.max_rel_err, res.pass()};
}

LayerCheck check_loss(std::uint64_t seed) {
    Rng rng(mix_seed(seed, {15}));
    nn::Param logits("logits", {2});
    fill_uniform(logits.value, rng, 2.0);
    const int target = static_cast<int>(rng.uniform_index(2));
    auto loss = [&]() { return nn::log_softmax_nll(logits.value, target, nullptr); };
    nn::Tensor dl;
    nn::log_softmax_nll(logits.value, target, &dl);
    logits.grad = dl;
    std::vector<nn::Param*> ps{&logits};
    const nn::GradCheckResult res = nn::grad_check(ps, loss);
    return {"log_softmax_nll", res.max_rel_err, res.pass()};
}

LayerCheck check_end_to_end(std::uint64_t seed) {
    VtnetConfig cfg;
    cfg.hidden_size = 4;
    cfg.conv1_filters = 2;
    cfg.conv2_filters = 3;
    cfg.kernel = 3;
    cfg.head_hidden = 5;
    cfg.seq_len = 6;
    cfg.image_height = 16;
    cfg.image_width = 16;
    cfg.variant = Variant::Vtnet;
    for (std::uint64_t attempt = 0;; ++attempt) {
        cfg.seed = mix_seed(seed, {16, attempt});
        VtnetModel m = init_model(cfg);
        Rng rng(mix_seed(cfg.seed, {17}));
        Batch b;
        b.seq = nn::Tensor::zeros({2, 6, 8});
        fill_uniform(b.seq, rng, 1.0);
        b.mask.assign(12, 1);
        for (std::size_t t = 0; t < 2; ++t) b.mask[6 + t] = 0;  // padded prefix, row 1
        b.img = nn::Tensor::zeros({2, 1, 16, 16});
        for (double& v : b.img.data) v = rng.uniform01();
        b.targets = {0, 1};
        // Kink screening: every ReLU preactivation must clear zero by a
        // margin, or the instance is redrawn. Pool ties are covered too
        // because conv preactivations of a continuous input almost surely
        // differ; the margin below also rejects near-ties after ReLU.
        bool safe = true;
        {
            const double margin = 1e-3;
            nn::Conv2d::Ctx c1;
            nn::Tensor y1 = m.conv1.forward(b.img, c1);
            for (double v : y1.data) {
                if (std::fabs(v) < margin) safe = false;
            }
            nn::ReluCtx r1;
            nn::PoolCtx p1;
            nn::Tensor a1 = nn::relu(y1, r1);
            nn::Tensor q1 = nn::maxpool2(a1, p1);
            nn::Conv2d::Ctx c2;
            nn::Tensor y2 = m.conv2.forward(q1, c2);
            for (double v : y2.data) {
                if (std::fabs(v) < margin) safe = false;
            }
            Tape tape;
            (void)run_forward(m, b, tape);
            nn::Linear::Ctx hctx;
            const nn::Tensor preact = m.head1.forward(tape.h1.x, hctx);
            for (double v : preact.data) {
                if (std::fabs(v) < margin) safe = false;
            }
        }
        if (!safe) continue;
        auto loss = [&]() {
            const nn::Tensor lp = forward(m, b);
            return nn::nll_loss(lp, b.targets, nullptr);
        };
        for (nn::Param* p : m.params()) p->zero_grad();
        (void)loss_and_gradients(m, b);
        std::vector<nn::Param*> ps = m.params();
        const nn::GradCheckResult res = nn::grad_check(ps, loss);
        return {"vtnet_end_to_end", res.max_rel_err, res.pass()};
    }
}

}  // namespace

std::vector<LayerCheck> run_gradient_suite(std::uint64_t seed) {
    std::vector<LayerCheck> out;
    out.push_back(check_linear(seed));
    out.push_back(check_conv(seed));
    out.push_back(check_relu_pool(seed));
    out.push_back(check_gru(seed));
    out.push_back(check_loss(seed));
    out.push_back(check_end_to_end(seed));
    return out;
}

}  // namespace vtnet::model
