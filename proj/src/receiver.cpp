#include "qhd/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qhd/detail/seed.hpp"
#include "qhd/limits.hpp"
#include "qhd/nn/adam.hpp"
#include "qhd/nn/loss.hpp"

namespace qhd {

namespace {

// Seed sub-streams for one training run.
enum : std::uint64_t { kInitStream = 1, kShuffleStream = 2 };

constexpr std::size_t kInferenceBatch = 32;

void require_even_width(std::size_t w, const char* what) {
    if (w < 4 || w % 2 != 0) {
        throw std::invalid_argument(std::string(what) + ": input width must be even and >= 4, got " + std::to_string(w));
    }
}

nn::Shape3 image_shape(std::size_t width) { return {1, width, width}; }

void check_image(const nn::Network& net, const QuadratureImage& img, const char* what) {
    if (net.input_shape() != image_shape(img.width) || img.pixels.size() != img.width * img.width) {
        throw std::invalid_argument(std::string(what) + ": image width " + std::to_string(img.width) +
                                    " does not match network input " + nn::to_string(net.input_shape()));
    }
}

void check_finite(double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch));
}

// Runs the network in inference mode over all images, in fixed-size chunks.
std::vector<nn::ArrayND> infer_all(const nn::Network& net, const std::vector<const std::vector<double>*>& images) {
    std::vector<nn::ArrayND> out;
    for (std::size_t start = 0; start < images.size(); start += kInferenceBatch) {
        const auto stop = std::min(images.size(), start + kInferenceBatch);
        std::vector<const std::vector<double>*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                                      images.begin() + static_cast<std::ptrdiff_t>(stop));
        out.push_back(net.predict(nn::make_batch(net.input_shape(), chunk)));
    }
    return out;
}

std::size_t argmax_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

}  // namespace

double drop_probability(double rate, DropoutReading reading) noexcept {
    return reading == DropoutReading::drop_probability ? rate : 1.0 - rate;
}

nn::Network build_gnn(const GnnConfig& cfg) {
    require_even_width(cfg.input_width, "build_gnn");
    using namespace nn;
    const auto w = cfg.input_width;
    const auto half = w / 2;
    const Dropout drop{drop_probability(cfg.dropout_rate, cfg.dropout_reading)};
    const KernelSize k5{5, 5};
    std::vector<LayerSpec> layers;
    if (cfg.center_input) layers.emplace_back(Shift{-kPixelMidpoint});
    const std::vector<LayerSpec> body{
        // encoder
        Conv2d{k5, 20, 1},
        Relu{},
        drop,
        MaxPool2d{{2, 2}, 2},
        Conv2d{k5, 20, 1},
        Relu{},
        drop,
        Dense{cfg.latent_units()},
        // decoder
        Dense{half * half * 20, Shape3{20, half, half}},
        drop,
        Conv2d{k5, 20, 1},
        Relu{},
        drop,
        TransposeConv2d{k5, 20, 2},
        Relu{},
        drop,
        Conv2d{k5, 1, 1},
        Linear{},
    };
    layers.insert(layers.end(), body.begin(), body.end());
    Network net(image_shape(w), std::move(layers));
    net.initialize(detail::derive_seed(cfg.seed, {kInitStream}), cfg.init);
    return net;
}

nn::Network build_cnn(const CnnConfig& cfg) {
    require_even_width(cfg.input_width, "build_cnn");
    using namespace nn;
    Network net(image_shape(cfg.input_width),
                {
                    Conv2d{{2, 2}, 10, 1},
                    Relu{},
                    MaxPool2d{{2, 2}, 2},
                    Dense{cfg.fc_units[0]},
                    Relu{},
                    Dropout{drop_probability(cfg.dropout_rates[0], cfg.dropout_reading)},
                    Dense{cfg.fc_units[1]},
                    Relu{},
                    Dropout{drop_probability(cfg.dropout_rates[1], cfg.dropout_reading)},
                    Dense{CnnConfig::kClasses},
                    Linear{},
                });
    net.initialize(detail::derive_seed(cfg.seed, {kInitStream}), cfg.init);
    return net;
}

GnnTraining train_gnn(const HomodyneDataset& noisy, const HomodyneDataset& targets, const GnnConfig& cfg) {
    if (noisy.width() != targets.width() || noisy.width() != cfg.input_width) {
        throw std::invalid_argument("train_gnn: dataset widths do not match the configured input width");
    }
    if (noisy.entries.size() != targets.entries.size() || noisy.per_key() != targets.per_key() ||
        noisy.entries.empty()) {
        throw std::invalid_argument("train_gnn: noisy and target datasets need equal, non-zero per-key counts");
    }
    if (cfg.batch_size == 0) throw std::invalid_argument("train_gnn: batch size must be positive");
    for (std::size_t i = 0; i < noisy.entries.size(); ++i) {
        if (noisy.entries[i].key != targets.entries[i].key) {
            throw std::invalid_argument("train_gnn: key blocks of noisy and target datasets are not aligned");
        }
    }

    GnnTraining result{build_gnn(cfg), {}};
    auto& net = result.net;
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, {kShuffleStream}));
    nn::AdamState adam(cfg.learning_rate);
    adam.epsilon = cfg.adam_epsilon;
    const auto n = noisy.entries.size();
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const auto stop = std::min(n, start + cfg.batch_size);
            std::vector<const std::vector<double>*> xs, ys;
            for (std::size_t j = start; j < stop; ++j) {
                xs.push_back(&noisy.entries[order[j]].image.pixels);
                ys.push_back(&targets.entries[order[j]].image.pixels);
            }
            const auto x = nn::make_batch(net.input_shape(), xs);
            const auto y = nn::make_batch(net.input_shape(), ys);
            const auto acts = net.forward(x, nn::Mode::training, &rng);
            const auto loss = nn::mse_loss(acts.output(), y);
            const auto grads = net.backward(acts, loss.grad);
            nn::adam_update(adam, net.params_mut(), grads.params);
            total += loss.value * static_cast<double>(stop - start);
        }
        const double mean = total / static_cast<double>(n);
        check_finite(mean, epoch);
        result.loss_history.push_back(mean);
        if (cfg.on_epoch) cfg.on_epoch(epoch, mean);
    }
    return result;
}

CnnTraining train_cnn(const HomodyneDataset& labeled, const CnnConfig& cfg) {
    if (labeled.width() != cfg.input_width) throw std::invalid_argument("train_cnn: dataset width mismatch");
    if (labeled.per_key() != cfg.per_key || labeled.entries.size() != cfg.per_key * QpskKey::kCount) {
        throw std::invalid_argument("train_cnn: expected " + std::to_string(cfg.per_key) + " entries per key, got " +
                                    std::to_string(labeled.per_key()));
    }
    if (cfg.held_out_per_key >= cfg.per_key) throw std::invalid_argument("train_cnn: held-out split too large");
    if (cfg.batch_size == 0) throw std::invalid_argument("train_cnn: batch size must be positive");

    const auto train_per_key = cfg.per_key - cfg.held_out_per_key;
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < labeled.entries.size(); ++i) {
        (i % cfg.per_key < train_per_key ? train_idx : test_idx).push_back(i);
    }

    CnnTraining result{build_cnn(cfg), {}, 0, 0};
    auto& net = result.net;
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, {kShuffleStream}));
    nn::AdamState adam(cfg.learning_rate);
    adam.epsilon = cfg.adam_epsilon;
    std::vector<std::size_t> order = train_idx;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order = train_idx;
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<const std::vector<double>*> xs;
            std::vector<std::size_t> labels;
            for (std::size_t j = start; j < stop; ++j) {
                xs.push_back(&labeled.entries[order[j]].image.pixels);
                labels.push_back(labeled.entries[order[j]].key.label());
            }
            const auto acts = net.forward(nn::make_batch(net.input_shape(), xs), nn::Mode::training, &rng);
            const auto loss = nn::softmax_crossentropy_batch(acts.output(), labels);
            const auto grads = net.backward(acts, loss.grad);
            nn::adam_update(adam, net.params_mut(), grads.params);
            total += loss.value * static_cast<double>(stop - start);
        }
        const double mean = total / static_cast<double>(order.size());
        check_finite(mean, epoch);
        result.loss_history.push_back(mean);
        if (cfg.on_epoch) cfg.on_epoch(epoch, mean);
    }

    for (auto i : test_idx) {
        ++result.held_out_total;
        if (classify(net, labeled.entries[i].image).key == labeled.entries[i].key) ++result.held_out_correct;
    }
    return result;
}

QuadratureImage reconstruct(const nn::Network& gnn, const QuadratureImage& img) {
    check_image(gnn, img, "reconstruct");
    if (gnn.output_shape() != gnn.input_shape()) throw std::invalid_argument("reconstruct: not an image-to-image network");
    auto y = gnn.predict(nn::make_batch(gnn.input_shape(), {&img.pixels}));
    QuadratureImage out{img.width, {y.values().begin(), y.values().end()}, PixelUnits::normalized};
    for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
    return out;
}

namespace {

Classification classification_from_logits(std::span<const double> logits) {
    const auto p = nn::softmax(logits);
    Classification c;
    std::copy(p.begin(), p.end(), c.probabilities.begin());
    c.key = QpskKey::from_label(argmax_lowest(p));
    return c;
}

}  // namespace

Classification classify(const nn::Network& cnn, const QuadratureImage& img) {
    check_image(cnn, img, "classify");
    if (cnn.output_shape().size() != CnnConfig::kClasses) throw std::invalid_argument("classify: need four logits");
    const auto logits = cnn.predict(nn::make_batch(cnn.input_shape(), {&img.pixels}));
    return classification_from_logits(logits.values());
}

EvalReport evaluate(const HomodyneDataset& test, const nn::Network& cnn, const nn::Network* gnn) {
    if (test.entries.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (cnn.input_shape() != image_shape(test.width()) ||
        (gnn && gnn->input_shape() != image_shape(test.width()))) {
        throw std::invalid_argument("evaluate: network input width does not match the test set");
    }
    EvalReport r;
    r.signal_db = test.signal_db;
    r.with_gnn = gnn != nullptr;
    r.n_total = test.entries.size();

    std::vector<const std::vector<double>*> inputs;
    inputs.reserve(test.entries.size());
    for (const auto& e : test.entries) inputs.push_back(&e.image.pixels);

    std::vector<std::vector<double>> reconstructed;
    if (gnn) {
        reconstructed.reserve(inputs.size());
        for (const auto& chunk : infer_all(*gnn, inputs)) {
            const auto per = chunk.size() / chunk.extent(0);
            for (std::size_t s = 0; s < chunk.extent(0); ++s) {
                std::vector<double> px(chunk.values().begin() + static_cast<std::ptrdiff_t>(s * per),
                                       chunk.values().begin() + static_cast<std::ptrdiff_t>((s + 1) * per));
                for (double& p : px) p = std::clamp(p, 0.0, 1.0);
                reconstructed.push_back(std::move(px));
            }
        }
        for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i] = &reconstructed[i];
    }

    std::size_t index = 0;
    for (const auto& chunk : infer_all(cnn, inputs)) {
        for (std::size_t s = 0; s < chunk.extent(0); ++s, ++index) {
            const auto c = classification_from_logits(chunk.values().subspan(s * CnnConfig::kClasses, CnnConfig::kClasses));
            const auto truth = test.entries[index].key;
            ++r.confusion[truth.label()][c.key.label()];
            if (c.key != truth) ++r.n_wrong;
        }
    }

    r.p_network = static_cast<double>(r.n_wrong) / static_cast<double>(r.n_total);
    const auto bounds = error_bounds(Amplitude::from_db(test.signal_db));
    r.p_hd = bounds.p_hd;
    r.p_hel = bounds.p_hel;
    r.p_err = combine_error(r.p_hd, r.p_network);
    const auto rel = relative_errors(r.p_err, r.p_hd, r.p_hel);
    r.p_relative = rel.p_relative;
    r.p_relative_hd = rel.p_relative_hd;
    return r;
}

void write_report_json(std::ostream& out, const EvalReport& r) {
    nlohmann::ordered_json j;
    j["signal_db"] = r.signal_db;
    j["variant"] = r.with_gnn ? "hd-gnn-cnn" : "hd-cnn";
    j["n_total"] = r.n_total;
    j["n_wrong"] = r.n_wrong;
    j["p_network"] = r.p_network;
    j["p_hd"] = r.p_hd;
    j["p_hel"] = r.p_hel;
    j["p_err"] = r.p_err;
    j["p_relative"] = r.p_relative;
    j["p_relative_hd"] = r.p_relative_hd;
    j["confusion"] = r.confusion;
    out << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
    out.precision(17);
    out << "signal_db,variant,n_total,n_wrong,p_network,p_hd,p_hel,p_err,p_relative,p_relative_hd\n";
    out << r.signal_db << ',' << (r.with_gnn ? "hd-gnn-cnn" : "hd-cnn") << ',' << r.n_total << ',' << r.n_wrong << ','
        << r.p_network << ',' << r.p_hd << ',' << r.p_hel << ',' << r.p_err << ',' << r.p_relative << ','
        << r.p_relative_hd << '\n';
}

}  // namespace qhd
