#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "qhd/homodyne.hpp"
#include "qhd/nn/network.hpp"

namespace qhd {

/// How a configured dropout "rate" is turned into a drop probability.
enum class DropoutReading : std::uint8_t { drop_probability, keep_probability };

double drop_probability(double rate, DropoutReading reading) noexcept;

/// Pixel value of a zero quadrature reading.
inline constexpr double kPixelMidpoint = 0.5;

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

struct GnnConfig {
    std::size_t input_width = 30;
    std::size_t epochs = 150;
    std::size_t batch_size = 10;
    double learning_rate = 0.002;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    double dropout_rate = 0.2;
    DropoutReading dropout_reading = DropoutReading::drop_probability;
    nn::InitScheme init = nn::InitScheme::he_normal;
    /// Subtract the pixel window midpoint before the first convolution.
    bool center_input = true;
    EpochCallback on_epoch;

    [[nodiscard]] std::size_t latent_units() const noexcept { return (input_width / 2) * (input_width / 2); }
};

struct CnnConfig {
    static constexpr std::size_t kClasses = 4;

    std::size_t input_width = 30;
    std::size_t epochs = 10;
    std::size_t batch_size = 1;
    double learning_rate = 0.001;
    double adam_epsilon = 1e-8;
    std::array<std::size_t, 2> fc_units{400, 50};
    std::array<double, 2> dropout_rates{0.8, 0.4};
    DropoutReading dropout_reading = DropoutReading::drop_probability;
    std::size_t per_key = 200;
    std::size_t held_out_per_key = 30;
    std::uint64_t seed = 0;
    nn::InitScheme init = nn::InitScheme::he_normal;
    EpochCallback on_epoch;
};

/// Denoising network: conv encoder, dense latent of (W/2)^2 units, dense +
/// conv + stride-2 transpose-conv decoder, single linear output map.
/// Parameters are initialized from cfg.seed.
nn::Network build_gnn(const GnnConfig& cfg);

/// Classifier: conv 2x2 x10, max-pool, dense 400 and 50 with dropout, four
/// linear logits. Softmax is applied by the loss and by classify().
nn::Network build_cnn(const CnnConfig& cfg);

struct GnnTraining {
    nn::Network net;
    std::vector<double> loss_history;  ///< mean per-image loss for each epoch
};

/// Trains on (noisy[i], targets[i]) pairs; datasets must share width and
/// per-key counts so index i pairs images of the same key.
GnnTraining train_gnn(const HomodyneDataset& noisy, const HomodyneDataset& targets, const GnnConfig& cfg);

struct CnnTraining {
    nn::Network net;
    std::vector<double> loss_history;
    std::size_t held_out_total = 0;
    std::size_t held_out_correct = 0;
    [[nodiscard]] double held_out_accuracy() const {
        return held_out_total == 0 ? 0.0 : static_cast<double>(held_out_correct) / static_cast<double>(held_out_total);
    }
};

/// Splits each key block into its first (per_key - held_out) entries for
/// training and the rest for the held-out accuracy.
CnnTraining train_cnn(const HomodyneDataset& labeled, const CnnConfig& cfg);

/// Inference-mode GNN pass, clamped to [0,1].
QuadratureImage reconstruct(const nn::Network& gnn, const QuadratureImage& img);

struct Classification {
    QpskKey key = QpskKey::from_index(1);
    std::array<double, 4> probabilities{};
};

/// Argmax of the softmax; ties go to the lowest key index.
Classification classify(const nn::Network& cnn, const QuadratureImage& img);

struct EvalReport {
    double signal_db = 0.0;
    bool with_gnn = false;
    std::size_t n_total = 0;
    std::size_t n_wrong = 0;
    double p_network = 0.0;
    double p_hd = 0.0;
    double p_hel = 0.0;
    double p_err = 0.0;
    double p_relative = 0.0;
    double p_relative_hd = 0.0;
    std::array<std::array<std::size_t, 4>, 4> confusion{};  ///< [true key][predicted key]
};

/// HD-CNN when gnn is null, HD-GNN-CNN otherwise. Never modifies the networks.
EvalReport evaluate(const HomodyneDataset& test, const nn::Network& cnn, const nn::Network* gnn = nullptr);

void write_report_json(std::ostream& out, const EvalReport& r);
void write_report_csv(std::ostream& out, const EvalReport& r);

}  // namespace qhd
