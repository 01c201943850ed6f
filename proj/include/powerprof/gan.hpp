#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "powerprof/common.hpp"
#include "powerprof/features.hpp"
#include "powerprof/matrix.hpp"
#include "powerprof/neural.hpp"

namespace powerprof {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct GanConfig {
    std::size_t input_dim = 186;
    std::size_t latent_dim = 10;
    std::size_t encoder_hidden = 40;
    std::size_t generator_hidden = 128;
    std::vector<std::size_t> critic_data_hidden = {100, 10};

    std::size_t n_critic = 5;   // critic batches per encoder/generator batch
    double clip = 0.01;         // critic weight clamp [-clip, clip]
    double alpha = 10.0;        // reconstruction weight in the E/G loss
    // Debug scale on both adversarial terms of the E/G loss. Zero turns the
    // model into a plain autoencoder and skips critic updates entirely.
    double adversarial_weight = 1.0;

    double lr_critic = 5e-5;
    double lr_gen = 1e-3;  // encoder+generator; recon term needs a faster rate
    std::size_t batch = 64;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
};

void validate_gan_config(const GanConfig& cfg);

nlohmann::json gan_config_to_json(const GanConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
GanConfig gan_config_from_json(const nlohmann::json& j, const std::string& origin);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct GanEpochStats {
    // per-epoch means; the critic values are Wasserstein estimates
    // (mean score on real minus mean score on generated)
    double critic_data_w = 0.0;
    double critic_latent_w = 0.0;
    double gen_loss = 0.0;
    double recon_mse = 0.0;  // per-entry mean squared reconstruction error
};

struct GanTrainLog {
    double initial_recon_mse = 0.0;  // full data, before any update
    double final_recon_mse = 0.0;    // full data, after the last epoch
    std::vector<GanEpochStats> epochs;
};

struct GanModel {
    GanConfig config;
    Network encoder;        // input_dim -> latent_dim, batchnorm after first affine
    Network generator;      // latent_dim -> input_dim
    Network critic_data;    // input_dim -> 1
    Network critic_latent;  // latent_dim -> 1
    Scaler scaler;          // the standardization this model was trained under
    std::string scaler_id;  // digest of the scaler json, "" when not attached
    GanTrainLog log;
};

// ---------------------------------------------------------------------------
// Training and inference
// ---------------------------------------------------------------------------

// Wasserstein training with weight clipping over standardized feature rows.
// Each outer cycle runs n_critic critic batches (data critic on real vs
// generated rows, latent critic on prior draws vs encoded rows, both clipped
// after their update) followed by one encoder/generator batch minimizing
//   -w * mean C1(G(z)) - w * mean C2(E(x)) + alpha * mean ||x - G(E(x))||^2.
// Deterministic for a fixed config. The optional scaler is stored in the
// model for downstream use and hashed into scaler_id.
GanModel train_gan(const FeatureMatrix& standardized, const GanConfig& cfg,
                   const Scaler* scaler = nullptr);

struct LatentMatrix {
    std::vector<std::string> job_ids;
    std::vector<std::vector<double>> rows;
};

// Inference-mode encoder pass; preserves row order.
LatentMatrix encode_features(GanModel& model, const FeatureMatrix& standardized);
Matrix encode_batch(GanModel& model, const Matrix& x);

// G(E(x)) in inference mode.
Matrix reconstruct(GanModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// Distribution comparison
// ---------------------------------------------------------------------------

struct FeatureDistribution {
    double mean_real = 0.0;
    double mean_recon = 0.0;
    double std_real = 0.0;
    double std_recon = 0.0;
    double ks = 0.0;  // two-sample Kolmogorov-Smirnov statistic
};

// Per-column comparison of two matrices of equal width.
std::vector<FeatureDistribution> distribution_check(const Matrix& real, const Matrix& recon);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

// Payload round trip is exact: a reloaded model encodes bitwise identically.
nlohmann::json gan_model_to_payload(const GanModel& model);
GanModel gan_model_from_payload(const nlohmann::json& payload);

// csv: job_id,z0..z{d-1}
std::string latents_to_csv(const LatentMatrix& latents);
LatentMatrix latents_from_csv(std::string_view text, const std::string& origin);
void write_latents(const std::filesystem::path& path, const LatentMatrix& latents);
LatentMatrix read_latents(const std::filesystem::path& path);

}  // namespace powerprof
