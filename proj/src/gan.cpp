#include "powerprof/gan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace powerprof {

using nlohmann::json;

namespace {

Matrix to_matrix(const FeatureMatrix& fm) {
    Matrix x(fm.rows.size(), kNumFeatures);
    for (std::size_t i = 0; i < fm.rows.size(); ++i) {
        std::copy(fm.rows[i].begin(), fm.rows[i].end(), x.row(i));
    }
    return x;
}

Matrix sample_normal(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix z(rows, cols);
    for (double& v : z.data) v = rng.normal(0.0, 1.0);
    return z;
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& perm, std::size_t first,
                   std::size_t count) {
    Matrix out(count, x.cols);
    for (std::size_t i = 0; i < count; ++i) {
        const double* src = x.row(perm[first + i]);
        std::copy(src, src + x.cols, out.row(i));
    }
    return out;
}

double mean_of(const Matrix& scores) {
    double acc = 0.0;
    for (double v : scores.data) acc += v;
    return acc / static_cast<double>(scores.data.size());
}

// uniform dLoss/dScore for a mean-of-scores term
Matrix fill_dy(std::size_t rows, double value) {
    Matrix dy(rows, 1);
    for (double& v : dy.data) v = value;
    return dy;
}

// per-entry mean squared error between equal-shape matrices
double mse_between(const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

void require_finite(double v, const char* what, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "gan train: non-finite " << what << " (" << v << ") at epoch " << epoch
            << ", batch " << batch;
        throw NumericError(msg.str());
    }
}

double full_recon_mse(GanModel& model, const Matrix& x) {
    Matrix xhat = reconstruct(model, x);
    return mse_between(x, xhat);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void validate_gan_config(const GanConfig& cfg) {
    if (cfg.input_dim != kNumFeatures) {
        throw ConfigError("gan config: input_dim must be " + std::to_string(kNumFeatures));
    }
    if (cfg.latent_dim == 0 || cfg.latent_dim >= cfg.input_dim) {
        throw ConfigError("gan config: latent_dim must be in [1, input_dim)");
    }
    if (cfg.encoder_hidden == 0 || cfg.generator_hidden == 0) {
        throw ConfigError("gan config: hidden widths must be > 0");
    }
    for (std::size_t h : cfg.critic_data_hidden) {
        if (h == 0) throw ConfigError("gan config: critic hidden widths must be > 0");
    }
    if (cfg.n_critic < 1) throw ConfigError("gan config: n_critic must be >= 1");
    if (cfg.clip <= 0.0) throw ConfigError("gan config: clip must be > 0");
    if (cfg.alpha < 0.0) throw ConfigError("gan config: alpha must be >= 0");
    if (cfg.adversarial_weight < 0.0) {
        throw ConfigError("gan config: adversarial_weight must be >= 0");
    }
    if (cfg.lr_critic <= 0.0 || cfg.lr_gen <= 0.0) {
        throw ConfigError("gan config: learning rates must be > 0");
    }
    if (cfg.batch < 2) throw ConfigError("gan config: batch must be >= 2");
    if (cfg.epochs < 1) throw ConfigError("gan config: epochs must be >= 1");
}

json gan_config_to_json(const GanConfig& cfg) {
    return json{{"input_dim", cfg.input_dim},
                {"latent_dim", cfg.latent_dim},
                {"encoder_hidden", cfg.encoder_hidden},
                {"generator_hidden", cfg.generator_hidden},
                {"critic_data_hidden", cfg.critic_data_hidden},
                {"n_critic", cfg.n_critic},
                {"clip", cfg.clip},
                {"alpha", cfg.alpha},
                {"adversarial_weight", cfg.adversarial_weight},
                {"lr_critic", cfg.lr_critic},
                {"lr_gen", cfg.lr_gen},
                {"batch", cfg.batch},
                {"epochs", cfg.epochs},
                {"seed", cfg.seed}};
}

GanConfig gan_config_from_json(const json& j, const std::string& origin) {
    if (!j.is_object()) throw ConfigError(origin + ": gan config must be a json object");
    GanConfig cfg;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            if (key == "input_dim") cfg.input_dim = it->get<std::size_t>();
            else if (key == "latent_dim") cfg.latent_dim = it->get<std::size_t>();
            else if (key == "encoder_hidden") cfg.encoder_hidden = it->get<std::size_t>();
            else if (key == "generator_hidden") cfg.generator_hidden = it->get<std::size_t>();
            else if (key == "critic_data_hidden")
                cfg.critic_data_hidden = it->get<std::vector<std::size_t>>();
            else if (key == "n_critic") cfg.n_critic = it->get<std::size_t>();
            else if (key == "clip") cfg.clip = it->get<double>();
            else if (key == "alpha") cfg.alpha = it->get<double>();
            else if (key == "adversarial_weight") cfg.adversarial_weight = it->get<double>();
            else if (key == "lr_critic") cfg.lr_critic = it->get<double>();
            else if (key == "lr_gen") cfg.lr_gen = it->get<double>();
            else if (key == "batch") cfg.batch = it->get<std::size_t>();
            else if (key == "epochs") cfg.epochs = it->get<std::size_t>();
            else if (key == "seed") cfg.seed = it->get<std::uint64_t>();
            else throw ConfigError(origin + ": unknown gan config key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": bad gan config: " + e.what());
    }
    validate_gan_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

GanModel train_gan(const FeatureMatrix& standardized, const GanConfig& cfg,
                   const Scaler* scaler) {
    validate_gan_config(cfg);
    const std::size_t n = standardized.rows.size();
    if (n < 10 * cfg.batch) {
        throw DataError("gan train: need at least 10x batch rows, got " + std::to_string(n) +
                        " for batch " + std::to_string(cfg.batch));
    }
    Matrix x_all = to_matrix(standardized);
    {
        double grand = 0.0;
        for (double v : x_all.data) grand += v;
        grand /= static_cast<double>(x_all.data.size());
        if (std::abs(grand) > 1.0) {
            throw DataError("gan train: features do not look standardized (grand mean " +
                            fmt_double(grand) + ")");
        }
    }

    Rng rng = Rng::for_stage(cfg.seed, "gan.train");

    GanModel model;
    model.config = cfg;
    model.encoder = make_mlp({cfg.input_dim, cfg.encoder_hidden, cfg.latent_dim}, rng,
                             /*batchnorm_after_first=*/true);
    model.generator = make_mlp({cfg.latent_dim, cfg.generator_hidden, cfg.input_dim}, rng);
    {
        std::vector<std::size_t> c1_dims;
        c1_dims.push_back(cfg.input_dim);
        c1_dims.insert(c1_dims.end(), cfg.critic_data_hidden.begin(),
                       cfg.critic_data_hidden.end());
        c1_dims.push_back(1);
        model.critic_data = make_mlp(c1_dims, rng);
    }
    model.critic_latent = make_mlp({cfg.latent_dim, 1}, rng);
    if (scaler) {
        model.scaler = *scaler;
        model.scaler_id = sha256_hex(scaler_to_json(*scaler));
    }

    Network& enc = model.encoder;
    Network& gen = model.generator;
    Network& c1 = model.critic_data;
    Network& c2 = model.critic_latent;

    RmsProp opt_enc(cfg.lr_gen), opt_gen(cfg.lr_gen);
    RmsProp opt_c1(cfg.lr_critic), opt_c2(cfg.lr_critic);

    model.log.initial_recon_mse = full_recon_mse(model, x_all);

    const std::size_t batches_per_epoch = n / cfg.batch;
    const double b = static_cast<double>(cfg.batch);
    const double w_adv = cfg.adversarial_weight;
    std::size_t cycle = 0;  // position within the n_critic+1 batch cycle

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> perm = rng.permutation(n);
        GanEpochStats stats;
        std::size_t critic_batches = 0, gen_batches = 0;

        for (std::size_t bi = 0; bi < batches_per_epoch; ++bi) {
            Matrix x = gather_rows(x_all, perm, bi * cfg.batch, cfg.batch);
            const bool critic_turn = w_adv != 0.0 && cycle < cfg.n_critic;
            cycle = (cycle + 1) % (cfg.n_critic + 1);

            if (critic_turn) {
                // data critic: maximize mean C1(x) - mean C1(G(z))
                Matrix z = sample_normal(rng, cfg.batch, cfg.latent_dim);
                Matrix x_fake = gen.forward(z, true);
                Matrix s_real = c1.forward(x, true);
                c1.backward(fill_dy(cfg.batch, -1.0 / b));
                Matrix s_fake = c1.forward(x_fake, true);
                c1.backward(fill_dy(cfg.batch, +1.0 / b));
                double w1 = mean_of(s_real) - mean_of(s_fake);
                require_finite(w1, "data critic estimate", epoch, bi);
                opt_c1.step(c1.params());
                c1.zero_grads();
                clip_weights(c1, cfg.clip);

                // latent critic: maximize mean C2(z) - mean C2(E(x))
                Matrix z_prior = sample_normal(rng, cfg.batch, cfg.latent_dim);
                Matrix z_enc = enc.forward(x, true);
                Matrix s_prior = c2.forward(z_prior, true);
                c2.backward(fill_dy(cfg.batch, -1.0 / b));
                Matrix s_enc = c2.forward(z_enc, true);
                c2.backward(fill_dy(cfg.batch, +1.0 / b));
                double w2 = mean_of(s_prior) - mean_of(s_enc);
                require_finite(w2, "latent critic estimate", epoch, bi);
                opt_c2.step(c2.params());
                c2.zero_grads();
                clip_weights(c2, cfg.clip);

                stats.critic_data_w += w1;
                stats.critic_latent_w += w2;
                ++critic_batches;
            } else {
                // encoder/generator: minimize
                //   -w*mean C1(G(z)) - w*mean C2(E(x)) + alpha*mean ||x - G(E(x))||^2
                double adv_data = 0.0, adv_latent = 0.0;
                if (w_adv != 0.0) {
                    Matrix z = sample_normal(rng, cfg.batch, cfg.latent_dim);
                    Matrix x_fake = gen.forward(z, true);
                    Matrix s_fake = c1.forward(x_fake, true);
                    adv_data = mean_of(s_fake);
                    Matrix dx_fake = c1.backward(fill_dy(cfg.batch, -w_adv / b));
                    gen.backward(dx_fake);
                }

                Matrix z_enc = enc.forward(x, true);
                Matrix dz(cfg.batch, cfg.latent_dim);
                if (w_adv != 0.0) {
                    Matrix s_enc = c2.forward(z_enc, true);
                    adv_latent = mean_of(s_enc);
                    dz = c2.backward(fill_dy(cfg.batch, -w_adv / b));
                }

                Matrix x_hat = gen.forward(z_enc, true);
                double recon = 0.0;
                Matrix dx_hat(cfg.batch, cfg.input_dim);
                for (std::size_t i = 0; i < x_hat.data.size(); ++i) {
                    double d = x_hat.data[i] - x.data[i];
                    recon += d * d;
                    dx_hat.data[i] = cfg.alpha * 2.0 * d / b;
                }
                recon /= b;  // mean over rows of the squared row norm
                Matrix dz_rec = gen.backward(dx_hat);
                for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] += dz_rec.data[i];
                enc.backward(dz);

                double loss = -w_adv * adv_data - w_adv * adv_latent + cfg.alpha * recon;
                require_finite(loss, "encoder/generator loss", epoch, bi);
                opt_enc.step(enc.params());
                opt_gen.step(gen.params());
                enc.zero_grads();
                gen.zero_grads();
                c1.zero_grads();  // discard pass-through grads
                c2.zero_grads();

                stats.gen_loss += loss;
                stats.recon_mse += recon / static_cast<double>(cfg.input_dim);
                ++gen_batches;
            }
        }

        if (critic_batches > 0) {
            stats.critic_data_w /= static_cast<double>(critic_batches);
            stats.critic_latent_w /= static_cast<double>(critic_batches);
        }
        if (gen_batches > 0) {
            stats.gen_loss /= static_cast<double>(gen_batches);
            stats.recon_mse /= static_cast<double>(gen_batches);
        }
        model.log.epochs.push_back(stats);
    }

    model.log.final_recon_mse = full_recon_mse(model, x_all);
    log_info("gan train: " + std::to_string(cfg.epochs) + " epochs, recon mse " +
             fmt_double(model.log.initial_recon_mse) + " -> " +
             fmt_double(model.log.final_recon_mse));
    return model;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

Matrix encode_batch(GanModel& model, const Matrix& x) {
    if (x.cols != model.config.input_dim) {
        throw DataError("encode: expected " + std::to_string(model.config.input_dim) +
                        " columns, got " + std::to_string(x.cols));
    }
    return model.encoder.forward(x, false);
}

LatentMatrix encode_features(GanModel& model, const FeatureMatrix& standardized) {
    Matrix z = encode_batch(model, to_matrix(standardized));
    LatentMatrix out;
    out.job_ids = standardized.job_ids;
    out.rows.reserve(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) out.rows.push_back(z.row_vec(i));
    return out;
}

Matrix reconstruct(GanModel& model, const Matrix& x) {
    if (x.cols != model.config.input_dim) {
        throw DataError("reconstruct: expected " + std::to_string(model.config.input_dim) +
                        " columns, got " + std::to_string(x.cols));
    }
    Matrix z = model.encoder.forward(x, false);
    return model.generator.forward(z, false);
}

// ---------------------------------------------------------------------------
// Distribution comparison
// ---------------------------------------------------------------------------

namespace {

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        double x;
        if (i >= a.size()) x = b[j];
        else if (j >= b.size()) x = a[i];
        else x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

}  // namespace

std::vector<FeatureDistribution> distribution_check(const Matrix& real, const Matrix& recon) {
    if (real.cols != recon.cols) {
        throw DataError("distribution_check: column count mismatch, " + std::to_string(real.cols) +
                        " vs " + std::to_string(recon.cols));
    }
    if (real.rows == 0 || recon.rows == 0) {
        throw DataError("distribution_check: empty matrix");
    }
    std::vector<FeatureDistribution> report(real.cols);
    std::vector<double> col_real(real.rows), col_recon(recon.rows);
    for (std::size_t c = 0; c < real.cols; ++c) {
        for (std::size_t r = 0; r < real.rows; ++r) col_real[r] = real.at(r, c);
        for (std::size_t r = 0; r < recon.rows; ++r) col_recon[r] = recon.at(r, c);

        auto mean_std = [](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            var /= static_cast<double>(v.size());
            return std::pair<double, double>(mean, std::sqrt(var));
        };
        auto [mr, sr] = mean_std(col_real);
        auto [mg, sg] = mean_std(col_recon);
        report[c].mean_real = mr;
        report[c].std_real = sr;
        report[c].mean_recon = mg;
        report[c].std_recon = sg;
        report[c].ks = ks_two_sample(col_real, col_recon);
    }
    return report;
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

json gan_model_to_payload(const GanModel& model) {
    json log_epochs = json::array();
    for (const GanEpochStats& e : model.log.epochs) {
        log_epochs.push_back(json{{"critic_data_w", e.critic_data_w},
                                  {"critic_latent_w", e.critic_latent_w},
                                  {"gen_loss", e.gen_loss},
                                  {"recon_mse", e.recon_mse}});
    }
    return json{{"config", gan_config_to_json(model.config)},
                {"seed", model.config.seed},
                {"encoder", model.encoder.to_json()},
                {"generator", model.generator.to_json()},
                {"critic_data", model.critic_data.to_json()},
                {"critic_latent", model.critic_latent.to_json()},
                {"scaler", json{{"means", model.scaler.means}, {"stds", model.scaler.stds}}},
                {"scaler_id", model.scaler_id},
                {"log", json{{"initial_recon_mse", model.log.initial_recon_mse},
                             {"final_recon_mse", model.log.final_recon_mse},
                             {"epochs", log_epochs}}}};
}

GanModel gan_model_from_payload(const json& payload) {
    GanModel model;
    try {
        model.config = gan_config_from_json(payload.at("config"), "gan model payload");
        model.encoder = Network::from_json(payload.at("encoder"));
        model.generator = Network::from_json(payload.at("generator"));
        model.critic_data = Network::from_json(payload.at("critic_data"));
        model.critic_latent = Network::from_json(payload.at("critic_latent"));
        model.scaler.means = payload.at("scaler").at("means").get<std::vector<double>>();
        model.scaler.stds = payload.at("scaler").at("stds").get<std::vector<double>>();
        model.scaler_id = payload.at("scaler_id").get<std::string>();
        model.log.initial_recon_mse = payload.at("log").at("initial_recon_mse").get<double>();
        model.log.final_recon_mse = payload.at("log").at("final_recon_mse").get<double>();
        for (const json& e : payload.at("log").at("epochs")) {
            GanEpochStats s;
            s.critic_data_w = e.at("critic_data_w").get<double>();
            s.critic_latent_w = e.at("critic_latent_w").get<double>();
            s.gen_loss = e.at("gen_loss").get<double>();
            s.recon_mse = e.at("recon_mse").get<double>();
            model.log.epochs.push_back(s);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("bad gan model payload: ") + e.what());
    }
    return model;
}

std::string latents_to_csv(const LatentMatrix& latents) {
    if (latents.job_ids.size() != latents.rows.size()) {
        throw DataError("latents_to_csv: job id count does not match rows");
    }
    std::size_t dim = latents.rows.empty() ? 0 : latents.rows[0].size();
    std::string out = "job_id";
    for (std::size_t d = 0; d < dim; ++d) out += ",z" + std::to_string(d);
    out += "\n";
    for (std::size_t i = 0; i < latents.rows.size(); ++i) {
        if (latents.rows[i].size() != dim) {
            throw DataError("latents_to_csv: ragged latent rows");
        }
        out += latents.job_ids[i];
        for (double v : latents.rows[i]) {
            out += ',';
            out += fmt_double(v);
        }
        out += '\n';
    }
    return out;
}

LatentMatrix latents_from_csv(std::string_view text, const std::string& origin) {
    LatentMatrix out;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> cells = split_csv_line(line);
        if (line_no == 1) {
            if (cells.size() < 2 || cells[0] != "job_id") {
                throw DataError(origin + ": bad latent csv header");
            }
            for (std::size_t i = 1; i < cells.size(); ++i) {
                if (cells[i] != "z" + std::to_string(i - 1)) {
                    throw DataError(origin + ": bad latent csv header column " +
                                    std::string(cells[i]));
                }
            }
            dim = cells.size() - 1;
            continue;
        }
        if (cells.size() != dim + 1) {
            throw DataError(origin + ": wrong cell count, line " + std::to_string(line_no));
        }
        out.job_ids.emplace_back(cells[0]);
        std::vector<double> row(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            row[i] = parse_double(cells[i + 1], origin + " line " + std::to_string(line_no));
        }
        out.rows.push_back(std::move(row));
    }
    if (line_no == 0) throw DataError(origin + ": empty latent csv");
    return out;
}

void write_latents(const std::filesystem::path& path, const LatentMatrix& latents) {
    write_text_file(path, latents_to_csv(latents));
}

LatentMatrix read_latents(const std::filesystem::path& path) {
    return latents_from_csv(read_text_file(path), path.string());
}

}  // namespace powerprof
