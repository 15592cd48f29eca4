#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/data.hpp"
#include "sanet/losses.hpp"
#include "sanet/metrics.hpp"
#include "sanet/model.hpp"
#include "sanet/rsm.hpp"

namespace sanet {

struct TrainConfig {
    int batch_size = 5;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;  // the paper's "momentum"
    double beta2 = 0.999;
    int epochs = 10;  // desk-scale default; the paper trains 100
    double poly_power = 0.9;
    std::uint64_t seed = 42;
    LossConfig loss;
    int rsm_grid = 7;
    int rsm_neighborhood = 2;
    bool balanced_class_weights = false;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
        if (learning_rate <= 0 || beta1 <= 0 || beta2 <= 0)
            throw std::invalid_argument("TrainConfig: rates must be positive");
        if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        loss.validate();
    }
};

/// lr(iter) = base * (1 - iter/max_iter)^power
inline double poly_lr(int iter, int max_iter, double base_lr, double power) {
    if (iter < 0 || iter > max_iter) throw std::invalid_argument("poly_lr: iter outside [0, max_iter]");
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / max_iter, power);
}

/// Class weights inversely proportional to the attribute pixel ratios,
/// normalized to mean 1.
inline std::array<double, kAttributeCount> balanced_class_weights(
    const std::array<double, kAttributeCount>& pixel_ratio_pct) {
    std::array<double, kAttributeCount> w;
    double sum = 0;
    for (int k = 0; k < kAttributeCount; ++k) {
        w[k] = 1.0 / pixel_ratio_pct[k];
        sum += w[k];
    }
    for (double& v : w) v *= kAttributeCount / sum;
    return w;
}

/// Adam with bias correction and decoupled weight decay; decay is skipped for
/// parameters flagged no_decay (biases, batchnorm scale/shift).
template <typename T>
void optimizer_step(std::deque<Parameter<T>>& params, double lr, const TrainConfig& cfg, int step) {
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, step);
    const double bc2 = 1.0 - std::pow(b2, step);
    for (auto& p : params) {
        Tensor<T>& value = p.value->value;
        const bool has_grad = !p.value->grad.empty();
        for (std::size_t i = 0; i < value.numel(); ++i) {
            double g = has_grad ? static_cast<double>(p.value->grad.data[i]) : 0.0;
            double m = b1 * p.m1.data[i] + (1.0 - b1) * g;
            double v = b2 * p.m2.data[i] + (1.0 - b2) * g * g;
            p.m1.data[i] = static_cast<T>(m);
            p.m2.data[i] = static_cast<T>(v);
            double update = lr * (m / bc1) / (std::sqrt(v / bc2) + 1e-8);
            double decay = p.no_decay ? 0.0 : lr * cfg.weight_decay * value.data[i];
            value.data[i] = static_cast<T>(value.data[i] - update - decay);
        }
        require_finite(value, "optimizer_step");
    }
}

/// Image bytes -> (1,3,H,W) tensor scaled to [0,1].
template <typename T>
Tensor<T> to_tensor(const ImageU8& img) {
    Tensor<T> t({1, img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at(0, c, y, x) = static_cast<T>(img.at(y, x, c) / 255.0);
    return t;
}

/// Pixel-level evaluation of a frozen model: forward in eval mode, binarize
/// painted probabilities at 0.5, pool counts over the dataset.
template <typename T>
MetricReport evaluate(ToySanet<T>& model, const std::vector<Sample>& samples,
                      EmptyConvention empty = EmptyConvention::one) {
    std::vector<std::array<BinaryCounts, kAttributeCount>> per_image;
    for (const Sample& sample : samples) {
        Tensor<T> image = to_tensor<T>(sample.image);
        SanetOutput<T> out = model.forward(nullptr, image, sample.map, Mode::eval);
        std::array<BinaryCounts, kAttributeCount> counts;
        for (int k = 0; k < kAttributeCount; ++k) {
            Mask pred(sample.image.height, sample.image.width);
            const Tensor<T>& grid = out.pixel_probs[k];
            for (std::size_t i = 0; i < pred.data.size(); ++i)
                pred.data[i] = grid.data[i] >= T(0.5) ? 1 : 0;
            counts[k] = binary_counts(pred, sample.masks[k]);
        }
        per_image.push_back(counts);
    }
    return aggregate(per_image, empty);
}

struct TrainLogRow {
    int epoch, iter;
    double lr, loss, gbcel, gbjal;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    double initial_loss = 0, final_loss = 0;
    double best_val_challenge_ja = 0;
    std::string best_checkpoint;
};

template <typename T>
TrainResult train(ToySanet<T>& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const std::string& out_dir) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: dataset must be non-empty");
    std::filesystem::create_directories(out_dir);
    std::ofstream log_csv(out_dir + "/train_log.csv");
    log_csv << "epoch,iter,lr,loss,gbcel,gbjal\n";

    const int batches_per_epoch =
        (static_cast<int>(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const int max_iter = cfg.epochs * batches_per_epoch;

    TrainResult result;
    int iter = 0;
    double first_epoch_loss = 0, last_epoch_loss = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        Rng epoch_rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), epoch_rng);

        double epoch_loss = 0;
        int epoch_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<Sample> batch;
            std::string batch_ids;
            for (std::size_t s = start; s < std::min(order.size(), start + cfg.batch_size); ++s) {
                std::uint64_t aug_seed = mix_seed(cfg.seed, 7000000ULL + iter * 100ULL + (s - start));
                batch.push_back(augment(train_set[order[s]], aug_seed));
                batch_ids += (batch_ids.empty() ? "" : " ") + train_set[order[s]].id;
            }
            batch = mix_batch(std::move(batch), mix_seed(cfg.seed, 9000000ULL + iter), cfg.rsm_grid,
                              cfg.rsm_neighborhood);

            double lr = poly_lr(iter, max_iter, cfg.learning_rate, cfg.poly_power);
            model.zero_grad();
            double batch_loss = 0, batch_gbcel = 0, batch_gbjal = 0;
            try {
                for (const Sample& sample : batch) {
                    Tape<T> tape;
                    Tensor<T> image = to_tensor<T>(sample.image);
                    SanetOutput<T> out = model.forward(&tape, image, sample.map, Mode::train);
                    std::vector<std::uint8_t> q = superpixel_ground_truth(sample.masks, sample.map);
                    TotalLossValue detail;
                    Var<T> loss = total_loss_op(&tape, out.sp_probs, q, cfg.loss, &detail);
                    Tensor<T> seed_grad({1, 1, 1, 1}, T(1.0 / batch.size()));
                    tape.backward(loss, seed_grad);
                    batch_loss += detail.value / batch.size();
                    batch_gbcel += detail.gbcel_part / batch.size();
                    batch_gbjal += detail.gbjal_part / batch.size();
                }
                optimizer_step(model.parameters(), lr, cfg, iter + 1);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error(std::string("training aborted: ") + e.what() +
                                         "; offending batch ids: " + batch_ids);
            }

            TrainLogRow row{epoch, iter, lr, batch_loss, batch_gbcel, batch_gbjal};
            result.log.push_back(row);
            log_csv << epoch << "," << iter << "," << lr << "," << batch_loss << "," << batch_gbcel
                    << "," << batch_gbjal << "\n";
            epoch_loss += batch_loss;
            ++epoch_batches;
            ++iter;
        }
        epoch_loss /= epoch_batches;
        if (epoch == 0) first_epoch_loss = epoch_loss;
        last_epoch_loss = epoch_loss;

        char name[64];
        std::snprintf(name, sizeof(name), "epoch_%03d.sanc", epoch);
        model.save_checkpoint(out_dir + "/" + name);
        if (!val_set.empty()) {
            MetricReport report = evaluate(model, val_set);
            if (report.challenge_avg_jaccard >= result.best_val_challenge_ja) {
                result.best_val_challenge_ja = report.challenge_avg_jaccard;
                result.best_checkpoint = out_dir + "/best.sanc";
                model.save_checkpoint(result.best_checkpoint);
            }
        }
    }
    result.initial_loss = first_epoch_loss;
    result.final_loss = last_epoch_loss;
    return result;
}

// ---------------------------------------------------------------------------
// plain-text `key = value` config files; '#' comments; unknown keys are errors

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: missing '=' at " + path + ":" + std::to_string(lineno));
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline TrainConfig parse_train_config(const std::string& path) {
    TrainConfig cfg;
    for (const auto& [key, value] : parse_kv_file(path)) {
        if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
        else if (key == "beta1") cfg.beta1 = std::stod(value);
        else if (key == "beta2") cfg.beta2 = std::stod(value);
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "poly_power") cfg.poly_power = std::stod(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "gamma") cfg.loss.gamma = std::stod(value);
        else if (key == "theta") cfg.loss.theta = std::stod(value);
        else if (key == "epsilon") cfg.loss.epsilon = std::stod(value);
        else if (key == "rsm_grid") cfg.rsm_grid = std::stoi(value);
        else if (key == "rsm_neighborhood") cfg.rsm_neighborhood = std::stoi(value);
        else if (key == "balanced_class_weights") cfg.balanced_class_weights = value == "true" || value == "1";
        else throw std::runtime_error("config: unknown key '" + key + "' in " + path);
    }
    if (cfg.balanced_class_weights)
        cfg.loss.class_weights = balanced_class_weights(SynthConfig{}.pixel_ratio_pct);
    cfg.validate();
    return cfg;
}

inline SynthConfig parse_synth_config(const std::string& path) {
    SynthConfig cfg;
    for (const auto& [key, value] : parse_kv_file(path)) {
        if (key == "count") cfg.count = std::stoi(value);
        else if (key == "height") cfg.height = std::stoi(value);
        else if (key == "width") cfg.width = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "slic_regions") cfg.slic_regions = std::stoi(value);
        else if (key == "slic_compactness") cfg.slic_compactness = std::stod(value);
        else if (key == "slic_iterations") cfg.slic_iterations = std::stoi(value);
        else throw std::runtime_error("config: unknown key '" + key + "' in " + path);
    }
    cfg.validate();
    return cfg;
}

}  // namespace sanet
