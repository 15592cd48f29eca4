#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "sanet/data.hpp"
#include "sanet/gradcheck_suite.hpp"
#include "sanet/losses.hpp"
#include "sanet/metrics.hpp"
#include "sanet/model.hpp"
#include "sanet/rsm.hpp"
#include "sanet/slic.hpp"
#include "sanet/trainer.hpp"

namespace {

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

std::vector<sanet::Sample> load_dataset(const std::string& dir) {
    std::vector<sanet::Sample> samples;
    for (const std::string& id : sanet::load_manifest(dir))
        samples.push_back(sanet::load_sample(dir, id));
    return samples;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
    if (const char* threads = std::getenv("SANET_THREADS"))
        omp_set_num_threads(std::max(1, std::atoi(threads)));
#endif

    CLI::App app{"superpixel attention pipeline for lesion attribute detection"};
    app.require_subcommand(1);

    // slic
    auto* slic = app.add_subcommand("slic", "compute a SLIC superpixel map for a PPM image");
    std::string slic_image, slic_out;
    int slic_regions = 196, slic_iters = 10;
    double slic_compactness = 10.0;
    slic->add_option("--image", slic_image, "input PPM (P6) image")->required();
    slic->add_option("--regions", slic_regions, "target superpixel count")->capture_default_str();
    slic->add_option("--compactness", slic_compactness, "spatial weight m")->capture_default_str();
    slic->add_option("--iters", slic_iters, "k-means iterations")->capture_default_str();
    slic->add_option("--out", slic_out, "output .spx path")->required();

    // shuffle
    auto* shuffle = app.add_subcommand("shuffle", "apply the random shuffle module to an image");
    std::string shuffle_image, shuffle_out;
    int shuffle_grid = 7, shuffle_neighborhood = 2;
    std::uint64_t shuffle_seed = 0;
    shuffle->add_option("--image", shuffle_image, "input PPM (P6) image")->required();
    shuffle->add_option("--grid", shuffle_grid, "sub-regions per side")->capture_default_str();
    shuffle->add_option("--neighborhood", shuffle_neighborhood, "jitter radius k")->capture_default_str();
    shuffle->add_option("--seed", shuffle_seed, "permutation seed")->capture_default_str();
    shuffle->add_option("--out", shuffle_out, "output PPM path")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "key = value config file");
    synth->add_option("--out", synth_out, "output dataset directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train the toy model on a dataset");
    std::string train_data, train_val, train_config, train_out;
    train_cmd->add_option("--data", train_data, "training dataset directory")->required();
    train_cmd->add_option("--val", train_val, "validation dataset directory");
    train_cmd->add_option("--config", train_config, "key = value config file");
    train_cmd->add_option("--out", train_out, "output directory (log + checkpoints)")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "compare predicted masks against ground truth");
    std::string eval_pred, eval_gt, eval_out, eval_empty = "one";
    eval_cmd->add_option("--pred", eval_pred, "directory of predicted <id>.attr<k>.pgm masks")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground-truth dataset directory")->required();
    eval_cmd->add_option("--empty-convention", eval_empty, "one|zero for empty-union classes")
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "output metrics CSV")->required();

    // losscurve
    auto* losscurve = app.add_subcommand("losscurve", "emit loss/gradient curves over p_t");
    std::string lc_gamma = "0,0.5,1,2", lc_theta = "0,0.2", lc_out;
    losscurve->add_option("--gamma", lc_gamma, "comma-separated gamma values")->capture_default_str();
    losscurve->add_option("--theta", lc_theta, "comma-separated theta values")->capture_default_str();
    losscurve->add_option("--out", lc_out, "output CSV path")->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::string gc_precision = "f32", gc_op;
    gradcheck->add_option("--precision", gc_precision, "f32|f64")->capture_default_str();
    gradcheck->add_option("--op", gc_op, "check a single operation by name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*slic) {
            sanet::ImageU8 image = sanet::load_ppm(slic_image);
            sanet::SuperpixelMap map =
                sanet::slic_segment(image, slic_regions, slic_compactness, slic_iters);
            auto violations = sanet::validate_map(map, true);
            if (!violations.empty()) {
                std::cerr << "internal error: SLIC produced an invalid map: " << violations.front()
                          << "\n";
                return 2;
            }
            sanet::save_map(map, slic_out);
            std::cout << "regions: " << map.region_count << "\n";
        } else if (*shuffle) {
            sanet::ImageU8 image = sanet::load_ppm(shuffle_image);
            sanet::ShufflePlan plan =
                sanet::make_shuffle_plan(shuffle_grid, shuffle_neighborhood, shuffle_seed);
            sanet::save_ppm(sanet::shuffle_image(image, plan), shuffle_out);
        } else if (*synth) {
            sanet::SynthConfig cfg =
                synth_config.empty() ? sanet::SynthConfig{} : sanet::parse_synth_config(synth_config);
            sanet::synth_generate(cfg, synth_out);
        } else if (*train_cmd) {
            sanet::TrainConfig cfg = train_config.empty() ? sanet::TrainConfig{}
                                                          : sanet::parse_train_config(train_config);
            std::vector<sanet::Sample> train_set = load_dataset(train_data);
            std::vector<sanet::Sample> val_set;
            if (!train_val.empty()) val_set = load_dataset(train_val);

            sanet::ModelConfig mc;
            mc.height = train_set.front().image.height;
            mc.width = train_set.front().image.width;
            mc.seed = cfg.seed;
            sanet::ToySanet<float> model(mc);
            sanet::TrainResult result = sanet::train(model, train_set, val_set, cfg, train_out);
            std::cout << "initial loss: " << result.initial_loss
                      << "\nfinal loss: " << result.final_loss << "\n";
            if (!val_set.empty())
                std::cout << "best validation challenge avg JA: " << result.best_val_challenge_ja
                          << "\n";
        } else if (*eval_cmd) {
            sanet::EmptyConvention empty;
            if (eval_empty == "one") empty = sanet::EmptyConvention::one;
            else if (eval_empty == "zero") empty = sanet::EmptyConvention::zero;
            else {
                std::cerr << "--empty-convention must be 'one' or 'zero'\n";
                return 1;
            }
            std::vector<std::string> ids = sanet::load_manifest(eval_gt);
            std::vector<std::string> missing;
            std::vector<std::array<sanet::BinaryCounts, sanet::kAttributeCount>> per_image;
            for (const std::string& id : ids) {
                std::array<sanet::BinaryCounts, sanet::kAttributeCount> counts;
                bool complete = true;
                for (int k = 0; k < sanet::kAttributeCount && complete; ++k) {
                    std::string name = id + ".attr" + std::to_string(k) + ".pgm";
                    if (!std::ifstream(eval_pred + "/" + name)) {
                        missing.push_back(id);
                        complete = false;
                        break;
                    }
                    counts[k] = sanet::binary_counts(sanet::load_pgm(eval_pred + "/" + name),
                                                     sanet::load_pgm(eval_gt + "/" + name));
                }
                if (complete) per_image.push_back(counts);
            }
            if (!missing.empty()) {
                std::cerr << "missing predictions for:";
                for (const auto& id : missing) std::cerr << " " << id;
                std::cerr << "\n";
                return 1;
            }
            sanet::MetricReport report = sanet::aggregate(per_image, empty);
            std::ofstream out(eval_out);
            if (!out) throw std::runtime_error("cannot open " + eval_out);
            sanet::write_metrics_csv(report, out);
        } else if (*losscurve) {
            std::ofstream out(lc_out);
            if (!out) throw std::runtime_error("cannot open " + lc_out);
            out << "gamma,theta,p_t,loss,dloss_dpt\n";
            for (double gamma : parse_list(lc_gamma))
                for (double theta : parse_list(lc_theta)) {
                    sanet::LossConfig cfg;
                    cfg.gamma = gamma;
                    cfg.theta = theta;
                    for (int i = 1; i <= 1000; ++i) {
                        double p_t = i / 1000.0;
                        auto [loss, grad] = sanet::gbcel_pointwise(p_t, cfg);
                        out << gamma << "," << theta << "," << p_t << "," << loss << "," << grad
                            << "\n";
                    }
                }
        } else if (*gradcheck) {
            bool ok;
            if (gc_precision == "f64")
                ok = sanet::run_gradcheck_suite<double>(std::cout, gc_op, 100, 1e-4, 1e-5, 1e-3);
            else if (gc_precision == "f32")
                ok = sanet::run_gradcheck_suite<float>(std::cout, gc_op, 20, 1e-2, 1e-2, 5e-2);
            else {
                std::cerr << "--precision must be 'f32' or 'f64'\n";
                return 1;
            }
            if (!ok) return 2;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const sanet::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
