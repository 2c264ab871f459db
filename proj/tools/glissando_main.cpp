#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "glissando/checkpoint.hpp"
#include "glissando/errors.hpp"
#include "glissando/pipeline.hpp"
#include "glissando/synth.hpp"
#include "glissando/train.hpp"

namespace {

using namespace glissando;

GlissandoNet load_model(const std::string& ckpt_path) {
    const ModelConfig cfg = read_checkpoint_config(ckpt_path);
    GlissandoNet model(cfg, 0);
    load_checkpoint(ckpt_path, model);
    return model;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << text;
}

int run(int argc, char** argv) {
    CLI::App app{"Joint category-level pose estimation and point-cloud reconstruction "
                 "from a single RGB image"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    std::string gen_spec, gen_out;
    uint64_t gen_seed = 0;
    gen->add_option("--spec", gen_spec, "Generator spec file")->required();
    gen->add_option("--seed", gen_seed, "Generator seed")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train a model");
    std::string train_config, resume;
    tr->add_option("--config", train_config, "Training config file")->required();
    tr->add_option("--resume", resume, "Checkpoint to resume from");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
    bool eval_oracle = false;
    ev->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
    ev->add_option("--data", eval_data, "Dataset manifest")->required();
    ev->add_option("--split", eval_split, "Split name");
    ev->add_option("--out", eval_out, "Report CSV path")->required();
    ev->add_flag("--oracle", eval_oracle, "Inject ground truth as the prediction");

    // occlusion
    auto* oc = app.add_subcommand("occlusion", "Occlusion study over a test split");
    std::string occ_ckpt, occ_data, occ_out, occ_split = "test";
    oc->add_option("--ckpt", occ_ckpt, "Checkpoint path")->required();
    oc->add_option("--data", occ_data, "Dataset manifest")->required();
    oc->add_option("--split", occ_split, "Split name");
    oc->add_option("--out", occ_out, "Report CSV path")->required();

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train/evaluate one ablation axis");
    std::string ab_config, ab_axis, ab_out;
    ab->add_option("--config", ab_config, "Base training config")->required();
    ab->add_option("--axis", ab_axis, "code_size | pose_head | fusion | pc_encoder")
        ->required();
    ab->add_option("--out", ab_out, "Report CSV path")->required();

    // predict
    auto* pr = app.add_subcommand("predict", "Zero-code prediction + overlay");
    std::string pr_ckpt, pr_image, pr_out;
    double pr_fx = 0, pr_fy = 0, pr_cx = 0, pr_cy = 0;
    pr->add_option("--ckpt", pr_ckpt, "Checkpoint path")->required();
    pr->add_option("--image", pr_image, "Input PNG")->required();
    pr->add_option("--fx", pr_fx, "Focal length x (pixels)")->required();
    pr->add_option("--fy", pr_fy, "Focal length y (pixels)")->required();
    pr->add_option("--cx", pr_cx, "Principal point x")->required();
    pr->add_option("--cy", pr_cy, "Principal point y")->required();
    pr->add_option("--out", pr_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        const GenSpec spec = GenSpec::from_file(gen_spec);
        const DatasetManifest manifest = generate_synthetic_dataset(spec, gen_seed, gen_out);
        std::cout << "generated " << manifest.entries.size() << " samples under " << gen_out
                  << "\n";
    } else if (tr->parsed()) {
        const TrainConfig cfg = load_train_config(train_config);
        const TrainResult result = train(cfg, resume);
        std::cout << "trained " << result.log.steps.size() << " steps; final checkpoint "
                  << result.final_checkpoint << "\n";
    } else if (ev->parsed()) {
        GlissandoNet model = load_model(eval_ckpt);
        const DatasetManifest manifest = load_manifest(eval_data);
        EvalOptions opts;
        opts.oracle = eval_oracle;
        const EvalResult result = evaluate(model, manifest, eval_split, opts);
        write_text(eval_out, report_to_csv(result.reports, kCategoryNames));
        std::cout << report_to_table(result.reports, kCategoryNames);
    } else if (oc->parsed()) {
        GlissandoNet model = load_model(occ_ckpt);
        const DatasetManifest manifest = load_manifest(occ_data);
        const OcclusionReport report = occlusion_study(model, manifest, occ_split);
        write_text(occ_out, report.to_csv());
        std::cout << report.to_table();
    } else if (ab->parsed()) {
        const TrainConfig cfg = load_train_config(ab_config);
        const auto rows = ablate(cfg, ablation_axis_from_name(ab_axis));
        write_text(ab_out, ablation_to_csv(rows));
        std::cout << ablation_to_csv(rows);
    } else if (pr->parsed()) {
        GlissandoNet model = load_model(pr_ckpt);
        CameraIntrinsics K;
        K.fx = pr_fx;
        K.fy = pr_fy;
        K.cx = pr_cx;
        K.cy = pr_cy;
        K.image_width = model.config().input_width;
        K.image_height = model.config().input_height;
        predict_and_overlay(model, pr_image, K, pr_out);
        std::cout << "wrote overlay.png and predicted.ply to " << pr_out << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const glissando::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const glissando::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
