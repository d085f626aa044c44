// snowdet: command-line entry point for the pavement snow detector.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snowdet/bundle.hpp"
#include "snowdet/dataset.hpp"
#include "snowdet/digest.hpp"
#include "snowdet/evaluate.hpp"
#include "snowdet/export.hpp"
#include "snowdet/io.hpp"
#include "snowdet/recipe.hpp"
#include "snowdet/serve.hpp"
#include "snowdet/synthetic.hpp"
#include "snowdet/trainer.hpp"

namespace fs = std::filesystem;
using namespace snowdet;
using nlohmann::json;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

struct BackboneFlags {
    std::string init = "pretrained";
    std::string weights_dir = "weights";

    void add(CLI::App* cmd) {
        cmd->add_option("--backbone-init", init, "frozen backbone weights: pretrained or seeded")
            ->check(CLI::IsMember({"pretrained", "seeded"}))
            ->capture_default_str();
        cmd->add_option("--weights-dir", weights_dir, "directory with <arch>_imagenet1k.safetensors")
            ->capture_default_str();
    }
    BackboneSpec spec(Arch arch, std::uint64_t seed) const {
        BackboneSpec s;
        s.arch = arch;
        s.init = init == "seeded" ? BackboneInit::seeded : BackboneInit::pretrained;
        s.weights_dir = weights_dir;
        s.backbone_seed = seed;
        return s;
    }
};

json provenance_for(std::uint64_t seed, const json& config) {
    return {{"seed", seed}, {"config_hash", sha256_hex(canonical_json(config))}, {"code_version", code_version()}};
}

std::vector<Label> labels_of(const std::vector<ImageRecord>& records) {
    std::vector<Label> out;
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pavement snow detection: two frozen CNN backbones, fine-tuned heads, weighted ensemble"};
    app.set_version_flag("--version", std::string(code_version()));
    app.require_subcommand(1);

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "scan <root>/<label>/ images into a manifest");
    fs::path ingest_root, ingest_test_root, ingest_out = "manifest.jsonl";
    ingest_cmd->add_option("--root", ingest_root, "labelled image tree")->required();
    ingest_cmd->add_option("--test-root", ingest_test_root, "tree whose images all go to the test split");
    ingest_cmd->add_option("--out", ingest_out)->capture_default_str();

    // split
    auto* split_cmd = app.add_subcommand("split", "pair records by location and split pairs into train/val");
    fs::path split_manifest, split_out;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 42;
    split_cmd->add_option("--manifest", split_manifest)->required();
    split_cmd->add_option("--train-fraction", train_fraction)->capture_default_str();
    split_cmd->add_option("--seed", split_seed)->capture_default_str();
    split_cmd->add_option("--out", split_out, "defaults to overwriting --manifest");

    // train
    auto* train_cmd = app.add_subcommand("train", "fine-tune one backbone's head");
    fs::path train_manifest, train_out = "runs";
    std::string train_arch = "resnet50";
    TrainConfig train_cfg;
    BackboneFlags train_bb;
    train_cmd->add_option("--manifest", train_manifest)->required();
    train_cmd->add_option("--arch", train_arch)->check(CLI::IsMember({"vgg19", "resnet50"}))->capture_default_str();
    train_cmd->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
    train_cmd->add_option("--epochs", train_cfg.max_epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
    train_cmd->add_option("--checkpoint-interval", train_cfg.checkpoint_interval)->capture_default_str();
    train_cmd->add_option("--seed", train_cfg.seed)->capture_default_str();
    train_cmd->add_option("--out", train_out, "run root")->capture_default_str();
    train_bb.add(train_cmd);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "learning-rate grid over both architectures");
    fs::path sweep_manifest, sweep_out = "runs";
    std::string sweep_grid = "default";
    std::vector<std::string> sweep_archs{"vgg19", "resnet50"};
    TrainConfig sweep_cfg;
    BackboneFlags sweep_bb;
    sweep_cmd->add_option("--manifest", sweep_manifest)->required();
    sweep_cmd->add_option("--grid", sweep_grid, "'default' or comma-separated learning rates")->capture_default_str();
    sweep_cmd->add_option("--archs", sweep_archs)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--epochs", sweep_cfg.max_epochs)->capture_default_str();
    sweep_cmd->add_option("--eval-epochs", sweep_cfg.eval_epochs)->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--seed", sweep_cfg.seed)->capture_default_str();
    sweep_cmd->add_option("--out", sweep_out, "run root")->capture_default_str();
    sweep_bb.add(sweep_cmd);

    // ensemble-fit
    auto* fit_cmd = app.add_subcommand("ensemble-fit", "fit the ensemble weight on validation and write a bundle");
    fs::path fit_manifest, fit_a, fit_b, fit_out = "bundle";
    double fit_threshold = 0.5;
    fit_cmd->add_option("--manifest", fit_manifest)->required();
    fit_cmd->add_option("--model-a", fit_a, "checkpoint .meta of model A")->required();
    fit_cmd->add_option("--model-b", fit_b, "checkpoint .meta of model B")->required();
    fit_cmd->add_option("--threshold", fit_threshold)->capture_default_str();
    fit_cmd->add_option("--out", fit_out)->capture_default_str();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "metrics report and gallery for a bundle");
    fs::path eval_bundle, eval_manifest, eval_out = "report";
    std::string eval_split = "test";
    eval_cmd->add_option("--bundle", eval_bundle)->required();
    eval_cmd->add_option("--manifest", eval_manifest)->required();
    eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
    eval_cmd->add_option("--out", eval_out)->capture_default_str();

    // export
    auto* export_cmd = app.add_subcommand("export", "write both members as full state dicts plus a descriptor");
    fs::path export_bundle_dir, export_out = "export";
    export_cmd->add_option("--bundle", export_bundle_dir)->required();
    export_cmd->add_option("--out", export_out)->capture_default_str();

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "HTTP inference service");
    fs::path serve_bundle;
    ServeOptions serve_opts;
    double max_body_mb = 16;
    serve_cmd->add_option("--bundle", serve_bundle)->required();
    serve_cmd->add_option("--host", serve_opts.host)->capture_default_str();
    serve_cmd->add_option("--port", serve_opts.port)->capture_default_str();
    serve_cmd->add_option("--max-body-mb", max_body_mb)->check(CLI::PositiveNumber)->capture_default_str();
    serve_cmd->add_option("--cors-origin", serve_opts.cors_origin)->capture_default_str();

    // demo-data
    auto* demo_cmd = app.add_subcommand("demo-data", "generate the synthetic acceptance dataset and a recipe");
    DemoDataOptions demo;
    demo_cmd->add_option("--out", demo.out_dir)->required();
    demo_cmd->add_option("--seed", demo.seed)->capture_default_str();
    demo_cmd->add_option("--pairs", demo.pairs)->capture_default_str();
    demo_cmd->add_option("--test-per-class", demo.test_per_class)->capture_default_str();
    demo_cmd->add_option("--image-size", demo.image_size)->capture_default_str();

    // run
    auto* run_cmd = app.add_subcommand("run", "execute a full recipe");
    fs::path run_config;
    std::optional<std::uint64_t> run_seed;
    std::optional<fs::path> run_out;
    std::optional<std::string> run_init;
    std::optional<std::string> run_weights;
    run_cmd->add_option("--config", run_config, "recipe JSON")->required();
    run_cmd->add_option("--seed", run_seed, "overrides the recipe seed");
    run_cmd->add_option("--out", run_out, "overrides the recipe output_root");
    run_cmd->add_option("--backbone-init", run_init)->check(CLI::IsMember({"pretrained", "seeded"}));
    run_cmd->add_option("--weights-dir", run_weights);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest_cmd) {
            IngestOptions opts;
            opts.root = ingest_root;
            if (!ingest_test_root.empty()) opts.test_root = ingest_test_root;
            auto res = ingest(opts);
            for (const auto& w : res.warnings) log_line("warning: " + w);
            for (const auto& r : res.rejects) log_line("rejected " + r.path.string() + ": " + r.reason);
            save_manifest(ingest_out, res.manifest);
            std::cout << res.manifest.records.size() << " records -> " << ingest_out.string() << "\n";
        } else if (*split_cmd) {
            auto paired = pair_by_location(load_manifest(split_manifest));
            for (const auto& id : paired.flagged) log_line("unpaired: " + id);
            auto m = split(paired.manifest, train_fraction, split_seed);
            m.provenance = provenance_for(split_seed, {{"train_fraction", train_fraction}});
            const auto out = split_out.empty() ? split_manifest : split_out;
            save_manifest(out, m);
            std::cout << m.records_in(Split::train).size() << " train, " << m.records_in(Split::val).size()
                      << " val, " << m.records_in(Split::test).size() << " test -> " << out.string() << "\n";
        } else if (*train_cmd) {
            const auto manifest = load_manifest(train_manifest);
            const auto arch = parse_arch(train_arch);
            auto spec = train_bb.spec(arch, train_cfg.seed);
            spec.head_seed = train_cfg.seed;
            auto model = build_model(spec);
            FeatureCache cache;
            TrainContext ctx;
            ctx.run_root = train_out;
            ctx.run_id = make_run_id(train_cfg.learning_rate, train_cfg.seed);
            ctx.manifest_hash = manifest_content_hash(manifest);
            ctx.cache = &cache;
            ctx.on_epoch = [](const EpochStats& s) {
                log_line("epoch " + std::to_string(s.epoch) + " loss " + std::to_string(s.train_loss) + " acc " +
                         std::to_string(s.train_accuracy));
            };
            const auto res = train(model, manifest.records_in(Split::train), manifest.records_in(Split::val),
                                   train_cfg, ctx);
            for (const auto& c : res.checkpoints) std::cout << c.meta_path.string() << "\n";
        } else if (*sweep_cmd) {
            const auto manifest = load_manifest(sweep_manifest);
            std::vector<double> lrs;
            if (sweep_grid == "default") {
                lrs = TrainConfig::default_learning_rates();
            } else {
                for (const auto& tok : CLI::detail::split(sweep_grid, ',')) lrs.push_back(std::stod(tok));
            }
            FeatureCache cache;
            SweepOptions opts;
            opts.archs.clear();
            for (const auto& a : sweep_archs) opts.archs.push_back(parse_arch(a));
            opts.grid = make_grid(lrs, sweep_cfg);
            opts.backbone = sweep_bb.spec(Arch::resnet50, sweep_cfg.seed);
            opts.run_root = sweep_out;
            opts.cache = &cache;
            opts.log = log_line;
            opts.provenance = provenance_for(sweep_cfg.seed, {{"grid", lrs}, {"train", sweep_cfg.to_json()}});
            const auto board = sweep(manifest, opts);
            std::cout << board.to_json().dump(2) << "\n";
        } else if (*fit_cmd) {
            const auto manifest = load_manifest(fit_manifest);
            const auto ca = read_checkpoint(fit_a);
            const auto cb = read_checkpoint(fit_b);
            auto ma = load_checkpoint(ca);
            auto mb = load_checkpoint(cb);
            const auto val = manifest.records_in(Split::val);
            if (val.empty()) throw Error("manifest has no validation records");
            FeatureCache cache;
            const auto [pa, pb] = member_probabilities(ma, mb, val, ca.meta.preprocess, &cache);
            const auto labels = labels_of(val);
            const auto fit = fit_weight_detailed(pa, pb, labels, fit_threshold);
            json prov = provenance_for(ca.meta.seed, {{"model_a", ca.meta.to_json()}, {"model_b", cb.meta.to_json()},
                                                      {"threshold", fit_threshold}});
            prov["weight_fit"] = {{"grid", fit.grid}, {"val_macro_f1", fit.scores}};
            EnsembleBundle::write(fit_out, ca, cb, fit.config, prov);
            std::cout << "weight_a " << fit.config.weight_a << " -> " << fit_out.string() << "\n";
        } else if (*eval_cmd) {
            const auto bundle = EnsembleBundle::load(eval_bundle);
            const auto manifest = load_manifest(eval_manifest);
            FeatureCache cache;
            const auto ev = evaluate_bundle(bundle, manifest, parse_split(eval_split), &cache);
            const auto prov = bundle.sidecar().value("provenance", json::object());
            const auto written = write_evaluation(eval_out, ev, bundle, manifest, prov);
            for (const auto& w : written.gallery.warnings) log_line("warning: " + w);
            std::cout << report_table(ev, bundle);
        } else if (*export_cmd) {
            const auto res = export_bundle(EnsembleBundle::load(export_bundle_dir), export_out);
            std::cout << res.descriptor.string() << "\n";
        } else if (*serve_cmd) {
            serve_opts.max_body_bytes = static_cast<std::size_t>(max_body_mb * 1024.0 * 1024.0);
            return run_server(serve_bundle, serve_opts, log_line);
        } else if (*demo_cmd) {
            const auto res = generate_demo_data(demo);
            std::cout << res.train_val_images << " paired + " << res.test_images << " test images; recipe "
                      << res.recipe.string() << "\n";
        } else if (*run_cmd) {
            auto recipe = load_recipe(run_config);
            if (run_seed) {
                recipe.seed = *run_seed;
                recipe.train.seed = *run_seed;
            }
            if (run_out) recipe.output_root = fs::absolute(*run_out);
            if (run_init) recipe.backbone.init = *run_init == "seeded" ? BackboneInit::seeded : BackboneInit::pretrained;
            if (run_weights) recipe.backbone.weights_dir = fs::absolute(*run_weights);
            const auto outcome = run_recipe(recipe, log_line);
            if (outcome.exit_code != 0) {
                std::cerr << "error: stage '" << outcome.failed_stage << "' failed: " << outcome.error << "\n";
                return outcome.exit_code;
            }
            std::cout << outcome.report.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
