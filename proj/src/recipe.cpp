#include "snowdet/recipe.hpp"

#include <fcntl.h>
#include <unistd.h>

#include "snowdet/bundle.hpp"
#include "snowdet/dataset.hpp"
#include "snowdet/digest.hpp"
#include "snowdet/evaluate.hpp"
#include "snowdet/export.hpp"
#include "snowdet/io.hpp"

namespace snowdet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <typename T>
T field(const json& section, const char* section_name, const char* key, T fallback) {
    if (!section.contains(key)) return fallback;
    try {
        return section.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(std::string("recipe: field '") + section_name + "." + key + "' has the wrong type");
    }
}

class LockFile {
public:
    explicit LockFile(fs::path path) : path_(std::move(path)) {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw Error("output root is locked by another recipe run (" + path_.string() +
                        "); remove the lock if no run is active");
        }
        const auto pid = std::to_string(::getpid()) + "\n";
        (void)::write(fd_, pid.data(), pid.size());
    }
    ~LockFile() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

}  // namespace

RunRecipe RunRecipe::from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error("recipe: top level must be an object");
    RunRecipe r;
    r.seed = field<std::uint64_t>(j, "recipe", "seed", r.seed);
    r.output_root = resolve(base_dir, field<std::string>(j, "recipe", "output_root", "run"));

    if (j.contains("ingest")) {
        const auto& s = j["ingest"];
        if (!s.contains("root")) throw Error("recipe: missing field 'ingest.root'");
        r.ingest_root = resolve(base_dir, s["root"].get<std::string>());
        if (s.contains("test_root")) r.ingest_test_root = resolve(base_dir, s["test_root"].get<std::string>());
    } else if (j.contains("manifest")) {
        r.manifest = resolve(base_dir, j["manifest"].get<std::string>());
    } else {
        throw Error("recipe: missing field 'manifest' (or an 'ingest' stage providing one)");
    }

    const auto split = j.value("split", json::object());
    r.train_fraction = field<double>(split, "split", "train_fraction", r.train_fraction);

    const auto bb = j.value("backbone", json::object());
    const auto init = field<std::string>(bb, "backbone", "init", "pretrained");
    if (init == "seeded") r.backbone.init = BackboneInit::seeded;
    else if (init == "pretrained") r.backbone.init = BackboneInit::pretrained;
    else throw Error("recipe: field 'backbone.init' must be 'pretrained' or 'seeded'");
    r.backbone.weights_dir = resolve(base_dir, field<std::string>(bb, "backbone", "weights_dir", "weights"));
    r.backbone.backbone_seed = field<std::uint64_t>(bb, "backbone", "backbone_seed", r.seed);

    if (j.contains("preprocess")) r.preprocess = PreprocessConfig::from_json(j["preprocess"]);
    r.backbone.input_size = r.preprocess.height;
    if (r.preprocess.height != r.preprocess.width) throw Error("recipe: preprocess target must be square");

    const auto sw = j.value("sweep", json::object());
    if (sw.contains("archs")) {
        r.archs.clear();
        for (const auto& a : sw["archs"]) r.archs.push_back(parse_arch(a.get<std::string>()));
    }
    if (r.archs.size() != 2 || r.archs[0] == r.archs[1]) {
        throw Error("recipe: field 'sweep.archs' must name the two ensemble members");
    }
    if (sw.contains("learning_rates") && sw["learning_rates"].is_string()) {
        if (sw["learning_rates"].get<std::string>() != "default") {
            throw Error("recipe: field 'sweep.learning_rates' must be a list or \"default\"");
        }
        r.learning_rates = TrainConfig::default_learning_rates();
    } else {
        r.learning_rates = field<std::vector<double>>(sw, "sweep", "learning_rates", r.learning_rates);
    }
    if (r.learning_rates.empty()) throw Error("recipe: field 'sweep.learning_rates' is empty");
    r.train.max_epochs = field<int>(sw, "sweep", "max_epochs", r.train.max_epochs);
    r.train.eval_epochs = field<std::vector<int>>(sw, "sweep", "eval_epochs", r.train.eval_epochs);
    r.train.checkpoint_interval = field<int>(sw, "sweep", "checkpoint_interval", r.train.checkpoint_interval);
    r.train.batch_size = field<int>(sw, "sweep", "batch_size", r.train.batch_size);
    r.train.seed = r.seed;
    r.train.validate();

    const auto ens = j.value("ensemble", json::object());
    r.decision_threshold = field<double>(ens, "ensemble", "decision_threshold", r.decision_threshold);
    const auto ev = j.value("eval", json::object());
    r.eval_split = parse_split(field<std::string>(ev, "eval", "split", "test"));
    const auto ex = j.value("export", json::object());
    r.export_enabled = field<bool>(ex, "export", "enabled", r.export_enabled);
    return r;
}

json RunRecipe::to_json() const {
    json j;
    j["seed"] = seed;
    j["output_root"] = output_root.string();
    if (ingest_root) {
        j["ingest"]["root"] = ingest_root->string();
        if (ingest_test_root) j["ingest"]["test_root"] = ingest_test_root->string();
    }
    if (manifest) j["manifest"] = manifest->string();
    j["split"] = {{"train_fraction", train_fraction}};
    j["backbone"] = {{"init", backbone.init == BackboneInit::seeded ? "seeded" : "pretrained"},
                     {"weights_dir", backbone.weights_dir.string()},
                     {"backbone_seed", backbone.backbone_seed}};
    j["preprocess"] = preprocess.to_json();
    json archs = json::array();
    for (auto a : this->archs) archs.push_back(to_string(a));
    j["sweep"] = {{"archs", archs},
                  {"learning_rates", learning_rates},
                  {"max_epochs", train.max_epochs},
                  {"eval_epochs", train.eval_epochs},
                  {"checkpoint_interval", train.checkpoint_interval},
                  {"batch_size", train.batch_size}};
    j["ensemble"] = {{"decision_threshold", decision_threshold}};
    j["eval"] = {{"split", to_string(eval_split)}};
    j["export"] = {{"enabled", export_enabled}};
    return j;
}

std::string RunRecipe::config_hash() const {
    auto j = to_json();
    j.erase("output_root");
    return sha256_hex(canonical_json(j));
}

RunRecipe load_recipe(const fs::path& path) {
    if (!fs::exists(path)) throw Error("recipe file not found: " + path.string());
    return RunRecipe::from_json(read_json(path), fs::absolute(path).parent_path());
}

RecipeOutcome run_recipe(const RunRecipe& recipe, const std::function<void(const std::string&)>& log_fn) {
    auto log = [&](const std::string& msg) {
        if (log_fn) log_fn(msg);
    };
    const fs::path root = recipe.output_root;
    fs::create_directories(root);
    LockFile lock(root / ".lock");
    std::error_code ec;
    fs::remove(root / "FAILED.json", ec);

    const json provenance = {{"seed", recipe.seed},
                             {"config_hash", recipe.config_hash()},
                             {"code_version", code_version()}};
    write_json_atomic(root / "recipe.resolved.json", {{"recipe", recipe.to_json()}, {"provenance", provenance}});

    RecipeOutcome outcome;
    std::string stage;
    FeatureCache cache;
    try {
        stage = "ingest";
        DatasetManifest manifest;
        if (recipe.ingest_root) {
            IngestOptions opts;
            opts.root = *recipe.ingest_root;
            opts.test_root = recipe.ingest_test_root;
            auto ingested = ingest(opts);
            for (const auto& w : ingested.warnings) log("warning: " + w);
            json rejects = json::array();
            for (const auto& rj : ingested.rejects) rejects.push_back({{"path", rj.path.string()}, {"reason", rj.reason}});
            write_json_atomic(root / "manifest.rejects.json", rejects);
            manifest = std::move(ingested.manifest);
            manifest.provenance = provenance;
            save_manifest(root / "manifest.jsonl", manifest);
            log("ingested " + std::to_string(manifest.records.size()) + " images (" +
                std::to_string(ingested.rejects.size()) + " rejected)");
        } else {
            manifest = load_manifest(*recipe.manifest);
        }

        stage = "split";
        if (manifest.records_in(Split::train).empty()) {
            auto paired = pair_by_location(manifest);
            if (!paired.flagged.empty()) {
                throw Error(std::to_string(paired.flagged.size()) + " record(s) could not be paired by location");
            }
            manifest = split(paired.manifest, recipe.train_fraction, recipe.seed);
        }
        manifest.provenance = provenance;
        save_manifest(root / "manifest.split.jsonl", manifest);
        log("split: " + std::to_string(manifest.records_in(Split::train).size()) + " train, " +
            std::to_string(manifest.records_in(Split::val).size()) + " val, " +
            std::to_string(manifest.records_in(Split::test).size()) + " test");

        stage = "sweep";
        SweepOptions sw;
        sw.archs = recipe.archs;
        sw.grid = make_grid(recipe.learning_rates, recipe.train);
        sw.backbone = recipe.backbone;
        sw.run_root = root / "runs";
        sw.preprocess = recipe.preprocess;
        sw.cache = &cache;
        sw.log = log;
        sw.provenance = provenance;
        const auto board = sweep(manifest, sw);
        const auto best_a = board.best(recipe.archs[0]);
        const auto best_b = board.best(recipe.archs[1]);
        if (!best_a || !best_b) throw Error("sweep produced no usable checkpoint for one of the architectures");
        log("best " + std::string(to_string(best_a->arch)) + ": epoch " + std::to_string(best_a->epoch) +
            ", best " + std::string(to_string(best_b->arch)) + ": epoch " + std::to_string(best_b->epoch));

        stage = "ensemble-fit";
        const auto ckpt_a = read_checkpoint(best_a->checkpoint_meta);
        const auto ckpt_b = read_checkpoint(best_b->checkpoint_meta);
        const auto val = manifest.records_in(Split::val);
        std::vector<Label> val_labels;
        for (const auto& r : val) val_labels.push_back(r.label);
        auto model_a = load_checkpoint(ckpt_a);
        auto model_b = load_checkpoint(ckpt_b);
        const auto [pa, pb] = member_probabilities(model_a, model_b, val, recipe.preprocess, &cache);
        const auto fit = fit_weight_detailed(pa, pb, val_labels, recipe.decision_threshold);
        json fit_doc = {{"grid", fit.grid}, {"val_macro_f1", fit.scores},
                        {"solo_a_macro_f1", fit.solo_a_macro_f1}, {"solo_b_macro_f1", fit.solo_b_macro_f1}};
        outcome.bundle = root / "bundle";
        json bundle_provenance = provenance;
        bundle_provenance["weight_fit"] = fit_doc;
        EnsembleBundle::write(outcome.bundle, ckpt_a, ckpt_b, fit.config, bundle_provenance);
        log("ensemble weight_a = " + std::to_string(fit.config.weight_a));

        stage = "eval";
        const auto bundle = EnsembleBundle::load(outcome.bundle);
        const auto evaluation = evaluate_bundle(bundle, manifest, recipe.eval_split, &cache);
        const auto written = write_evaluation(root / "report", evaluation, bundle, manifest, provenance);
        outcome.report = written.report_json;
        log("eval: accuracy " + format_percent(evaluation.ensemble.accuracy) + ", F1 " +
            format_percent(evaluation.ensemble.macro_f1));

        if (recipe.export_enabled) {
            stage = "export";
            export_bundle(bundle, root / "export");
        }
    } catch (const std::exception& e) {
        outcome.exit_code = 1;
        outcome.failed_stage = stage;
        outcome.error = e.what();
        write_json_atomic(root / "FAILED.json", {{"stage", stage}, {"error", e.what()}, {"provenance", provenance}});
        log("stage " + stage + " failed: " + e.what());
    }
    return outcome;
}

}  // namespace snowdet
