#include "snowdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "snowdet/digest.hpp"
#include "snowdet/io.hpp"
#include "snowdet/preprocess.hpp"
#include "snowdet/rng.hpp"

namespace snowdet {

namespace fs = std::filesystem;
using nlohmann::json;

const ImageRecord* DatasetManifest::find(std::string_view id) const {
    for (const auto& r : records) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

std::vector<ImageRecord> DatasetManifest::records_in(Split which) const {
    std::vector<ImageRecord> out;
    for (const auto& r : records) {
        if (r.split == which) out.push_back(r);
    }
    return out;
}

std::size_t DatasetManifest::count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const auto& r) { return r.label == label; }));
}

LabelRule default_label_rule() {
    return {{"snow", Label::snow}, {"snow_free", Label::snow_free}};
}

std::string default_location_id(std::string_view stem) {
    static const std::vector<std::string_view> kSuffixes = {
        "_snow_free", "-snow_free", "_snow-free", "-snow-free", "_snowfree", "-snowfree",
        "_snow", "-snow"};
    for (auto suffix : kSuffixes) {
        if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
            return std::string(stem.substr(0, stem.size() - suffix.size()));
        }
    }
    return std::string(stem);
}

namespace {

struct Sidecar {
    std::optional<std::string> location_id;
    std::optional<std::string> captured_at;
    std::optional<Split> split;
};

std::map<std::string, Sidecar> read_sidecar(const fs::path& root, std::vector<std::string>& warnings) {
    std::map<std::string, Sidecar> out;
    const auto path = root / "metadata.jsonl";
    if (!fs::exists(path)) return out;
    std::istringstream in(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            Sidecar s;
            if (j.contains("location_id") && !j["location_id"].is_null())
                s.location_id = j["location_id"].get<std::string>();
            if (j.contains("captured_at") && !j["captured_at"].is_null())
                s.captured_at = j["captured_at"].get<std::string>();
            if (j.contains("split") && !j["split"].is_null())
                s.split = parse_split(j["split"].get<std::string>());
            out[j.at("file").get<std::string>()] = s;
        } catch (const std::exception& e) {
            warnings.push_back(path.string() + ":" + std::to_string(lineno) + ": ignored (" + e.what() + ")");
        }
    }
    return out;
}

void ingest_tree(const fs::path& root, const LabelRule& rule, bool as_test, IngestResult& result) {
    if (!fs::is_directory(root)) throw Error("image root is not a directory: " + root.string());
    const auto sidecar = read_sidecar(root, result.warnings);

    std::vector<fs::path> label_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const auto name = entry.path().filename().string();
        if (rule.count(name) == 0) {
            result.warnings.push_back("skipping directory without a label rule: " + entry.path().string());
            continue;
        }
        label_dirs.push_back(entry.path());
    }
    std::sort(label_dirs.begin(), label_dirs.end());

    for (const auto& dir : label_dirs) {
        const Label label = rule.at(dir.filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            if (entry.path().filename().string().starts_with(".")) continue;
            files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            try {
                (void)load_rgb(file);
            } catch (const std::exception& e) {
                result.rejects.push_back({fs::absolute(file).lexically_normal(), e.what()});
                continue;
            }
            const auto rel = fs::relative(file, root).generic_string();
            ImageRecord r;
            r.id = (as_test ? "test/" : "") + dir.filename().string() + "/" + file.stem().string();
            r.path = fs::absolute(file).lexically_normal();
            r.label = label;
            r.location_id = default_location_id(file.stem().string());
            r.split = as_test ? Split::test : Split::unassigned;
            if (auto it = sidecar.find(rel); it != sidecar.end()) {
                if (it->second.location_id) r.location_id = *it->second.location_id;
                r.captured_at = it->second.captured_at;
                if (it->second.split && !as_test) r.split = *it->second.split;
            }
            result.manifest.records.push_back(std::move(r));
        }
    }
}

}  // namespace

IngestResult ingest(const IngestOptions& options) {
    IngestResult result;
    result.manifest.created_at = utc_timestamp_now();
    ingest_tree(options.root, options.label_rule, false, result);
    if (options.test_root) ingest_tree(*options.test_root, options.label_rule, true, result);

    if (result.manifest.records.empty() && result.rejects.empty()) {
        throw Error("no images found under " + options.root.string());
    }
    auto& records = result.manifest.records;
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].id == records[i - 1].id) throw Error("duplicate record id " + records[i].id);
    }
    if (auto w = label_balance_warning(result.manifest)) result.warnings.push_back(*w);
    return result;
}

PairingResult pair_by_location(const DatasetManifest& manifest) {
    PairingResult result{manifest, {}};
    result.manifest.pairs.clear();

    std::map<std::string, std::vector<const ImageRecord*>> by_location;
    for (const auto& r : manifest.records) {
        if (r.split == Split::test) continue;
        by_location[r.location_id].push_back(&r);
    }
    for (const auto& [location, members] : by_location) {
        const ImageRecord* snow = nullptr;
        const ImageRecord* clear = nullptr;
        int n_snow = 0, n_clear = 0;
        for (const auto* r : members) {
            if (r->label == Label::snow) {
                snow = r;
                ++n_snow;
            } else {
                clear = r;
                ++n_clear;
            }
        }
        if (n_snow == 1 && n_clear == 1) {
            result.manifest.pairs.push_back({location, snow->id, clear->id});
        } else {
            for (const auto* r : members) result.flagged.push_back(r->id);
        }
    }
    std::sort(result.flagged.begin(), result.flagged.end());
    return result;
}

DatasetManifest split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error("train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
    }
    std::set<std::string> paired;
    for (const auto& p : manifest.pairs) {
        paired.insert(p.snow_record);
        paired.insert(p.snow_free_record);
    }
    std::size_t unpaired = 0;
    for (const auto& r : manifest.records) {
        if (r.split != Split::test && paired.count(r.id) == 0) ++unpaired;
    }
    if (unpaired > 0) {
        throw Error(std::to_string(unpaired) +
                    " non-test record(s) are not paired; run pairing and resolve flagged records first");
    }

    auto pairs = manifest.pairs;
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.location_id < b.location_id; });
    Rng rng(seed);
    rng.shuffle(pairs);
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(pairs.size()) + 1e-9));

    std::map<std::string, Split> assignment;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Split s = i < n_train ? Split::train : Split::val;
        assignment[pairs[i].snow_record] = s;
        assignment[pairs[i].snow_free_record] = s;
    }
    DatasetManifest out = manifest;
    for (auto& r : out.records) {
        if (auto it = assignment.find(r.id); it != assignment.end()) r.split = it->second;
    }
    validate(out);
    return out;
}

void validate(const DatasetManifest& manifest) {
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : manifest.records) {
        if (!by_id.emplace(r.id, &r).second) throw Error("duplicate record id " + r.id);
    }
    for (const auto& p : manifest.pairs) {
        auto a = by_id.find(p.snow_record);
        auto b = by_id.find(p.snow_free_record);
        if (a == by_id.end() || b == by_id.end()) {
            throw Error("pair at location " + p.location_id + " references a missing record");
        }
        if (a->second->label != Label::snow || b->second->label != Label::snow_free) {
            throw Error("pair at location " + p.location_id + " does not have opposite labels");
        }
        if (a->second->location_id != p.location_id || b->second->location_id != p.location_id) {
            throw Error("pair at location " + p.location_id + " mixes locations");
        }
        if (a->second->split != b->second->split) {
            throw Error("pair at location " + p.location_id + " is split across " +
                        std::string(to_string(a->second->split)) + " and " +
                        std::string(to_string(b->second->split)));
        }
    }
    std::set<std::string> test_locations, fit_locations;
    for (const auto& r : manifest.records) {
        if (r.split == Split::test) test_locations.insert(r.location_id);
        if (r.split == Split::train || r.split == Split::val) fit_locations.insert(r.location_id);
    }
    for (const auto& loc : test_locations) {
        if (fit_locations.count(loc)) {
            throw Error("location " + loc + " appears in both test and train/val splits");
        }
    }
}

std::optional<std::string> label_balance_warning(const DatasetManifest& manifest) {
    const auto snow = manifest.count(Label::snow);
    const auto clear = manifest.count(Label::snow_free);
    if (snow == clear) return std::nullopt;
    return "label imbalance: " + std::to_string(snow) + " snow vs " + std::to_string(clear) +
           " snow_free records";
}

namespace {

json record_to_json(const ImageRecord& r) {
    json j;
    j["id"] = r.id;
    j["path"] = r.path.string();
    j["label"] = to_string(r.label);
    j["location_id"] = r.location_id;
    j["captured_at"] = r.captured_at ? json(*r.captured_at) : json(nullptr);
    j["split"] = to_string(r.split);
    return j;
}

ImageRecord record_from_json(const json& j) {
    ImageRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.location_id = j.at("location_id").get<std::string>();
    if (j.contains("captured_at") && !j["captured_at"].is_null())
        r.captured_at = j["captured_at"].get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    return r;
}

json pairs_to_json(const std::vector<LocationPair>& pairs) {
    json arr = json::array();
    for (const auto& p : pairs) {
        arr.push_back({{"location_id", p.location_id},
                       {"snow_record", p.snow_record},
                       {"snow_free_record", p.snow_free_record}});
    }
    return arr;
}

}  // namespace

std::string manifest_content_hash(const DatasetManifest& manifest) {
    Sha256 h;
    h.update("schema_version=" + std::to_string(manifest.schema_version) + "\n");
    for (const auto& r : manifest.records) h.update(record_to_json(r).dump() + "\n");
    h.update(pairs_to_json(manifest.pairs).dump());
    return h.hex_digest();
}

std::string to_jsonl(const DatasetManifest& manifest) {
    json header;
    header["schema_version"] = manifest.schema_version;
    header["created_at"] = manifest.created_at;
    header["pairs"] = pairs_to_json(manifest.pairs);
    if (!manifest.provenance.empty()) header["provenance"] = manifest.provenance;
    std::string out = header.dump() + "\n";
    for (const auto& r : manifest.records) out += record_to_json(r).dump() + "\n";
    return out;
}

DatasetManifest from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    DatasetManifest m;
    bool have_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("schema_version")) throw Error("manifest header lacks schema_version");
            m.schema_version = j["schema_version"].get<int>();
            if (m.schema_version != kManifestSchemaVersion) {
                throw Error("unsupported manifest schema_version " + std::to_string(m.schema_version));
            }
            m.created_at = j.value("created_at", "");
            m.provenance = j.value("provenance", json::object());
            for (const auto& p : j.value("pairs", json::array())) {
                m.pairs.push_back({p.at("location_id").get<std::string>(),
                                   p.at("snow_record").get<std::string>(),
                                   p.at("snow_free_record").get<std::string>()});
            }
            have_header = true;
            continue;
        }
        try {
            m.records.push_back(record_from_json(j));
        } catch (const std::exception& e) {
            throw Error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw Error("manifest is empty");
    validate(m);
    return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    write_file_atomic(path, to_jsonl(manifest));
}

DatasetManifest load_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw Error("manifest not found: " + path.string());
    return from_jsonl(read_file(path));
}

}  // namespace snowdet
