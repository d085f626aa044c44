#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

inline constexpr int kManifestSchemaVersion = 1;

struct ImageRecord {
    std::string id;
    std::filesystem::path path;
    Label label = Label::snow_free;
    std::string location_id;
    std::optional<std::string> captured_at;
    Split split = Split::unassigned;

    bool operator==(const ImageRecord&) const = default;
};

/// One snow and one snow-free image taken at the same place.
struct LocationPair {
    std::string location_id;
    std::string snow_record;
    std::string snow_free_record;

    bool operator==(const LocationPair&) const = default;
};

struct DatasetManifest {
    int schema_version = kManifestSchemaVersion;
    std::string created_at;
    std::vector<ImageRecord> records;
    std::vector<LocationPair> pairs;
    /// Free-form run provenance (seed, config hash, code version); not part of the content hash.
    nlohmann::json provenance = nlohmann::json::object();

    const ImageRecord* find(std::string_view id) const;
    std::vector<ImageRecord> records_in(Split split) const;
    std::size_t count(Label label) const;

    bool operator==(const DatasetManifest&) const = default;
};

/// Maps label-directory names to labels.
using LabelRule = std::map<std::string, Label>;
LabelRule default_label_rule();

struct RejectEntry {
    std::filesystem::path path;
    std::string reason;
};

struct IngestOptions {
    std::filesystem::path root;
    /// Optional second tree whose images all go to the test split.
    std::optional<std::filesystem::path> test_root;
    LabelRule label_rule = default_label_rule();
};

struct IngestResult {
    DatasetManifest manifest;
    std::vector<RejectEntry> rejects;
    std::vector<std::string> warnings;
};

/// Scans `<root>/<label-dir>/*` and builds one record per decodable image.
/// An optional `<root>/metadata.jsonl` sidecar may supply location_id,
/// captured_at and split per file (keyed by the path relative to root).
/// Records are sorted by id. Throws when no image is found at all.
IngestResult ingest(const IngestOptions& options);

/// Location id derived from a filename stem: the stem with a trailing label
/// suffix removed ("loc07_snow_free" -> "loc07").
std::string default_location_id(std::string_view stem);

struct PairingResult {
    DatasetManifest manifest;
    /// Non-test records that could not be paired.
    std::vector<std::string> flagged;
};

/// Pairs non-test records per location: exactly one snow and one snow-free
/// record form a pair, anything else is flagged. Test records are never paired.
PairingResult pair_by_location(const DatasetManifest& manifest);

/// Assigns whole pairs to train/val. Pairs are put in location order, shuffled
/// with `seed`, and the first floor(train_fraction * pairs) go to train.
/// Requires every non-test record to be paired.
DatasetManifest split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

/// Checks unique ids, pair references, pair labels, pair-split integrity and
/// location disjointness between test and train/val. Throws on violation.
void validate(const DatasetManifest& manifest);

/// Non-empty when the manifest has unequal label counts.
std::optional<std::string> label_balance_warning(const DatasetManifest& manifest);

/// Digest of records and pairs; excludes the creation timestamp so that
/// re-ingesting identical data gives an identical hash.
std::string manifest_content_hash(const DatasetManifest& manifest);

std::string to_jsonl(const DatasetManifest& manifest);
DatasetManifest from_jsonl(const std::string& text);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace snowdet
