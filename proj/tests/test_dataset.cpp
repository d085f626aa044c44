#include <fstream>
#include <set>

#include "doctest.h"
#include "snowdet/dataset.hpp"
#include "snowdet/io.hpp"
#include "support.hpp"

using namespace snowdet;
using snowdet::testing::noise_rgb;
using snowdet::testing::TempDir;
using snowdet::testing::write_png;

namespace fs = std::filesystem;

namespace {

std::string loc(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
    return buf;
}

// <root>/{snow,snow_free}/locNNN_<label>.png for `pairs` locations.
void write_paired_tree(const fs::path& root, int pairs, const char* prefix = "loc") {
    for (int i = 0; i < pairs; ++i) {
        write_png(root / "snow" / (loc(prefix, i) + "_snow.png"), noise_rgb(8, 8, 2 * i));
        write_png(root / "snow_free" / (loc(prefix, i) + "_snow_free.png"), noise_rgb(8, 8, 2 * i + 1));
    }
}

// The paper's layout: 38 paired locations plus 11 + 11 test images from
// distinct locations, 98 images in total.
DatasetManifest paper_sized_manifest(const TempDir& dir) {
    write_paired_tree(dir / "train_val", 38);
    write_paired_tree(dir / "test", 11, "tloc");
    for (int i = 0; i < 11; ++i) {
        fs::rename(dir / "test" / "snow_free" / (loc("tloc", i) + "_snow_free.png"),
                   dir / "test" / "snow_free" / (loc("tloc", 11 + i) + "_snow_free.png"));
    }
    IngestOptions opts;
    opts.root = dir / "train_val";
    opts.test_root = dir / "test";
    return ingest(opts).manifest;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("49 + 49 images give 98 records, 49 per label") {
    TempDir dir;
    write_paired_tree(dir.path(), 49);
    IngestOptions opts;
    opts.root = dir.path();
    const auto res = ingest(opts);
    CHECK(res.manifest.records.size() == 98);
    CHECK(res.manifest.count(Label::snow) == 49);
    CHECK(res.manifest.count(Label::snow_free) == 49);
    CHECK(res.rejects.empty());
    CHECK(res.warnings.empty());
    CHECK(res.manifest.schema_version == 1);
    CHECK_FALSE(res.manifest.created_at.empty());
    for (const auto& r : res.manifest.records) {
        CHECK(r.split == Split::unassigned);
        CHECK(fs::exists(r.path));
    }
    CHECK(res.manifest.find("snow/loc007_snow")->location_id == "loc007");
}

TEST_CASE("empty directory is an error") {
    TempDir dir;
    IngestOptions opts;
    opts.root = dir.path();
    CHECK_THROWS_WITH_AS(ingest(opts), doctest::Contains("no images found"), Error);
    fs::create_directories(dir / "snow");
    CHECK_THROWS_WITH_AS(ingest(opts), doctest::Contains("no images found"), Error);
}

TEST_CASE("undecodable files are reported, not dropped silently") {
    TempDir dir;
    write_png(dir / "snow/a_snow.png", noise_rgb(8, 8, 1));
    write_png(dir / "snow_free/a_snow_free.png", noise_rgb(8, 8, 2));
    write_file_atomic(dir / "snow/broken.jpg", "this is not a jpeg");
    IngestOptions opts;
    opts.root = dir.path();
    const auto res = ingest(opts);
    CHECK(res.manifest.records.size() == 2);
    REQUIRE(res.rejects.size() == 1);
    CHECK(res.rejects[0].path.filename() == "broken.jpg");
    CHECK_FALSE(res.rejects[0].reason.empty());
}

TEST_CASE("sidecar metadata overrides location and timestamp") {
    TempDir dir;
    write_png(dir / "snow/IMG_001.png", noise_rgb(8, 8, 1));
    write_png(dir / "snow_free/IMG_002.png", noise_rgb(8, 8, 2));
    write_file_atomic(dir / "metadata.jsonl",
                      R"({"file": "snow/IMG_001.png", "location_id": "corner", "captured_at": "2024-01-02T08:00:00Z"})"
                      "\n"
                      R"({"file": "snow_free/IMG_002.png", "location_id": "corner"})"
                      "\n"
                      "garbage line\n");
    IngestOptions opts;
    opts.root = dir.path();
    const auto res = ingest(opts);
    const auto* a = res.manifest.find("snow/IMG_001");
    REQUIRE(a);
    CHECK(a->location_id == "corner");
    CHECK(a->captured_at == "2024-01-02T08:00:00Z");
    CHECK_FALSE(res.manifest.find("snow_free/IMG_002")->captured_at.has_value());
    CHECK(res.warnings.size() == 1);
    CHECK(pair_by_location(res.manifest).manifest.pairs.size() == 1);
}

TEST_CASE("default location id strips the label suffix") {
    CHECK(default_location_id("loc07_snow_free") == "loc07");
    CHECK(default_location_id("loc07_snow") == "loc07");
    CHECK(default_location_id("park-snow-free") == "park");
    CHECK(default_location_id("IMG_1234") == "IMG_1234");
    CHECK(default_location_id("_snow") == "_snow");
}

TEST_CASE("pairing") {
    TempDir dir;
    SUBCASE("76 non-test records over 38 locations -> 38 pairs") {
        const auto m = paper_sized_manifest(dir);
        CHECK(m.records.size() == 98);
        const auto paired = pair_by_location(m);
        CHECK(paired.manifest.pairs.size() == 38);
        CHECK(paired.flagged.empty());
        for (const auto& p : paired.manifest.pairs) {
            CHECK(paired.manifest.find(p.snow_record)->label == Label::snow);
            CHECK(paired.manifest.find(p.snow_free_record)->label == Label::snow_free);
        }
    }
    SUBCASE("0 records -> 0 pairs") {
        const auto paired = pair_by_location(DatasetManifest{});
        CHECK(paired.manifest.pairs.empty());
        CHECK(paired.flagged.empty());
    }
    SUBCASE("two snow records at one location are flagged, not paired") {
        DatasetManifest m;
        m.records = {{"snow/a1", "a1.png", Label::snow, "a", std::nullopt, Split::unassigned},
                     {"snow/a2", "a2.png", Label::snow, "a", std::nullopt, Split::unassigned}};
        const auto paired = pair_by_location(m);
        CHECK(paired.manifest.pairs.empty());
        CHECK(paired.flagged == std::vector<std::string>{"snow/a1", "snow/a2"});
        CHECK_THROWS_AS(split(paired.manifest, 0.8, 1), Error);
    }
}

TEST_CASE("split") {
    TempDir dir;
    const auto paired = pair_by_location(paper_sized_manifest(dir)).manifest;

    SUBCASE("38 pairs at 0.8 -> 30 train pairs, 8 val pairs") {
        const auto m = split(paired, 0.8, 42);
        CHECK(m.records_in(Split::train).size() == 60);
        CHECK(m.records_in(Split::val).size() == 16);
        CHECK(m.records_in(Split::test).size() == 22);
        std::map<std::string, Split> split_of;
        for (const auto& r : m.records) split_of[r.id] = r.split;
        for (const auto& p : m.pairs) CHECK(split_of[p.snow_record] == split_of[p.snow_free_record]);
        // Test locations are distinct from train/val locations.
        std::set<std::string> test_locs, fit_locs;
        for (const auto& r : m.records) (r.split == Split::test ? test_locs : fit_locs).insert(r.location_id);
        for (const auto& l : test_locs) CHECK(fit_locs.count(l) == 0);
        CHECK(test_locs.size() == 22);
    }
    SUBCASE("same seed twice -> byte-identical manifests") {
        auto a = split(paired, 0.8, 7);
        auto b = split(paired, 0.8, 7);
        CHECK(to_jsonl(a) == to_jsonl(b));
        const auto c = split(paired, 0.8, 8);
        CHECK(to_jsonl(a) != to_jsonl(c));
    }
    SUBCASE("fractions outside (0, 1) are rejected") {
        CHECK_THROWS_AS(split(paired, 1.5, 1), Error);
        CHECK_THROWS_AS(split(paired, 0.0, 1), Error);
        CHECK_THROWS_AS(split(paired, 1.0, 1), Error);
    }
    SUBCASE("floor rounding on the train side") {
        CHECK(split(paired, 0.5, 3).records_in(Split::train).size() == 38);
        CHECK(split(paired, 0.99, 3).records_in(Split::train).size() == 74);
        CHECK(split(paired, 0.01, 3).records_in(Split::train).size() == 0);
    }
}

TEST_CASE("validate catches broken invariants") {
    DatasetManifest m;
    m.records = {{"s", "s.png", Label::snow, "x", std::nullopt, Split::train},
                 {"f", "f.png", Label::snow_free, "x", std::nullopt, Split::val}};
    m.pairs = {{"x", "s", "f"}};
    CHECK_THROWS_WITH_AS(validate(m), doctest::Contains("split across"), Error);
    m.records[1].split = Split::train;
    CHECK_NOTHROW(validate(m));
    m.records.push_back({"t", "t.png", Label::snow, "x", std::nullopt, Split::test});
    CHECK_THROWS_WITH_AS(validate(m), doctest::Contains("both test and train"), Error);
    m.records.pop_back();
    m.pairs = {{"x", "f", "s"}};
    CHECK_THROWS_AS(validate(m), Error);
    m.pairs = {{"x", "s", "missing"}};
    CHECK_THROWS_AS(validate(m), Error);
    m.pairs.clear();
    m.records.push_back(m.records[0]);
    CHECK_THROWS_WITH_AS(validate(m), doctest::Contains("duplicate"), Error);
}

TEST_CASE("manifest persistence") {
    TempDir dir;
    auto m = split(pair_by_location(paper_sized_manifest(dir)).manifest, 0.8, 42);
    m.provenance = {{"seed", 42}};
    const auto path = dir / "manifest.jsonl";
    save_manifest(path, m);
    const auto back = load_manifest(path);
    CHECK(back == m);

    const auto text = read_file(path);
    const auto header = nlohmann::json::parse(text.substr(0, text.find('\n')));
    CHECK(header["schema_version"] == 1);
    CHECK(header.contains("created_at"));
    CHECK(std::count(text.begin(), text.end(), '\n') == 99);

    SUBCASE("content hash ignores the creation time") {
        auto later = m;
        later.created_at = "2099-01-01T00:00:00Z";
        CHECK(manifest_content_hash(later) == manifest_content_hash(m));
        later.records[0].label = later.records[0].label == Label::snow ? Label::snow_free : Label::snow;
        CHECK(manifest_content_hash(later) != manifest_content_hash(m));
    }
    SUBCASE("schema version is mandatory") {
        CHECK_THROWS_AS(from_jsonl(R"({"created_at": "x"})"), Error);
        CHECK_THROWS_AS(from_jsonl(R"({"schema_version": 2})"), Error);
        CHECK_THROWS_AS(from_jsonl(""), Error);
        CHECK_THROWS_AS(load_manifest(dir / "nope.jsonl"), Error);
    }
}

TEST_CASE("label balance warning") {
    DatasetManifest m;
    m.records = {{"a", "a.png", Label::snow, "a", std::nullopt, Split::unassigned}};
    CHECK(label_balance_warning(m).has_value());
    m.records.push_back({"b", "b.png", Label::snow_free, "a", std::nullopt, Split::unassigned});
    CHECK_FALSE(label_balance_warning(m).has_value());
}

}
