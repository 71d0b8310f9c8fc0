#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "nf3d/gallery.hpp"
#include "nf3d/lm.hpp"
#include "nf3d/model_io.hpp"
#include "support.hpp"

using namespace nf3d;
using namespace testsupport;

namespace {

EnrollMetadata meta_with(const std::string& timestamp, Eigen::Index points, double mse_value) {
    EnrollMetadata meta;
    meta.timestamp = timestamp;
    meta.source_points = points;
    meta.final_mse = mse_value;
    return meta;
}

} // namespace

TEST_CASE("enroll creates the gallery layout and grows per identity") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    const FaceModel first = init_weights(3, 1);
    const GalleryEntry one = enroll(gallery, "ada", first, meta_with("", 100, 1e-3));
    CHECK(one.identity == "ada");
    REQUIRE(one.model_paths.size() == 1);
    CHECK(one.model_paths[0] == "ada/model_0000.nf3d");
    CHECK(std::filesystem::exists(gallery / "ada/model_0000.nf3d"));
    CHECK(std::filesystem::exists(gallery / "index.txt"));

    const GalleryEntry two = enroll(gallery, "ada", init_weights(3, 2), meta_with("", 80, 2e-3));
    REQUIRE(two.model_paths.size() == 2);
    CHECK(two.model_paths[1] == "ada/model_0001.nf3d");

    const FaceModel back = deserialize(gallery / "ada/model_0000.nf3d");
    CHECK(encode_model(back) == encode_model(first));
}

TEST_CASE("index records carry the enrollment metadata") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    const FaceModel model = init_weights(4, 5);
    enroll(gallery, "bo", model, meta_with("2024-05-01T12:00:00Z", 640, 1.5e-4));

    const auto records = read_index(gallery);
    REQUIRE(records.size() == 1);
    CHECK(records[0].identity == "bo");
    CHECK(records[0].relative_path == "bo/model_0000.nf3d");
    CHECK(records[0].hidden_count == 4);
    CHECK(records[0].timestamp == "2024-05-01T12:00:00Z");
    CHECK(records[0].source_points == 640);
    CHECK(records[0].final_mse == 1.5e-4);
    CHECK(records[0].source_hash != 0);
}

TEST_CASE("an omitted timestamp is filled with UTC now") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    enroll(gallery, "cy", init_weights(2, 7), meta_with("", 0, 0.0));
    const auto records = read_index(gallery);
    REQUIRE(records.size() == 1);
    CHECK(records[0].timestamp.size() == 20);
    CHECK(records[0].timestamp[10] == 'T');
    CHECK(records[0].timestamp.back() == 'Z');
}

TEST_CASE("enroll rejects a hidden-count mismatch with the gallery") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    enroll(gallery, "ada", init_weights(3, 1), meta_with("", 0, 0.0));
    CHECK_THROWS_WITH_AS(enroll(gallery, "bo", init_weights(4, 2), meta_with("", 0, 0.0)),
                         doctest::Contains("hidden count"), DataError);
}

TEST_CASE("enroll rejects the same model twice for one identity but not for another") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    const FaceModel model = init_weights(3, 9);
    enroll(gallery, "ada", model, meta_with("", 0, 0.0));
    CHECK_THROWS_WITH_AS(enroll(gallery, "ada", model, meta_with("", 0, 0.0)),
                         doctest::Contains("already holds"), DataError);
    CHECK_NOTHROW(enroll(gallery, "bo", model, meta_with("", 0, 0.0)));
}

TEST_CASE("enroll validates identity names and metadata") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    const FaceModel model = init_weights(2, 11);
    CHECK_THROWS_AS(enroll(gallery, "bad/name", model, meta_with("", 0, 0.0)), DataError);
    CHECK_THROWS_AS(enroll(gallery, "", model, meta_with("", 0, 0.0)), DataError);
    CHECK_THROWS_AS(enroll(gallery, "..", model, meta_with("", 0, 0.0)), DataError);
    CHECK_THROWS_AS(enroll(gallery, "spaced name", model, meta_with("", 0, 0.0)), DataError);
    CHECK_THROWS_AS(enroll(gallery, "ok", model, meta_with("bad stamp", 0, 0.0)), DataError);
    CHECK_THROWS_AS(enroll(gallery, "ok", model, meta_with("", -1, 0.0)), DataError);
    CHECK_NOTHROW(enroll(gallery, "A-z.0_9", model, meta_with("", 0, 0.0)));
}

TEST_CASE("read_index returns empty for a missing gallery and rejects corruption") {
    TempDir dir;
    CHECK(read_index(dir / "nowhere").empty());

    const auto gallery = dir / "gallery";
    std::filesystem::create_directories(gallery);
    write_text(gallery / "index.txt", "ada\tada/model_0000.nf3d\t3\n");
    CHECK_THROWS_WITH_AS(read_index(gallery), doctest::Contains("line 1"), DataError);

    write_text(gallery / "index.txt",
               "ada\tada/m.nf3d\tthree\t2024-01-01T00:00:00Z\t5\t0.1\t00000000000000aa\n");
    CHECK_THROWS_AS(read_index(gallery), DataError);

    write_text(gallery / "index.txt",
               "ada\tada/m.nf3d\t3\t2024-01-01T00:00:00Z\t5\t0.1\tzz\n");
    CHECK_THROWS_AS(read_index(gallery), DataError);
}

TEST_CASE("match_probe ranks identities by their best model score") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    const Eigen::Index m = 2;
    std::vector<FaceModel> models;
    for (std::uint64_t k = 0; k < 6; ++k) models.push_back(init_weights(m, 100 + k));
    enroll(gallery, "ada", models[0], meta_with("", 0, 0.0));
    enroll(gallery, "ada", models[1], meta_with("", 0, 0.0));
    enroll(gallery, "bo", models[2], meta_with("", 0, 0.0));
    enroll(gallery, "bo", models[3], meta_with("", 0, 0.0));
    enroll(gallery, "cy", models[4], meta_with("", 0, 0.0));
    enroll(gallery, "cy", models[5], meta_with("", 0, 0.0));

    const SiameseNet net = init_siamese(4 * m + 1, {4, 2}, 55);

    // Probing with an enrolled model puts its identity first at score 0.
    // Deserializing reproduces the stored float32 weights exactly.
    const FaceModel stored = deserialize(gallery / "bo/model_0000.nf3d");
    const auto self = match_probe(gallery, stored, net, 5);
    REQUIRE(self.size() == 3);
    CHECK(self[0].identity == "bo");
    CHECK(self[0].score == 0.0);

    // The full ranking equals a brute-force pass over the index.
    const FaceModel probe = init_weights(m, 999);
    const Eigen::VectorXd probe_embedding = embed(net, flatten(probe).values);
    std::map<std::string, double> oracle;
    for (const auto& r : read_index(gallery)) {
        const FaceModel enrolled = deserialize(gallery / r.relative_path);
        const double score =
            energy(probe_embedding, embed(net, flatten(enrolled).values));
        const auto [it, inserted] = oracle.emplace(r.identity, score);
        if (!inserted && score < it->second) it->second = score;
    }
    std::vector<MatchResult> want;
    for (const auto& [identity, score] : oracle) want.push_back({identity, score});
    std::sort(want.begin(), want.end(), [](const MatchResult& a, const MatchResult& b) {
        return a.score != b.score ? a.score < b.score : a.identity < b.identity;
    });

    const auto got = match_probe(gallery, probe, net, 3);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].identity == want[i].identity);
        CHECK(got[i].score == want[i].score);
    }

    // top_k truncates; an oversized top_k returns everything.
    CHECK(match_probe(gallery, probe, net, 1).size() == 1);
    CHECK(match_probe(gallery, probe, net, 1)[0].identity == want[0].identity);
    CHECK(match_probe(gallery, probe, net, 50).size() == 3);
}

TEST_CASE("match_probe rejects bad inputs") {
    TempDir dir;
    const auto gallery = dir / "gallery";
    const SiameseNet net = init_siamese(9, {4, 2}, 56);
    CHECK_THROWS_AS(match_probe(gallery, init_weights(2, 1), net, 5), DataError);

    enroll(gallery, "ada", init_weights(2, 1), meta_with("", 0, 0.0));
    CHECK_THROWS_AS(match_probe(gallery, init_weights(3, 2), net, 5), DataError);
    CHECK_THROWS_AS(match_probe(gallery, init_weights(2, 2), net, 0), DataError);
    const SiameseNet wrong = init_siamese(13, {4, 2}, 57);
    CHECK_THROWS_AS(match_probe(gallery, init_weights(2, 2), wrong, 5), DataError);
}
