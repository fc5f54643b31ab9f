#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "bbm/engine.hpp"
#include "bbm/errors.hpp"
#include "bbm/genealogy.hpp"
#include "bbm/io.hpp"
#include "bbm/manifest.hpp"

using namespace bbm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bbm_test_io_" + name);
    fs::remove_all(p);
    return p;
}

Population pruned_population() {
    SimConfig c;
    c.horizon = 9.0;
    c.mode = Mode::barrier;
    c.slack = 2.0;
    c.seed = 3;
    return simulate_pruned(c);
}

}  // namespace

TEST_CASE("doubles round-trip through text") {
    for (double x : {0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e17, std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()})
        CHECK(parse_double(format_double(x)) == x);
    CHECK(std::isnan(parse_double(format_double(std::nan("")))));
    CHECK_THROWS_AS(parse_double("1.5x"), ValidationError);
    CHECK_THROWS_AS(parse_double(""), ValidationError);
    CHECK(json_to_double(json_number(-std::numeric_limits<double>::infinity())) < 0);
    CHECK(json_to_double(json_number(0.25)) == 0.25);
}

TEST_CASE("population binary round trip") {
    const Population pop = pruned_population();
    REQUIRE(pop.pruned_count() > 0);
    std::stringstream buf;
    write_population_binary(buf, pop);
    const Population back = read_population_binary(buf);
    CHECK(back.horizon() == pop.horizon());
    CHECK(back.mode() == Mode::barrier);
    CHECK(back.slack() == 2.0);
    CHECK(back.pruned_count() == pop.pruned_count());
    REQUIRE(back.size() == pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
        CHECK(back[i].parent == pop[i].parent);
        CHECK(back[i].end_pos == pop[i].end_pos);
        CHECK(back[i].birth_time == pop[i].birth_time);
        CHECK(back[i].alive == pop[i].alive);
    }
    back.validate();

    std::string bytes = buf.str();
    std::stringstream bad(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_population_binary(bad), ValidationError);
    bytes[0] = 'X';
    std::stringstream wrong(bytes);
    CHECK_THROWS_AS(read_population_binary(wrong), ValidationError);
}

TEST_CASE("population csv") {
    const Population pop = pruned_population();
    std::stringstream out;
    write_population_csv(out, pop);
    std::string line;
    std::getline(out, line);
    CHECK(line == "id,parent,birth_time,birth_pos,end_time,end_pos,alive");
    std::size_t rows = 0;
    while (std::getline(out, line)) ++rows;
    CHECK(rows == pop.size());
}

TEST_CASE("point configurations round-trip through JSON") {
    const auto pc = PointConfiguration::from_heights({0.0, -1.25, -1.25, -3.0}, Reference::relative_to_local_max);
    CHECK(points_from_json(points_to_json(pc)) == pc);
    std::stringstream out;
    write_points_csv(out, pc);
    CHECK(out.str().rfind("height,multiplicity\n", 0) == 0);
    CHECK(out.str().find("-1.25,2\n") != std::string::npos);
}

TEST_CASE("labeled process output") {
    SimConfig c;
    c.horizon = 5.0;
    const Population pop = simulate_exact(c);
    const GenealogyIndex index(pop);
    const LabeledExtremalProcess lep = labeled_extremal_process(index, 1.0, 2.0);
    std::stringstream out;
    write_labeled_csv(out, lep);
    std::string line;
    std::getline(out, line);
    CHECK(line == "height,multiplicity,cluster_id");
    const auto j = labeled_to_json(lep);
    CHECK(j.dump().size() > 2);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("file hash matches the in-memory hash across chunks") {
    const fs::path dir = scratch("hash");
    std::string big;
    for (int i = 0; big.size() < (3u << 20); ++i) big += std::to_string(i * 7919) + ",";
    write_file(dir / "big.csv", big);
    CHECK(fnv1a64_file(dir / "big.csv") == fnv1a64(big));
    write_file(dir / "empty", "");
    CHECK(fnv1a64_file(dir / "empty") == fnv1a64(""));
    RunManifest m;
    m.add_written_file(dir, "big.csv");
    CHECK(m.files.at("big.csv") == hex64(fnv1a64(big)));
}

TEST_CASE("manifests detect edits and stale outputs") {
    const fs::path dir = scratch("manifest");
    RunManifest m;
    m.command = "simulate";
    m.config = {{"t", 4.0}, {"mode", "barrier"}};
    m.seed = 9;
    m.replica_count = 3;
    m.add_file(dir, "summary.csv", "a,b\n1,2\n");
    m.write(dir);

    const RunManifest back = load_manifest(dir);
    CHECK(back.hash == m.hash);
    CHECK(back.config == m.config);
    CHECK(back.compute_hash() == m.compute_hash());
    CHECK(RunManifest::from_json(m.to_json()).hash == m.hash);

    // rewriting the same content is reproducible
    const std::string first = read_file(dir / "manifest.json");
    RunManifest again = m;
    again.hash.clear();
    again.write(dir);
    CHECK(read_file(dir / "manifest.json") == first);
    CHECK(again.hash == m.hash);

    write_file(dir / "summary.csv", "a,b\n1,3\n");
    CHECK_THROWS_WITH_AS(load_manifest(dir), doctest::Contains("stale data"), ValidationError);

    write_file(dir / "summary.csv", "a,b\n1,2\n");
    std::string text = read_file(dir / "manifest.json");
    text.replace(text.find("simulate"), 8, "simulatf");
    write_file(dir / "manifest.json", text);
    CHECK_THROWS_WITH_AS(load_manifest(dir), doctest::Contains("hash mismatch"), ValidationError);

    CHECK_THROWS_WITH_AS(load_manifest(scratch("nothing")), doctest::Contains("missing input"), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("timing goes to its own file") {
    const fs::path dir = scratch("timing");
    write_timing(dir, "2020-01-01T00:00:00Z", utc_now());
    CHECK(fs::exists(dir / "timing.json"));
    CHECK(utc_now().size() == 20);
    fs::remove_all(dir);
}
