#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mivec/cli.hpp"
#include "mivec/metrics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mivec;

namespace {

int cli(const std::vector<std::string>& args) {
    std::vector<std::string> own{"mivec"};
    own.insert(own.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(own.size());
    for (const auto& s : own) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

json load_json(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    return json::parse(f);
}

// Shared scratch tree: one synth sequence and one full encode, reused below.
struct Workspace {
    fs::path root, seq_dir, container, enc_report;

    Workspace() {
        root = fs::temp_directory_path() / "mivec_cli_suite";
        fs::remove_all(root);
        fs::create_directories(root);
        seq_dir = root / "seq";
        container = root / "out.mvb";
        enc_report = root / "out.mvb.json";
        REQUIRE(cli({"synth", "--output", seq_dir.string(), "--views", "3", "--frames", "2",
                     "--height", "16", "--width", "16", "--disparity", "1", "--seed", "9"}) == 0);
        REQUIRE(cli({"encode", "--input", seq_dir.string(), "--output", container.string(),
                     "--grid-c", "6", "--factors", "2,2", "--epochs", "2", "--qat-epochs", "1",
                     "--qp", "20", "--seed", "3"}) == 0);
    }
};

const Workspace& ws() {
    static const Workspace w;
    return w;
}

} // namespace

TEST_CASE("encode writes the container and a coherent JSON report") {
    const auto& w = ws();
    REQUIRE(fs::exists(w.container));
    json j = load_json(w.enc_report);
    CHECK(j["command"] == "encode");
    CHECK(j["seed"].get<uint64_t>() == 3);
    CHECK(j["qp"].get<int>() == 20);
    CHECK(j["grid"]["c"].get<int>() == 6);
    CHECK(j["view_psnr"].size() == 3);
    CHECK(j["epochs"].get<int>() == 2);
    CHECK(j["segments"]["total"].get<size_t>() == fs::file_size(w.container));
    double bpp = 8.0 * static_cast<double>(fs::file_size(w.container)) / (3.0 * 2 * 16 * 16);
    CHECK(j["bpp"].get<double>() == doctest::Approx(bpp).epsilon(1e-12));
}

TEST_CASE("decode then eval reproduces the encoder's own quality numbers") {
    const auto& w = ws();
    fs::path dec = w.root / "dec_full";
    REQUIRE(cli({"decode", "--input", w.container.string(), "--output", dec.string()}) == 0);
    for (const char* v : {"v00", "v01", "v02"}) CHECK(fs::exists(dec / v / "f0001.png"));
    CHECK(fs::exists(dec / "cameras.json"));

    fs::path rep = w.root / "eval.json";
    REQUIRE(cli({"eval", "--ref", w.seq_dir.string(), "--rec", dec.string(), "--report",
                 rep.string()}) == 0);
    json je = load_json(rep);
    json jc = load_json(w.enc_report);
    REQUIRE(je["view_psnr"].size() == 3);
    // PNG transport is closed under byte rounding, so the decoded tree scores
    // exactly what the encoder reported.
    for (int v = 0; v < 3; ++v) {
        CHECK(je["view_psnr"][v].get<double>() == jc["view_psnr"][v].get<double>());
        CHECK(je["view_ssim"][v].get<double>() == jc["view_ssim"][v].get<double>());
    }
    CHECK(je["mean_psnr"].get<double>() == jc["mean_psnr"].get<double>());
}

TEST_CASE("decode can restrict itself to a view subset") {
    const auto& w = ws();
    fs::path dec = w.root / "dec_sub";
    REQUIRE(cli({"decode", "--input", w.container.string(), "--output", dec.string(), "--views",
                 "2"}) == 0);
    CHECK(fs::exists(dec / "v02" / "f0000.png"));
    CHECK_FALSE(fs::exists(dec / "v00"));
    CHECK_FALSE(fs::exists(dec / "v01"));
}

TEST_CASE("exit codes separate usage, runtime, and corruption failures") {
    const auto& w = ws();
    CHECK(cli({"encode", "--output", (w.root / "x.mvb").string()}) == 2); // missing --input
    CHECK(cli({"frobnicate"}) == 2);
    CHECK(cli({"--help"}) == 0);
    CHECK(cli({"eval"}) == 2);
    CHECK(cli({"decode", "--input", (w.root / "absent.mvb").string(), "--output",
               (w.root / "nowhere").string()}) == 1);

    fs::path junk = w.root / "junk.mvb";
    std::ofstream(junk, std::ios::binary) << std::string(100, '\xab');
    CHECK(cli({"decode", "--input", junk.string(), "--output",
               (w.root / "nowhere2").string()}) == 3);
}

TEST_CASE("eval reports dimension mismatches with its own exit code") {
    const auto& w = ws();
    fs::path other = w.root / "seq_wide";
    REQUIRE(cli({"synth", "--output", other.string(), "--views", "3", "--frames", "2",
                 "--height", "16", "--width", "24", "--disparity", "1", "--seed", "9"}) == 0);
    CHECK(cli({"eval", "--ref", w.seq_dir.string(), "--rec", other.string()}) == 4);
}

TEST_CASE("seed resolution: flag beats environment beats default") {
    const auto& w = ws();
    setenv("MIVEC_SEED", "123", 1);
    fs::path o1 = w.root / "seed_env.mvb";
    REQUIRE(cli({"encode", "--input", w.seq_dir.string(), "--output", o1.string(), "--grid-c",
                 "6", "--factors", "2,2", "--epochs", "1", "--qat-epochs", "0", "--qp",
                 "20"}) == 0);
    CHECK(load_json(o1.string() + ".json")["seed"].get<uint64_t>() == 123);

    fs::path o2 = w.root / "seed_flag.mvb";
    REQUIRE(cli({"encode", "--input", w.seq_dir.string(), "--output", o2.string(), "--grid-c",
                 "6", "--factors", "2,2", "--epochs", "1", "--qat-epochs", "0", "--qp", "20",
                 "--seed", "5"}) == 0);
    CHECK(load_json(o2.string() + ".json")["seed"].get<uint64_t>() == 5);

    setenv("MIVEC_SEED", "not_a_number", 1);
    CHECK(cli({"encode", "--input", w.seq_dir.string(), "--output",
               (w.root / "seed_bad.mvb").string(), "--grid-c", "6", "--factors", "2,2",
               "--epochs", "1", "--qat-epochs", "0", "--qp", "20"}) == 2);
    unsetenv("MIVEC_SEED");
}

TEST_CASE("ablate records its switches in the report") {
    const auto& w = ws();
    fs::path o = w.root / "abl.mvb";
    REQUIRE(cli({"ablate", "--input", w.seq_dir.string(), "--output", o.string(), "--grid-c",
                 "6", "--factors", "2,2", "--epochs", "1", "--qat-epochs", "0", "--qp", "20",
                 "--seed", "3", "--no-ivc"}) == 0);
    json j = load_json(o.string() + ".json");
    CHECK(j["command"] == "ablate");
    CHECK(j["switches"]["no_ivc"].get<bool>());
    CHECK_FALSE(j["switches"]["no_grid_fea_t"].get<bool>());
}

TEST_CASE("eval compares RD curves and renders the plot") {
    const auto& w = ws();
    std::vector<RDPoint> anchor{{"a1", 1.0, 30.0, 0.900},
                                {"a2", 2.0, 35.0, 0.950},
                                {"a3", 4.0, 40.0, 0.990},
                                {"a4", 8.0, 45.0, 0.995}};
    std::vector<RDPoint> test = anchor;
    for (auto& p : test) p.bpp *= 2.0; // same quality at twice the rate
    fs::path acsv = w.root / "anchor.csv", tcsv = w.root / "test.csv";
    write_rd_csv(acsv.string(), anchor);
    write_rd_csv(tcsv.string(), test);

    fs::path plot = w.root / "rd.svg", rep = w.root / "bd.json";
    REQUIRE(cli({"eval", "--anchor-csv", acsv.string(), "--test-csv", tcsv.string(), "--plot",
                 plot.string(), "--report", rep.string()}) == 0);
    json j = load_json(rep);
    CHECK(j["bd_rate_psnr"].get<double>() == doctest::Approx(100.0).epsilon(1e-5));
    CHECK(j["bd_rate_ssim"].get<double>() == doctest::Approx(100.0).epsilon(1e-5));

    std::ifstream f(plot);
    std::string svg((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("polyline") != std::string::npos);

    // A plot without curves to draw is a usage error.
    CHECK(cli({"eval", "--plot", plot.string()}) == 2);
}
