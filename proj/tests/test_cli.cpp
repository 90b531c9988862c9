#include "deq/cli/commands.hpp"
#include "deq/cli/config.hpp"
#include "deq/cli/output.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

using namespace deq::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

Json small(const fs::path& dir, std::vector<std::string> extra = {}) {
    std::vector<std::string> sets = {"data.n=6", "data.d=8", "model.m=40", "output.directory=\"" +
                                                                           dir.string() + "\""};
    sets.insert(sets.end(), extra.begin(), extra.end());
    return load_config(std::nullopt, sets);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("defaults and overrides") {
    const Json d = default_config();
    CHECK(get<long>(d, "model.m") == 500);
    CHECK(get<double>(d, "model.sigma_w2") == 0.08);
    CHECK(get<std::string>(d, "train.eta") == "auto");

    Json c = load_config(std::nullopt, {"model.m=64", "train.eta=0.01", "data.kind=synthetic"});
    CHECK(get<long>(c, "model.m") == 64);
    CHECK(get<double>(c, "train.eta") == 0.01);
    CHECK(get<std::string>(c, "data.kind") == "synthetic");

    CHECK_THROWS_AS(load_config(std::nullopt, {"model.width=3"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, {"model.m"}), ConfigError);
    CHECK_THROWS_AS(get<long>(d, "data.kind"), ConfigError);
    CHECK_THROWS_AS(at_path(d, "nope.key"), ConfigError);
}

TEST_CASE("config files merge strictly and allow comments") {
    const auto dir = test_support::scratch_dir("cli_cfg");
    {
        std::ofstream f(dir / "c.json");
        f << "{\n  // width\n  \"model\": {\"m\": 77}\n}\n";
    }
    const Json c = load_config(dir / "c.json", {"model.m=78"});
    CHECK(get<long>(c, "model.m") == 78);
    CHECK(get<long>(c, "data.n") == 1000);
    {
        std::ofstream f(dir / "bad.json");
        f << "{\"model\": {\"mm\": 1}}";
    }
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("config hash ignores the output directory") {
    const Json a = load_config(std::nullopt, {"output.directory=\"x\""});
    const Json b = load_config(std::nullopt, {"output.directory=\"y\""});
    const Json c = load_config(std::nullopt, {"model.m=501"});
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) == config_hash(default_config()));
}

TEST_CASE("validation rejects bad ranges and missing paths") {
    CHECK_THROWS_AS(validate_config(load_config(std::nullopt, {"data.n=0"}), "gen-data"), ConfigError);
    CHECK_THROWS_AS(validate_config(load_config(std::nullopt, {"model.sigma_w2=1.5"}), "train"), ConfigError);
    CHECK_THROWS_AS(validate_config(load_config(std::nullopt, {"concentration.m_list=[]"}), "concentration"),
                    ConfigError);
    CHECK_THROWS_AS(
        validate_config(load_config(std::nullopt, {"data.kind=file", "data.x_path=\"/no/such/x.csv\"",
                                                   "data.y_path=\"/no/such/y.csv\""}),
                        "check"),
        ConfigError);
    CHECK_NOTHROW(validate_config(default_config(), "train"));
}

TEST_CASE("stamp format") {
    const Json c = default_config();
    const RunStamp s = make_stamp("kernel", c, 7);
    CHECK(s.line() == "deq_lab 0.1.0 kernel config=" + config_hash(c) + " seed=7");
    CHECK(s.json()["command"] == "kernel");
}

TEST_CASE("svg plots carry series and stamp") {
    const std::string svg = svg_line_plot(PlotSpec{"t", "x", "y", false, true, 1.0},
                                          {Series{"a", {1, 2, 3}, {1, 0.1, 0.01}}}, "stamp here");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("<!-- stamp here -->") != std::string::npos);
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
}

TEST_CASE("grad-check exit codes") {
    const auto dir = test_support::scratch_dir("cli_gc");
    std::ostringstream out, err;
    const std::string od = "output.directory=\"" + dir.string() + "\"";
    CHECK(run_command("grad-check", load_config(std::nullopt, {od}), out, err) == 0);
    CHECK(fs::exists(dir / "grad_check.json"));
    CHECK(run_command("grad-check", load_config(std::nullopt, {od, "grad_check.corrupt_scale=0.01"}), out,
                      err) == 5);
    std::ostringstream err4;
    CHECK(run_command("grad-check", load_config(std::nullopt, {od, "grad_check.w_scale=20"}), out, err4) ==
          4);
    CHECK(err4.str().find("deq_model forward solve at step 0") != std::string::npos);
    CHECK(run_command("concentration", load_config(std::nullopt, {od, "concentration.m_list=[]"}), out,
                      err) == 2);
    CHECK(run_command("frobnicate", default_config(), out, err) == 2);
}

TEST_CASE("gen-data is byte deterministic and stamped") {
    const auto a = test_support::scratch_dir("cli_gen_a");
    const auto b = test_support::scratch_dir("cli_gen_b");
    std::ostringstream out, err;
    REQUIRE(run_command("gen-data", small(a), out, err) == 0);
    REQUIRE(run_command("gen-data", small(b), out, err) == 0);
    CHECK(slurp(a / "X.csv") == slurp(b / "X.csv"));
    CHECK(slurp(a / "y.csv") == slurp(b / "y.csv"));
    CHECK(slurp(a / "data.json") == slurp(b / "data.json"));
    CHECK(first_line(a / "X.csv").rfind("# deq_lab 0.1.0 gen-data config=", 0) == 0);

    std::ostringstream err1;
    CHECK(run_command("gen-data", small(a, {"data.n=1"}), out, err1) == 0);
    CHECK(err1.str().find("warning: n = 1") != std::string::npos);
}

TEST_CASE("kernel and check write stamped artifacts") {
    const auto dir = test_support::scratch_dir("cli_kc");
    std::ostringstream out, err;
    REQUIRE(run_command("kernel", small(dir), out, err) == 0);
    for (const char* f : {"kernel_K.csv", "kernel_cos.csv", "kernel_depth_decay.csv"}) {
        CHECK(first_line(dir / f).rfind("# deq_lab 0.1.0 kernel", 0) == 0);
    }
    CHECK(slurp(dir / "kernel_depth_decay.svg").find("<!-- deq_lab 0.1.0 kernel") != std::string::npos);
    const Json k = Json::parse(slurp(dir / "kernel.json"));
    CHECK(k["meta"]["command"] == "kernel");

    REQUIRE(run_command("check", small(dir, {"check.zero_residual=true"}), out, err) == 0);
    const Json c = Json::parse(slurp(dir / "condition.json"));
    CHECK(c["meta"]["command"] == "check");
    CHECK(c["data"]["label_encoding"] == "initial predictions (zero residual)");
    CHECK(k["data"]["provenance"] == "synthetic");
    std::ifstream csv(dir / "condition.csv");
    std::string line;
    std::getline(csv, line);
    std::getline(csv, line);
    CHECK(line == "name,lhs,rhs,margin,satisfied");
}

TEST_CASE("train checkpoints and resumes into one contiguous trace") {
    const auto full = test_support::scratch_dir("cli_train_full");
    const auto part = test_support::scratch_dir("cli_train_part");
    const std::vector<std::string> common = {"train.eta=0.001", "train.steps=6", "train.checkpoint_every=3"};
    std::ostringstream out, err;
    REQUIRE(run_command("train", small(full, common), out, err) == 0);

    auto first = common;
    first.back() = "train.checkpoint_every=3";
    first[1] = "train.steps=3";
    REQUIRE(run_command("train", small(part, first), out, err) == 0);
    REQUIRE(fs::exists(part / "checkpoint_3.bin"));
    REQUIRE(fs::exists(part / "checkpoint_3.bin.json"));
    auto second = first;
    second.push_back("train.resume=\"" + (part / "checkpoint_3.bin").string() + "\"");
    REQUIRE(run_command("train", small(part, second), out, err) == 0);

    std::ifstream a(full / "metrics.csv");
    std::ifstream b(part / "metrics.csv");
    std::string la, lb;
    // stamps differ (different step counts); the rows must not
    std::getline(a, la);
    std::getline(b, lb);
    CHECK(la.rfind("# deq_lab 0.1.0 train", 0) == 0);
    CHECK(lb.rfind("# deq_lab 0.1.0 train", 0) == 0);
    long rows = 0;
    while (std::getline(a, la)) {
        REQUIRE(std::getline(b, lb));
        const auto ca = la.substr(0, la.find(','));
        const auto cb = lb.substr(0, lb.find(','));
        CHECK(ca == cb);
        ++rows;
    }
    CHECK_FALSE(std::getline(b, lb));
    CHECK(rows == 8);  // header plus steps 0..6

    const Json t = Json::parse(slurp(full / "train.json"));
    CHECK(t["meta"]["command"] == "train");
    CHECK(fs::exists(full / "loss.svg"));
    CHECK(fs::exists(full / "checkpoint_6.bin"));
}

}
