#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ilms/cli.hpp"
#include "support.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace ilms;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_doc() {
    return json::parse(R"({
      "network": {"n": 3, "m": 2, "w_true": [0.5, -0.25], "seed": 99},
      "profiles": {
        "mu": 0.05,
        "sigma_v2": {"uniform": [0.001, 0.01]},
        "ru": {"spread": 2, "trace": 2, "basis": "shared"},
        "q": {"sigma_c2": 1e-4}
      },
      "channels": {"law": "rayleigh", "mean": 0.9},
      "plan": {"mode": "fading", "iterations": 60, "runs": 8, "tail": 20, "workers": 2}
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> data_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

// Fresh directory per check, removed at scope exit.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ilms_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

fs::path write_config(const TempDir& dir, const json& doc, const std::string& name = "cfg.json") {
    const auto p = dir.path / name;
    std::ofstream(p) << doc.dump(2);
    return p;
}

int run_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
    args.insert(args.begin(), "ilms");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto cfg = config::parse_config_json(small_doc());
    CHECK(cfg.network.n == 3);
    CHECK(cfg.network.profiles.size() == 3);
    CHECK(cfg.plan.workers == 2);

    SUBCASE("Rayleigh mean resolves to its scale") {
        const auto& ch = cfg.resolved["channels"][1];
        CHECK(ch["law"] == "rayleigh");
        CHECK(ch["params"]["sigma_r"].get<double>() == doctest::Approx(model::rayleigh_from_mean(0.9).sigma_r));
        CHECK(ch["m"].get<double>() == doctest::Approx(0.9).epsilon(1e-12));
    }
    SUBCASE("uniform draws are per node, inside the range and reproducible") {
        const auto again = config::parse_config_json(small_doc());
        std::vector<double> v;
        for (int k = 0; k < 3; ++k) {
            const double x = cfg.network.profiles[k].sigma_v2;
            CHECK(x >= 0.001);
            CHECK(x <= 0.01);
            CHECK(x == again.network.profiles[k].sigma_v2);
            v.push_back(x);
        }
        CHECK(v[0] != v[1]);
        config::Overrides ov;
        ov.seed = 100;
        CHECK(config::parse_config_json(small_doc(), ov).network.profiles[0].sigma_v2 != v[0]);
    }
    SUBCASE("resolved document re-parses to the same experiment") {
        const auto back = config::parse_config_json(cfg.resolved);
        CHECK(back.hash == cfg.hash);
        CHECK(back.resolved.dump() == cfg.resolved.dump());
    }
    SUBCASE("array form equals the expanded template") {
        json doc = small_doc();
        const json tmpl = doc["channels"];
        doc["channels"] = json::array({tmpl, tmpl, tmpl});
        CHECK(config::parse_config_json(doc).hash == cfg.hash);
        doc["channels"] = json::array({tmpl, tmpl});
        CHECK_THROWS_AS((void)config::parse_config_json(doc), ConfigError);
    }
    SUBCASE("shared basis gives commuting covariances") {
        const Matrix& a = cfg.network.profiles[0].ru;
        const Matrix& b = cfg.network.profiles[2].ru;
        CHECK((a * b - b * a).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("config errors name the field") {
    auto error_path = [](const json& doc) -> std::string {
        try {
            (void)config::parse_config_json(doc);
        } catch (const ConfigError& e) {
            return e.path();
        }
        return "<no error>";
    };
    json doc = small_doc();
    doc["plan"]["tail"] = 100;
    CHECK(error_path(doc) == "plan.tail");

    doc = small_doc();
    doc["plan"].erase("tail");
    doc["plan"]["iterations"] = 50;
    CHECK(config::parse_config_json(doc).plan.tail == 50);

    doc = small_doc();
    doc["channels"]["mean"] = -1.0;
    CHECK(error_path(doc).find("channels") == 0);

    doc = small_doc();
    doc["plan"]["mode"] = "teleport";
    CHECK(error_path(doc) == "plan.mode");

    doc = small_doc();
    doc["channels"] = {{"law", "constant"}, {"h", 0.9}, {"m", 0.9}, {"s", 0.8}};
    CHECK(error_path(doc).find("channels") == 0);

    CHECK_THROWS_AS((void)config::parse_config_text("{ not json"), ConfigError);
    CHECK_THROWS_AS((void)config::parse_config("/nonexistent/ilms.json"), ConfigError);
}

TEST_CASE("CSV formatting") {
    CHECK(cli::format_number(0.1) == "0.1");
    CHECK(cli::format_number(1.0 / 3.0) == "0.333333333333");
    CHECK(cli::format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
    const auto cfg = config::parse_config_json(small_doc());
    cli::CsvWriter w(cfg, "simulate");
    w.header({"a", "b"});
    w.cell(1).cell(2.5);
    w.end_row();
    const auto lines = data_lines(w.text());
    REQUIRE(lines.size() == 2);
    CHECK(lines[1] == "1,2.5");
    CHECK(w.text().rfind("# ilms " + std::string(cli::version()) + "\n", 0) == 0);
    CHECK(w.text().find("# config_hash: " + config::hex64(cfg.hash) + "\n") != std::string::npos);
    CHECK(w.text().find("# seed: 99\n") != std::string::npos);
}

TEST_CASE("simulate output is byte-identical across runs and worker counts") {
    TempDir dir("sim");
    const auto cfg_path = write_config(dir, small_doc());
    const auto a = dir.path / "a", b = dir.path / "b";
    CHECK(run_cli({"simulate", "--config", cfg_path.string(), "--out", a.string()}) == cli::kExitOk);
    CHECK(run_cli({"simulate", "--config", cfg_path.string(), "--out", b.string(), "--workers", "5"}) ==
          cli::kExitOk);
    // --workers changes only the recorded plan, not the numbers.
    CHECK(data_lines(slurp(a / "series.csv")) == data_lines(slurp(b / "series.csv")));
    const auto c = dir.path / "c";
    CHECK(run_cli({"simulate", "--config", cfg_path.string(), "--out", c.string()}) == cli::kExitOk);
    for (const char* f : {"series.csv", "steady.csv", "resolved_config.json"}) CHECK(slurp(a / f) == slurp(c / f));

    const auto series = slurp(a / "series.csv");
    CHECK(series.rfind("# ilms ", 0) == 0);
    CHECK(series.find("# seed: 99") != std::string::npos);
    const auto rows = data_lines(series);
    CHECK(rows.front() == "iter,node,msd,emse,mse");
    CHECK(rows.size() == 1 + 60 * 3);
    CHECK(data_lines(slurp(a / "steady.csv")).size() == 4);

    const auto resolved = json::parse(slurp(a / "resolved_config.json"));
    CHECK(resolved["meta"]["config_hash"] == config::hex64(config::parse_config(cfg_path).hash));
}

TEST_CASE("overrides reach the plan") {
    TempDir dir("ovr");
    const auto cfg_path = write_config(dir, small_doc());
    const auto out = dir.path / "o";
    CHECK(run_cli({"simulate", "--config", cfg_path.string(), "--out", out.string(), "--iterations", "1", "--tail",
                   "1", "--runs", "2", "--seed", "5"}) == cli::kExitOk);
    const auto text = slurp(out / "series.csv");
    CHECK(data_lines(text).size() == 1 + 3);
    CHECK(text.find("# seed: 5") != std::string::npos);
    CHECK(text.find("runs: 2, iterations: 1, tail: 1") != std::string::npos);
}

TEST_CASE("exit codes") {
    TempDir dir("exit");
    std::string err;

    json bad = small_doc();
    bad["plan"]["tail"] = 1000;
    const auto bad_path = write_config(dir, bad, "bad.json");
    CHECK(run_cli({"simulate", "--config", bad_path.string(), "--out", (dir.path / "x").string()}, &err) ==
          cli::kExitConfig);
    CHECK(err.find("plan.tail") != std::string::npos);
    CHECK(run_cli({"simulate", "--config", (dir.path / "missing.json").string()}) == cli::kExitConfig);
    CHECK(run_cli({"simulate"}) == cli::kExitConfig);
    CHECK(run_cli({"simulate", "--config", bad_path.string(), "--mode", "sideways"}) == cli::kExitConfig);

    json unstable = small_doc();
    unstable["profiles"]["mu"] = 2.0;
    unstable["channels"] = {{"law", "ideal"}};
    const auto unstable_path = write_config(dir, unstable, "unstable.json");
    const auto th = dir.path / "th";
    CHECK(run_cli({"theory", "--config", unstable_path.string(), "--out", th.string()}) == cli::kExitInstability);
    CHECK(fs::exists(th / "stability.csv"));
    CHECK_FALSE(fs::exists(th / "prediction.csv"));
    const auto stab = data_lines(slurp(th / "stability.csv"));
    CHECK(stab.front() == "node,mu_lo,mu_hi,ms_margin,rho_pi,rho_mean,mean_stable,ms_stable");
    CHECK(stab[1].find(",false,false") != std::string::npos);

    const auto cmp = dir.path / "cmp";
    CHECK(run_cli({"compare", "--config", unstable_path.string(), "--out", cmp.string()}) == cli::kExitInstability);
    CHECK_FALSE(fs::exists(cmp / "compare.csv"));

    CHECK(run_cli({"simulate", "--config", unstable_path.string(), "--out", (dir.path / "div").string(),
                   "--iterations", "800", "--tail", "10"}) == cli::kExitDivergence);
}

TEST_CASE("theory writes prediction and removes a stale one on failure") {
    TempDir dir("theory");
    const auto good = write_config(dir, small_doc(), "good.json");
    const auto out = dir.path / "t";
    CHECK(run_cli({"theory", "--config", good.string(), "--out", out.string()}) == cli::kExitOk);
    REQUIRE(fs::exists(out / "prediction.csv"));
    CHECK(data_lines(slurp(out / "prediction.csv")).size() == 4);
    CHECK(data_lines(slurp(out / "stability.csv"))[1].find(",true,true") != std::string::npos);

    json unstable = small_doc();
    unstable["profiles"]["mu"] = 2.0;
    const auto bad = write_config(dir, unstable, "bad.json");
    CHECK(run_cli({"theory", "--config", bad.string(), "--out", out.string()}) == cli::kExitInstability);
    CHECK_FALSE(fs::exists(out / "prediction.csv"));
}

TEST_CASE("compare reports the gap per node") {
    TempDir dir("cmp");
    const auto cfg = config::parse_config_json(small_doc());
    std::ostringstream log;
    const auto res = cli::cmd_compare(cfg, dir.path, log);
    CHECK(res.rows.size() == 3);
    for (const auto& r : res.rows)
        for (int j = 0; j < 3; ++j) CHECK(r.gap[j] == doctest::Approx(r.sim[j] - r.theory[j]));
    CHECK(log.str().find("compare: max |gap| =") != std::string::npos);
    CHECK(fs::exists(dir.path / "compare.csv"));
}

TEST_CASE("sweep") {
    TempDir dir("sweep");
    json doc = small_doc();
    doc["plan"]["sweep"] = {{"parameter", "mu"}, {"values", {0.05}}};
    auto cfg = config::parse_config_json(doc);
    std::ostringstream log;

    SUBCASE("a single value reproduces the theory command") {
        const auto rows = cli::cmd_sweep(cfg, dir.path / "s", log);
        const auto th = cli::cmd_theory(cfg, dir.path / "t", log);
        REQUIRE(rows.size() == 3);
        for (int k = 0; k < 3; ++k) {
            CHECK(rows[k].source == "theory");
            CHECK(rows[k].eta_db == th.prediction.nodes[k].eta_db);
            CHECK(rows[k].xi_db == th.prediction.nodes[k].xi_db);
        }
    }
    SUBCASE("unstable points are marked, node focus filters") {
        doc["plan"]["sweep"] = {{"parameter", "mu"}, {"values", {0.05, 2.0}}, {"node_focus", 2}};
        cfg = config::parse_config_json(doc);
        const auto rows = cli::cmd_sweep(cfg, dir.path / "s", log);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].node == 2);
        CHECK(rows[0].source == "theory");
        CHECK(rows[1].source == "unstable");
        CHECK(std::isnan(rows[1].eta_db));
        const auto text = slurp(dir.path / "s" / "sweep.csv");
        CHECK(data_lines(text).front() == "value,node,eta_db,zeta_db,xi_db,source");
    }
    SUBCASE("simulated sweep over s") {
        doc["plan"]["sweep"] = {{"parameter", "s"}, {"values", {1.0, 1.1}}, {"node_focus", 1}, {"simulate", true}};
        cfg = config::parse_config_json(doc);
        const auto rows = cli::cmd_sweep(cfg, dir.path / "s", log);
        REQUIRE(rows.size() == 4);
        int sims = 0;
        for (const auto& r : rows) sims += r.source == "simulation";
        CHECK(sims == 2);
    }
    SUBCASE("helpers") {
        const auto mu = cli::with_step_size(cfg.network, 0.01);
        for (const auto& p : mu.profiles) CHECK(p.mu == 0.01);
        const auto s = cli::with_second_moment(cfg.network, 1.3);
        for (const auto& c : s.channels) {
            CHECK(c.m == doctest::Approx(1.0));
            CHECK(c.s == doctest::Approx(1.3));
        }
    }
}

TEST_CASE("shipped configs parse") {
    for (const char* name : {"paper_fig3.json", "fig4_mu_sweep.json", "fig5_s_sweep.json", "fig6_shift.json"}) {
        CAPTURE(name);
        const auto cfg = config::parse_config(test::source_path(std::string("configs/") + name));
        CHECK(cfg.network.n == 20);
        CHECK(config::parse_config_json(cfg.resolved).hash == cfg.hash);
    }
}
