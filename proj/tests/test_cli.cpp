// Integration checks that drive the installed CLI binary end to end.
// The binary path comes in via OBIDET_CLI_PATH from the build.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

#define CLI_CHECK(cond, msg)                                                       \
    do {                                                                           \
        if (!(cond)) {                                                             \
            std::cerr << "[FAIL] " << __LINE__ << ": " << msg << "\n";             \
            ++g_failures;                                                          \
        }                                                                          \
    } while (0)

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    const fs::path tmp = fs::temp_directory_path() / "obidet_cli_out.txt";
    const std::string cmd = std::string(OBIDET_CLI_PATH) + " " + args + " > " +
                            tmp.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WEXITSTATUS(status);
    std::ifstream in(tmp);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

int main() {
    const fs::path dir = fs::temp_directory_path() / "obidet_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string() + "/";

    // gen: determinism and byte-stable outputs
    CLI_CHECK(run("gen --out " + d + "r1 --kind rubbing --count 6 --seed 7 --size 64").exit_code == 0,
              "gen rubbing");
    CLI_CHECK(run("gen --out " + d + "r2 --kind rubbing --count 6 --seed 7 --size 64").exit_code == 0,
              "gen rubbing again");
    CLI_CHECK(read_file(dir / "r1/annotations.json") == read_file(dir / "r2/annotations.json"),
              "gen annotations byte-identical");
    CLI_CHECK(read_file(dir / "r1/rubbing_00003.pgm") == read_file(dir / "r2/rubbing_00003.pgm"),
              "gen pixels byte-identical");
    CLI_CHECK(run("gen --out " + d + "f1 --kind font --count 5 --seed 3 --size 64").exit_code == 0,
              "gen font");

    // gen: count 0 still writes a valid empty dataset
    const RunResult zero = run("gen --out " + d + "empty --kind font --count 0 --seed 1");
    CLI_CHECK(zero.exit_code == 0, "gen count 0 exits 0");
    CLI_CHECK(fs::exists(dir / "empty/annotations.json"), "empty annotations exist");

    // unknown flags are rejected
    CLI_CHECK(run("gen --out x --kind font --count 1 --seed 1 --bogus 3").exit_code == 1,
              "unknown flag exits 1");
    CLI_CHECK(run("nonsense").exit_code == 1, "unknown subcommand exits 1");

    // train: tiny run, resolved config echoed first, identical reruns
    const std::string train_args = "train --rubbing " + d + "r1 --font " + d + "f1 --out " + d +
                                   "ck.bin --log " + d + "log.csv --iterations 6 --obc-count 3 --seed 5";
    const RunResult t1 = run(train_args + " --lambda1 1");
    CLI_CHECK(t1.exit_code == 0, "train runs");
    json cfg_line;
    bool cfg_parses = true;
    try {
        cfg_line = json::parse(first_line(t1.out));
    } catch (...) {
        cfg_parses = false;
    }
    CLI_CHECK(cfg_parses, "first train stdout line is the resolved config JSON");
    CLI_CHECK(cfg_parses && cfg_line["seed"] == 5, "seed override visible in resolved config");
    const std::string log1 = read_file(dir / "log.csv");
    const std::string ck1 = read_file(dir / "ck.bin");
    CLI_CHECK(run(train_args + " --lambda1 1").exit_code == 0, "train rerun");
    CLI_CHECK(read_file(dir / "log.csv") == log1, "train log byte-identical across reruns");
    CLI_CHECK(read_file(dir / "ck.bin") == ck1, "checkpoint byte-identical across reruns");
    CLI_CHECK(log1.rfind("iteration,l_clus,l_class,l_box,total", 0) == 0, "log header");

    // train with lambda1=0: l_clus column all zeros
    const RunResult t0 = run("train --rubbing " + d + "r1 --font " + d + "f1 --out " + d +
                             "ck0.bin --log " + d + "log0.csv --iterations 5 --lambda1 0");
    CLI_CHECK(t0.exit_code == 0, "ablated train runs");
    {
        std::ifstream log(dir / "log0.csv");
        std::string line;
        std::getline(log, line);  // header
        while (std::getline(log, line)) {
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            CLI_CHECK(line.substr(c1 + 1, c2 - c1 - 1) == "0", "l_clus column is zero");
        }
    }

    // train: missing dataset dir is an input error
    CLI_CHECK(run("train --rubbing " + d + "missing --font " + d + "f1 --out " + d +
                  "x.bin --iterations 1").exit_code == 1,
              "missing dataset exits 1");

    // eval: metrics JSON on stdout with the seven fields
    const RunResult ev = run("eval --ckpt " + d + "ck.bin --data " + d + "r1");
    CLI_CHECK(ev.exit_code == 0, "eval runs");
    {
        json m;
        bool ok = true;
        try {
            m = json::parse(ev.out);
        } catch (...) {
            ok = false;
        }
        CLI_CHECK(ok, "eval emits JSON");
        for (const char* key : {"ap", "ap50", "ap75", "ar50", "precision50", "recall50", "f1_50"})
            CLI_CHECK(ok && m.contains(key), std::string("metrics key ") + key);
        if (ok) {
            CLI_CHECK(m["ap50"].get<double>() >= 0.0 && m["ap50"].get<double>() <= 1.0,
                      "ap50 within [0,1]");
            CLI_CHECK(m["ap_by_iou"].size() == 10, "per-iou breakdown present");
        }
    }

    // eval: corrupt checkpoint is an input error (exit 1)
    {
        std::ofstream bad(dir / "bad.bin", std::ios::binary);
        bad << "XXXXXXXXXXXXXXXXXXXXXXX";
    }
    CLI_CHECK(run("eval --ckpt " + d + "bad.bin --data " + d + "r1").exit_code == 1,
              "corrupt checkpoint exits 1");

    // embed: row count = samples + positives + negatives, deterministic bytes
    const RunResult em = run("embed --ckpt " + d + "ck.bin --rubbing " + d + "r1 --font " + d +
                             "f1 --out " + d + "emb.csv --features-out " + d + "feats.csv");
    CLI_CHECK(em.exit_code == 0, "embed runs");
    {
        json s = json::parse(em.out);
        std::ifstream emb(dir / "emb.csv");
        std::string line;
        std::getline(emb, line);
        CLI_CHECK(line == "role,x,y", "embedding header");
        std::size_t rows = 0;
        while (std::getline(emb, line)) ++rows;
        CLI_CHECK(rows == s["points"].get<std::size_t>(), "embedding row count matches");
        std::ifstream feats(dir / "feats.csv");
        std::size_t frows = 0;
        while (std::getline(feats, line)) ++frows;
        CLI_CHECK(frows == rows, "feature dump row count matches embedding");
    }
    const std::string emb1 = read_file(dir / "emb.csv");
    CLI_CHECK(run("embed --ckpt " + d + "ck.bin --rubbing " + d + "r1 --font " + d + "f1 --out " +
                  d + "emb.csv").exit_code == 0,
              "embed rerun");
    CLI_CHECK(read_file(dir / "emb.csv") == emb1, "embedding byte-identical across reruns");

    // cluster: kmeans on the dumped features, then the dbscan ablation flags
    const RunResult clk = run("cluster --features " + d + "feats.csv --method kmeans --k 4 --seed 2 "
                              "--restarts 3 --out " + d + "creport.json");
    CLI_CHECK(clk.exit_code == 0, "cluster kmeans runs");
    {
        const json rep = json::parse(read_file(dir / "creport.json"));
        CLI_CHECK(rep["method"] == "kmeans", "cluster method recorded");
        CLI_CHECK(rep["clusters"] == 4, "cluster count");
        double total = 0;
        for (const auto& s : rep["cluster_sizes"]) total += s.get<int>();
        CLI_CHECK(total == rep["n_points"].get<double>(), "cluster sizes partition the points");
    }
    CLI_CHECK(run("cluster --features " + d + "feats.csv --method dbscan --eps 12 --min-samples 5 "
                  "--out " + d + "dreport.json").exit_code == 0,
              "cluster dbscan with the ablation settings runs");

    fs::remove_all(dir);
    if (g_failures == 0) {
        std::cout << "cli integration: all checks passed\n";
        return 0;
    }
    std::cerr << g_failures << " cli checks failed\n";
    return 1;
}
