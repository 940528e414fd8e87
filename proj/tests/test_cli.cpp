#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "piro/checkpoint.hpp"
#include "piro/dataset.hpp"
#include "piro/evaluation.hpp"
#include "piro/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using piro::Dataset;

namespace {

std::string binary_path() {
    const char* env = std::getenv("PIRO_BIN");
    REQUIRE_MESSAGE(env != nullptr, "PIRO_BIN must point at the piro binary");
    return env;
}

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "piro_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args) {
    fs::path out = work_dir() / "stdout.txt";
    fs::path err = work_dir() / "stderr.txt";
    std::string cmd = binary_path() + " " + args + " > " + out.string() + " 2> " + err.string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

const std::string kGenArgs =
    "--categories 3 --objects 3 --views 3 --dim 6 --noise 0.01 --seed 11";

fs::path dataset_dir() {
    static fs::path dir = [] {
        fs::path d = work_dir() / "data";
        RunResult r = run("gen-data " + kGenArgs + " --out " + d.string());
        REQUIRE_MESSAGE(r.exit_code == 0, r.err);
        return d;
    }();
    return dir;
}

fs::path train_dir() {
    static fs::path dir = [] {
        fs::path d = work_dir() / "run";
        RunResult r = run("train --data " + (dataset_dir() / "manifest.tsv").string() +
                          " --out " + d.string() +
                          " --epochs 5 --pairs-per-epoch 4 --pairs-per-step 2 --views 2"
                          " --lr 1e-3 --obj-dim 4 --cat-dim 4 --backbone-widths 8 --seed 3");
        REQUIRE_MESSAGE(r.exit_code == 0, r.err);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("gen-data writes a loadable manifest with the requested counts") {
    Dataset d = piro::load_manifest(dataset_dir() / "manifest.tsv");
    CHECK(d.objects.size() == 9);
    CHECK(d.category_names.size() == 3);
    CHECK(d.input_dim() == 6);
    std::size_t views = 0;
    for (const auto& o : d.objects) views += o.views.size();
    CHECK(views == 27);
    CHECK(fs::exists(dataset_dir() / "categories.json"));
    CHECK(fs::exists(dataset_dir() / "config.txt"));
}

TEST_CASE("gen-data is byte-deterministic for a fixed seed") {
    fs::path a = work_dir() / "data_a";
    fs::path b = work_dir() / "data_b";
    REQUIRE(run("gen-data " + kGenArgs + " --out " + a.string()).exit_code == 0);
    REQUIRE(run("gen-data " + kGenArgs + " --out " + b.string()).exit_code == 0);
    CHECK(slurp(a / "manifest.tsv") == slurp(b / "manifest.tsv"));
    CHECK(slurp(a / "categories.json") == slurp(b / "categories.json"));
    CHECK(piro::read_vec_file(a / "views" / "obj_0_0_0.vec") ==
          piro::read_vec_file(b / "views" / "obj_0_0_0.vec"));
}

TEST_CASE("gen-data rejects a single category with exit code 2") {
    RunResult r = run("gen-data --categories 1 --out " + (work_dir() / "bad").string());
    CHECK(r.exit_code == 2);
    CHECK(!r.err.empty());
}

TEST_CASE("train writes logs, checkpoints, and the margins header") {
    fs::path dir = train_dir();
    CHECK(fs::exists(dir / "checkpoint.json"));
    CHECK(fs::exists(dir / "checkpoint_epoch_5.json"));
    CHECK(fs::exists(dir / "config.txt"));

    std::ifstream log(dir / "train_log.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        json j = json::parse(line);
        if (lines == 0) {
            CHECK(j["margins"]["alpha"] == 0.25);
            CHECK(j["margins"]["gamma"] == 4);
        } else {
            CHECK(j["epoch"] == lines);
            CHECK(j.contains("mean_total"));
            CHECK(j.contains("d_max_intra"));
            CHECK(j.contains("rho"));
        }
        ++lines;
    }
    CHECK(lines == 6);  // header + 5 epochs

    // Rerunning the same training command prints the margins header.
    RunResult r = run("train --data " + (dataset_dir() / "manifest.tsv").string() + " --out " +
                      (work_dir() / "run_header").string() +
                      " --epochs 1 --pairs-per-epoch 2 --pairs-per-step 2 --views 2"
                      " --lr 1e-3 --obj-dim 4 --cat-dim 4 --backbone-widths 8");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("margins: alpha=0.25 beta=1.00 theta=0.25 gamma=4.00") !=
          std::string::npos);
}

TEST_CASE("train with a missing manifest exits with code 2") {
    RunResult r = run("train --data " + (work_dir() / "nope.tsv").string() + " --out " +
                      (work_dir() / "run_missing").string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("diverging training exits with code 3") {
    RunResult r = run("train --data " + (dataset_dir() / "manifest.tsv").string() + " --out " +
                      (work_dir() / "run_diverge").string() +
                      " --epochs 2 --pairs-per-epoch 4 --pairs-per-step 2 --views 2"
                      " --lr 1e200 --obj-dim 4 --cat-dim 4 --backbone-widths 8");
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("eval emits the full report and honors task filters") {
    fs::path report_path = work_dir() / "report.json";
    RunResult r = run("eval --data " + (dataset_dir() / "manifest.tsv").string() +
                      " --checkpoint " + (train_dir() / "checkpoint.json").string() + " --out " +
                      report_path.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    json report = json::parse(slurp(report_path));
    for (const char* key :
         {"sv_cat_cls", "mv_cat_cls", "sv_obj_rec", "mv_obj_rec", "sv_cat_retr", "mv_cat_retr",
          "sv_obj_retr", "mv_obj_retr", "avg_classification", "avg_retrieval", "avg_category",
          "avg_object", "d_max_intra", "d_min_inter", "rho"}) {
        CHECK_MESSAGE(report.contains(key), key);
    }

    // Library recomputation agrees with the CLI report.
    Dataset data = piro::load_manifest(dataset_dir() / "manifest.tsv");
    piro::Checkpoint checkpoint = piro::load_checkpoint(train_dir() / "checkpoint.json");
    piro::EvalReport expected = piro::evaluate_all(checkpoint.encoder, checkpoint.classifier,
                                                   data, piro::Split::kTest);
    CHECK(report["sv_obj_retr"].get<double>() == expected.sv_obj_retr);
    CHECK(report["sv_cat_cls"].get<double>() == expected.sv_cat_cls);
    CHECK(report["d_max_intra"].get<double>() == expected.distances.d_max_intra);

    fs::path filtered_path = work_dir() / "filtered.json";
    RunResult f = run("eval --data " + (dataset_dir() / "manifest.tsv").string() +
                      " --checkpoint " + (train_dir() / "checkpoint.json").string() + " --out " +
                      filtered_path.string() + " --tasks sv-obj-retr,mv_cat_retr");
    REQUIRE(f.exit_code == 0);
    json filtered = json::parse(slurp(filtered_path));
    CHECK(filtered.size() == 2);
    CHECK(filtered.contains("sv_obj_retr"));
    CHECK(filtered.contains("mv_cat_retr"));

    RunResult unknown = run("eval --data " + (dataset_dir() / "manifest.tsv").string() +
                            " --checkpoint " + (train_dir() / "checkpoint.json").string() +
                            " --out " + (work_dir() / "unknown.json").string() +
                            " --tasks not_a_task");
    CHECK(unknown.exit_code == 2);
}

TEST_CASE("eval writes per-query records covering all retrieval queries") {
    fs::path csv_path = work_dir() / "per_query.csv";
    RunResult r = run("eval --data " + (dataset_dir() / "manifest.tsv").string() +
                      " --checkpoint " + (train_dir() / "checkpoint.json").string() + " --out " +
                      (work_dir() / "report_pq.json").string() + " --per-query-csv " +
                      csv_path.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream csv(csv_path);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "task,query_id,average_precision");
    std::size_t rows = 0;
    while (std::getline(csv, line)) ++rows;
    // 3 test objects with 3 views each: 2 tasks * 9 views + 2 tasks * 3 objects.
    CHECK(rows == 24);
}

TEST_CASE("export-embeddings dumps one row per view plus one per object") {
    fs::path dir = work_dir() / "export";
    RunResult r = run("export-embeddings --data " + (dataset_dir() / "manifest.tsv").string() +
                      " --checkpoint " + (train_dir() / "checkpoint.json").string() + " --out " +
                      dir.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);

    std::ifstream csv(dir / "embeddings.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "object_id,category_id,view_index,object_embedding,category_embedding");
    std::size_t rows = 0, multiview_rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        if (line.find(",-1,") != std::string::npos) ++multiview_rows;
    }
    CHECK(rows == 12);  // 3 test objects * (3 views + 1 multi-view row)
    CHECK(multiview_rows == 3);

    json attention = json::parse(slurp(dir / "attention.json"));
    CHECK(attention.size() == 3);
    for (const auto& [object_id, entry] : attention.items()) {
        CHECK(entry.contains("object_space"));
        CHECK(entry.contains("category_space"));
        CHECK(entry["object_space"].size() == 3);
        double row_sum = 0.0;
        for (const auto& v : entry["object_space"][0]) row_sum += v.get<double>();
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("config files feed flags through --config") {
    fs::path config_path = work_dir() / "gen.conf";
    {
        std::ofstream conf(config_path);
        conf << "[gen-data]\ncategories = 2\nobjects = 2\nviews = 2\ndim = 4\nseed = 9\n";
    }
    fs::path out = work_dir() / "data_conf";
    RunResult r = run("--config " + config_path.string() + " gen-data --out " + out.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    Dataset d = piro::load_manifest(out / "manifest.tsv");
    CHECK(d.objects.size() == 4);
    CHECK(d.input_dim() == 4);
}

TEST_CASE("help exits cleanly") {
    CHECK(run("--help").exit_code == 0);
    CHECK(run("train --help").exit_code == 0);
    CHECK(run("definitely-not-a-command").exit_code == 2);
}
