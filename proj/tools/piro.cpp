// Command-line surface for synthetic data generation, training, evaluation,
// and embedding export. Exit codes: 0 success, 2 config/validation error,
// 3 runtime numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "piro/checkpoint.hpp"
#include "piro/dataset.hpp"
#include "piro/encoder.hpp"
#include "piro/evaluation.hpp"
#include "piro/io.hpp"
#include "piro/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

void echo_config(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream out;
    for (const auto& [key, value] : kv) {
        out << key << " = " << value << "\n";
    }
    piro::atomic_write(dir / "config.txt", out.str());
}

struct GenDataOptions {
    piro::SyntheticConfig synth;
    std::string out_dir;
};

int cmd_gen_data(const GenDataOptions& options) {
    if (options.synth.num_categories < 2) {
        std::cerr << "error: pair sampling requires >= 2 objects per category and at "
                     "least 2 categories are recommended; got --categories "
                  << options.synth.num_categories << "\n";
        return kExitConfig;
    }
    piro::Dataset dataset = piro::generate_synthetic(options.synth);
    fs::path dir(options.out_dir);
    piro::save_manifest(dataset, dir);
    echo_config(dir, {{"categories", std::to_string(options.synth.num_categories)},
                      {"objects", std::to_string(options.synth.objects_per_category)},
                      {"views", std::to_string(options.synth.views_per_object)},
                      {"dim", std::to_string(options.synth.input_dim)},
                      {"noise", format_double(options.synth.noise_sigma)},
                      {"seed", std::to_string(options.synth.seed)},
                      {"train_fraction", format_double(options.synth.train_fraction)}});
    std::cout << "wrote " << dataset.objects.size() << " objects ("
              << dataset.count(piro::Split::kTrain) << " train, "
              << dataset.count(piro::Split::kTest) << " test) to " << dir.string() << "\n";
    return kExitOk;
}

struct TrainOptions {
    std::string data;
    std::string out_dir;
    piro::TrainConfig config;
};

json log_entry_to_json(const piro::TrainLogEntry& e) {
    json j;
    j["epoch"] = e.epoch;
    j["mean_total"] = e.mean_total;
    j["mean_cat"] = e.mean_cat;
    j["mean_picat"] = e.mean_picat;
    j["mean_piobj_intra"] = e.mean_piobj_intra;
    j["mean_piobj_inter"] = e.mean_piobj_inter;
    j["learning_rate"] = e.learning_rate;
    j["d_max_intra"] = e.d_max_intra;
    j["d_min_inter"] = e.d_min_inter;
    if (e.rho.has_value()) {
        j["rho"] = *e.rho;
    } else {
        j["rho"] = nullptr;
    }
    return j;
}

int cmd_train(const TrainOptions& options) {
    piro::Dataset dataset = piro::load_manifest(options.data);
    piro::TrainConfig config = options.config;
    config.encoder.input_dim = dataset.input_dim();

    fs::path dir(options.out_dir);
    fs::create_directories(dir);
    const piro::Margins& m = config.margins;
    char header[160];
    std::snprintf(header, sizeof(header),
                  "margins: alpha=%.2f beta=%.2f theta=%.2f gamma=%.2f", m.alpha, m.beta,
                  m.theta, static_cast<double>(m.gamma));
    std::cout << header << "\n";

    std::ostringstream log_stream;
    json header_json;
    header_json["margins"] = {{"alpha", m.alpha},
                              {"beta", m.beta},
                              {"theta", m.theta},
                              {"gamma", m.gamma}};
    header_json["learning_rate"] = config.learning_rate;
    header_json["epochs"] = config.epochs;
    header_json["dual_space"] = config.encoder.dual_space;
    log_stream << header_json.dump() << "\n";

    piro::TrainResult result =
        piro::train(config, dataset,
                    [&](const piro::TrainResult& state, const piro::TrainLogEntry& entry) {
                        log_stream << log_entry_to_json(entry).dump() << "\n";
                        if (entry.epoch % 5 == 0) {
                            piro::save_checkpoint(
                                {state.encoder, state.classifier, state.optimizer},
                                dir / ("checkpoint_epoch_" + std::to_string(entry.epoch) +
                                       ".json"));
                        }
                        std::cout << "epoch " << entry.epoch << " loss " << entry.mean_total
                                  << " lr " << entry.learning_rate << "\n";
                    });
    piro::save_checkpoint({result.encoder, result.classifier, result.optimizer},
                          dir / "checkpoint.json");
    piro::atomic_write(dir / "train_log.jsonl", log_stream.str());
    echo_config(dir,
                {{"data", options.data},
                 {"epochs", std::to_string(config.epochs)},
                 {"pairs_per_epoch", std::to_string(config.pairs_per_epoch)},
                 {"pairs_per_step", std::to_string(config.pairs_per_step)},
                 {"views_per_sample", std::to_string(config.views_per_sample)},
                 {"learning_rate", format_double(config.learning_rate)},
                 {"lr_halving_period_epochs", std::to_string(config.lr_halving_period_epochs)},
                 {"alpha", format_double(m.alpha)},
                 {"beta", format_double(m.beta)},
                 {"theta", format_double(m.theta)},
                 {"gamma", std::to_string(m.gamma)},
                 {"lambda_start", format_double(config.lambda_start)},
                 {"lambda_decay", format_double(config.lambda_decay)},
                 {"use_cat", m.use_cat ? "true" : "false"},
                 {"use_picat", m.use_picat ? "true" : "false"},
                 {"use_piobj", m.use_piobj ? "true" : "false"},
                 {"use_separation", m.use_separation ? "true" : "false"},
                 {"dual_space", config.encoder.dual_space ? "true" : "false"},
                 {"obj_dim", std::to_string(config.encoder.obj_dim)},
                 {"cat_dim", std::to_string(config.encoder.cat_dim)},
                 {"dropout_rate", format_double(config.encoder.dropout_rate)},
                 {"seed", std::to_string(config.seed)}});
    std::cout << "checkpoint written to " << (dir / "checkpoint.json").string() << "\n";
    return kExitOk;
}

struct EvalOptions {
    std::string data;
    std::string checkpoint;
    std::string out;
    std::string per_query_csv;
    std::string tasks;  // comma-separated filter, empty = all
    std::string split = "test";
};

int cmd_eval(const EvalOptions& options) {
    piro::Dataset dataset = piro::load_manifest(options.data);
    piro::Checkpoint checkpoint = piro::load_checkpoint(options.checkpoint);
    piro::Split split = options.split == "train" ? piro::Split::kTrain : piro::Split::kTest;

    std::vector<piro::PerQueryRecord> per_query;
    piro::EvalReport report =
        piro::evaluate_all(checkpoint.encoder, checkpoint.classifier, dataset, split,
                           options.per_query_csv.empty() ? nullptr : &per_query);
    json j = report.to_json();
    if (!options.tasks.empty()) {
        json filtered;
        std::stringstream ss(options.tasks);
        std::string task;
        while (std::getline(ss, task, ',')) {
            // accept both sv_obj_retr and sv-obj-retr spellings
            std::replace(task.begin(), task.end(), '-', '_');
            if (!j.contains(task)) {
                std::cerr << "error: unknown task '" << task << "'\n";
                return kExitConfig;
            }
            filtered[task] = j[task];
        }
        j = filtered;
    }
    piro::atomic_write(options.out, j.dump(2) + "\n");
    if (!options.per_query_csv.empty()) {
        std::ostringstream csv;
        csv << "task,query_id,average_precision\n";
        csv.precision(17);
        for (const auto& record : per_query) {
            csv << record.task << ',' << record.query_id << ',' << record.average_precision
                << "\n";
        }
        piro::atomic_write(options.per_query_csv, csv.str());
    }
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

struct ExportOptions {
    std::string data;
    std::string checkpoint;
    std::string out_dir;
    std::string split = "test";
};

int cmd_export_embeddings(const ExportOptions& options) {
    piro::Dataset dataset = piro::load_manifest(options.data);
    piro::Checkpoint checkpoint = piro::load_checkpoint(options.checkpoint);
    piro::Split split = options.split == "train" ? piro::Split::kTrain : piro::Split::kTest;

    piro::EmbeddingTable table =
        piro::compute_embeddings(checkpoint.encoder, dataset, split);
    fs::path dir(options.out_dir);
    fs::create_directories(dir);

    std::ostringstream csv;
    csv.precision(17);
    csv << "object_id,category_id,view_index,object_embedding,category_embedding\n";
    auto emit = [&](const std::string& object_id, int category, int view,
                    const std::vector<double>& obj, const std::vector<double>& cat) {
        csv << object_id << ',' << category << ',' << view << ',';
        for (std::size_t i = 0; i < obj.size(); ++i) csv << (i ? ";" : "") << obj[i];
        csv << ',';
        for (std::size_t i = 0; i < cat.size(); ++i) csv << (i ? ";" : "") << cat[i];
        csv << "\n";
    };
    for (const piro::ObjectEmbeddingSet& object : table) {
        for (std::size_t k = 0; k < object.obj_single.size(); ++k) {
            emit(object.object_id, object.category_id, static_cast<int>(k),
                 object.obj_single[k], object.cat_single[k]);
        }
        emit(object.object_id, object.category_id, -1, object.obj_mv, object.cat_mv);
    }
    piro::atomic_write(dir / "embeddings.csv", csv.str());

    json attention = json::object();
    for (const piro::ObjectRecord& object : dataset.objects) {
        if (object.split != split) continue;
        auto [obj_attn, cat_attn] = piro::attention_weights(checkpoint.encoder, object.views);
        auto matrix_to_json = [](const piro::Tensor& m) {
            json rows = json::array();
            for (std::size_t i = 0; i < m.rows(); ++i) {
                json row = json::array();
                for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
                rows.push_back(std::move(row));
            }
            return rows;
        };
        attention[object.object_id] = {{"object_space", matrix_to_json(obj_attn)},
                                       {"category_space", matrix_to_json(cat_attn)}};
    }
    piro::atomic_write(dir / "attention.json", attention.dump(2) + "\n");

    std::cout << "exported " << table.size() << " objects to " << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Pose-invariant dual-embedding engine: synthetic data generation, training, "
        "evaluation, and embedding export.\n"
        "The PIRO_THREADS environment variable caps worker threads."};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key = value config file; flags override file values");
    app.allow_config_extras(false);

    GenDataOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic multi-view dataset");
    gen_cmd->add_option("--categories", gen.synth.num_categories, "Number of categories");
    gen_cmd->add_option("--objects", gen.synth.objects_per_category, "Objects per category");
    gen_cmd->add_option("--views", gen.synth.views_per_object, "Views per object");
    gen_cmd->add_option("--dim", gen.synth.input_dim, "Feature vector dimension");
    gen_cmd->add_option("--noise", gen.synth.noise_sigma, "Gaussian view noise sigma");
    gen_cmd->add_option("--seed", gen.synth.seed, "RNG seed");
    gen_cmd->add_option("--train-fraction", gen.synth.train_fraction,
                        "Fraction of objects per category in the train split");
    gen_cmd->add_option("--out", gen.out_dir, "Output dataset directory")->required();

    TrainOptions tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Train encoder and classifier");
    train_cmd->add_option("--data", tr.data, "Path to manifest.tsv")->required();
    train_cmd->add_option("--out", tr.out_dir, "Output directory")->required();
    train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs");
    train_cmd->add_option("--pairs-per-epoch", tr.config.pairs_per_epoch, "Pairs per epoch");
    train_cmd->add_option("--pairs-per-step", tr.config.pairs_per_step,
                          "Pairs accumulated per optimizer step");
    train_cmd->add_option("--views", tr.config.views_per_sample, "Views sampled per object (V)");
    train_cmd->add_option("--lr", tr.config.learning_rate, "Adam learning rate");
    train_cmd->add_option("--lr-halving-period", tr.config.lr_halving_period_epochs,
                          "Halve the learning rate every this many epochs");
    train_cmd->add_option("--alpha", tr.config.margins.alpha, "Intra-object margin");
    train_cmd->add_option("--beta", tr.config.margins.beta, "Inter-object margin");
    train_cmd->add_option("--theta", tr.config.margins.theta, "Category clustering margin");
    train_cmd->add_option("--gamma", tr.config.margins.gamma, "Integer angular softmax margin");
    train_cmd->add_option("--lambda-start", tr.config.lambda_start,
                          "Initial softmax-margin annealing coefficient");
    train_cmd->add_option("--lambda-decay", tr.config.lambda_decay,
                          "Per-step annealing decay factor");
    train_cmd->add_option("--obj-dim", tr.config.encoder.obj_dim, "Object embedding dimension");
    train_cmd->add_option("--cat-dim", tr.config.encoder.cat_dim, "Category embedding dimension");
    train_cmd->add_option("--backbone-widths", tr.config.encoder.backbone_widths,
                          "Backbone layer widths");
    train_cmd->add_option("--dropout", tr.config.encoder.dropout_rate,
                          "Attention-weight dropout rate in train mode");
    train_cmd->add_option("--seed", tr.config.seed, "RNG seed");
    train_cmd->add_flag_callback(
        "--single-space", [&] { tr.config.encoder.dual_space = false; },
        "Share one head and attention layer across both loss families");
    train_cmd->add_flag_callback(
        "--no-picat", [&] { tr.config.margins.use_picat = false; },
        "Disable the pose-invariant category loss");
    train_cmd->add_flag_callback(
        "--no-piobj", [&] { tr.config.margins.use_piobj = false; },
        "Disable the pose-invariant object loss");
    train_cmd->add_flag_callback(
        "--no-cat", [&] { tr.config.margins.use_cat = false; },
        "Disable the margin softmax category loss");
    train_cmd->add_flag_callback(
        "--no-separation", [&] { tr.config.margins.use_separation = false; },
        "Keep only the clustering term of the object loss");

    EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate the eight recognition/retrieval tasks");
    eval_cmd->add_option("--data", ev.data, "Path to manifest.tsv")->required();
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--out", ev.out, "Report JSON output path")->required();
    eval_cmd->add_option("--per-query-csv", ev.per_query_csv, "Optional per-query AP CSV");
    eval_cmd->add_option("--tasks", ev.tasks, "Comma-separated task filter (e.g. sv-obj-retr)");
    eval_cmd->add_option("--split", ev.split, "Dataset split: test (default) or train");

    ExportOptions ex;
    CLI::App* export_cmd =
        app.add_subcommand("export-embeddings", "Dump embeddings and attention weights");
    export_cmd->add_option("--data", ex.data, "Path to manifest.tsv")->required();
    export_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
    export_cmd->add_option("--out", ex.out_dir, "Output directory")->required();
    export_cmd->add_option("--split", ex.split, "Dataset split: test (default) or train");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) return cmd_train(tr);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        if (export_cmd->parsed()) return cmd_export_embeddings(ex);
    } catch (const piro::NanLossError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
