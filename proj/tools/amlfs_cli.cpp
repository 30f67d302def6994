// amlfs: loss-function search on small classifiers.
//
// Subcommands:
//   baseline      train with a fixed reference loss
//   search        population search over piecewise-linear loss transforms
//   eval          score a checkpoint on a dataset split
//   export-grads  dump per-sample target-gradient norms for plotting
//
// stdout carries one machine-readable JSON line per run; progress and
// diagnostics go to stderr. Exit codes: 0 ok, 1 runtime failure, 2 usage.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "amlfs/checkpoint.hpp"
#include "amlfs/data.hpp"
#include "amlfs/errors.hpp"
#include "amlfs/losses.hpp"
#include "amlfs/nnet.hpp"
#include "amlfs/piecewise.hpp"
#include "amlfs/search.hpp"

#ifndef AMLFS_VERSION
#define AMLFS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace amlfs;

namespace {

// Sub-streams hung off the user seed so data, noise, and training never
// share draws. eval/export-grads rebuild datasets with the same derivation.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct DataOpts {
    std::string kind = "blobs";
    int classes = 10;
    int per_class = 200;
    int dim = 16;
    double spread = 0.3;
    std::string csv_path;
    std::string label_column = "label";
    std::string idx_images;
    std::string idx_labels;
    double val_fraction = 0.2;
    double noise_ratio = 0.0;
};

struct ModelOpts {
    std::vector<int> hidden = {32};
    int feature_dim = 16;
    std::string head = "cosine";
};

struct TrainOpts {
    double lr = 0.1;
    double momentum = 0.9;
    int batch_size = 32;
    double scale = 10.0;
    int epochs = 20;
};

struct SearchOpts {
    int population = 32; // B
    int intervals = 6;   // M
    double sigma = 0.2;
    double eta = 0.05;
    int epochs = 10; // T
    int workers = 1;
    std::string outer_opt = "adam";
};

void add_data_flags(CLI::App* cmd, DataOpts& d) {
    cmd->add_option("--data", d.kind, "dataset source")
        ->check(CLI::IsMember({"blobs", "csv", "idx"}))
        ->capture_default_str();
    cmd->add_option("--classes", d.classes, "blobs: number of classes")
        ->check(CLI::Range(2, 1000000))
        ->capture_default_str();
    cmd->add_option("--per-class", d.per_class, "blobs: samples per class")
        ->check(CLI::Range(4, 1000000))
        ->capture_default_str();
    cmd->add_option("--dim", d.dim, "blobs: feature dimension")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    cmd->add_option("--spread", d.spread, "blobs: gaussian spread around centers")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--csv-path", d.csv_path, "csv: input file");
    cmd->add_option("--label-column", d.label_column, "csv: label column name")
        ->capture_default_str();
    cmd->add_option("--idx-images", d.idx_images, "idx: image file");
    cmd->add_option("--idx-labels", d.idx_labels, "idx: label file");
    cmd->add_option("--val-fraction", d.val_fraction, "csv/idx: validation fraction")
        ->check(CLI::Range(1e-9, 1.0 - 1e-9))
        ->capture_default_str();
    cmd->add_option("--noise-ratio", d.noise_ratio, "train-label flip probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
}

void add_model_flags(CLI::App* cmd, ModelOpts& m, bool with_head) {
    cmd->add_option("--hidden", m.hidden, "hidden layer widths")
        ->capture_default_str();
    cmd->add_option("--feature-dim", m.feature_dim, "pre-head feature width")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    if (with_head) {
        cmd->add_option("--head", m.head, "output head")
            ->check(CLI::IsMember({"cosine", "linear"}))
            ->capture_default_str();
    }
}

void add_train_flags(CLI::App* cmd, TrainOpts& t) {
    cmd->add_option("--lr", t.lr, "inner SGD learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--momentum", t.momentum, "inner SGD momentum")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    cmd->add_option("--batch-size", t.batch_size, "minibatch size")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    cmd->add_option("--scale", t.scale, "cosine-head scale s")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

DatasetSplit build_dataset(const DataOpts& d, std::uint64_t seed) {
    DatasetSplit split;
    if (d.kind == "blobs") {
        split = make_blobs(d.classes, d.per_class, d.dim, d.spread,
                           derive_stream(seed, 0, kDataStream));
    } else if (d.kind == "csv") {
        if (d.csv_path.empty()) throw FormatError("--csv-path is required with --data csv");
        split = load_csv(d.csv_path, d.label_column, d.val_fraction,
                         derive_stream(seed, 0, kDataStream));
    } else {
        if (d.idx_images.empty() || d.idx_labels.empty()) {
            throw FormatError("--idx-images and --idx-labels are required with --data idx");
        }
        split = load_idx(d.idx_images, d.idx_labels, d.val_fraction,
                         derive_stream(seed, 0, kDataStream));
    }
    if (d.noise_ratio > 0.0) {
        split = corrupt_labels(split, d.noise_ratio, derive_stream(seed, 0, kNoiseStream));
    }
    return split;
}

LossFn make_reference_loss(const std::string& name, double margin, double alpha,
                           double scale) {
    if (name == "softmax") {
        return [](const LogitsBatch& b) { return softmax_loss(b); };
    }
    if (name == "focal") {
        FocalParams fp{alpha};
        return [fp](const LogitsBatch& b) { return focal_loss(b, fp); };
    }
    MarginTransform mt;
    mt.m = margin;
    if (name == "arcface") mt.kind = MarginKind::ArcFace;
    else if (name == "lsoftmax") mt.kind = MarginKind::LSoftmax;
    else if (name == "asoftmax") mt.kind = MarginKind::ASoftmax;
    else throw FormatError("unknown loss '" + name + "'");
    Transform t = margin_transform(mt);
    return [t, scale](const LogitsBatch& b) { return margin_loss(b, t, scale); };
}

json data_json(const DataOpts& d, const std::string& provenance) {
    json j;
    j["kind"] = d.kind;
    j["classes"] = d.classes;
    j["per_class"] = d.per_class;
    j["dim"] = d.dim;
    j["spread"] = d.spread;
    j["csv_path"] = d.csv_path;
    j["label_column"] = d.label_column;
    j["idx_images"] = d.idx_images;
    j["idx_labels"] = d.idx_labels;
    j["val_fraction"] = d.val_fraction;
    j["noise_ratio"] = d.noise_ratio;
    j["provenance"] = provenance;
    return j;
}

void data_from_json(const json& j, DataOpts& d) {
    d.kind = j.at("kind");
    d.classes = j.at("classes");
    d.per_class = j.at("per_class");
    d.dim = j.at("dim");
    d.spread = j.at("spread");
    d.csv_path = j.at("csv_path");
    d.label_column = j.at("label_column");
    d.idx_images = j.at("idx_images");
    d.idx_labels = j.at("idx_labels");
    d.val_fraction = j.at("val_fraction");
    d.noise_ratio = j.at("noise_ratio");
}

void write_manifest(const fs::path& path, const json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write manifest '" + path.string() + "'");
    os << j.dump(2) << '\n';
}

json load_manifest(const std::string& path, const std::string& expect_command) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open manifest '" + path + "'");
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError("manifest '" + path + "': " + e.what());
    }
    if (j.value("command", "") != expect_command) {
        throw ConsistencyError("manifest '" + path + "' is for command '" +
                               j.value("command", "?") + "', not '" + expect_command + "'");
    }
    return j;
}

ModelConfig resolve_model(const ModelOpts& m, const DatasetSplit& data, bool& forced,
                          bool needs_cosine) {
    ModelConfig cfg;
    cfg.input_dim = data.train_x.cols;
    cfg.hidden_dims = m.hidden;
    cfg.feature_dim = m.feature_dim;
    cfg.num_classes = data.num_classes;
    forced = false;
    if (m.head == "linear") {
        if (needs_cosine) {
            forced = true; // margin transforms need cosine-range activations
            cfg.head = HeadKind::Cosine;
        } else {
            cfg.head = HeadKind::Linear;
        }
    } else {
        cfg.head = HeadKind::Cosine;
    }
    return cfg;
}

int cmd_baseline(const DataOpts& data_in, const ModelOpts& model_in,
                 const TrainOpts& train_in, const std::string& loss_name_in,
                 double margin_in, double alpha_in, std::uint64_t seed_in,
                 const std::string& out_dir, const std::string& from_manifest) {
    DataOpts d = data_in;
    ModelOpts m = model_in;
    TrainOpts t = train_in;
    std::string loss_name = loss_name_in;
    double margin = margin_in, alpha = alpha_in;
    std::uint64_t seed = seed_in;

    if (!from_manifest.empty()) {
        json j = load_manifest(from_manifest, "baseline");
        data_from_json(j.at("dataset"), d);
        m.hidden = j.at("model").at("hidden").get<std::vector<int>>();
        m.feature_dim = j.at("model").at("feature_dim");
        m.head = j.at("model").at("head_requested");
        t.lr = j.at("train").at("lr");
        t.momentum = j.at("train").at("momentum");
        t.batch_size = j.at("train").at("batch_size");
        t.scale = j.at("train").at("scale");
        t.epochs = j.at("train").at("epochs");
        loss_name = j.at("loss").at("name");
        margin = j.at("loss").at("margin");
        alpha = j.at("loss").at("alpha");
        seed = j.at("seed");
    }

    fs::create_directories(out_dir);
    DatasetSplit data = build_dataset(d, seed);
    bool forced = false;
    const bool needs_cosine =
        loss_name == "arcface" || loss_name == "lsoftmax" || loss_name == "asoftmax";
    ModelConfig model_cfg = resolve_model(m, data, forced, needs_cosine);
    if (forced) {
        std::cerr << "note: --loss " << loss_name
                  << " requires the cosine head; forcing --head cosine\n";
    }

    TrainConfig inner;
    inner.learning_rate = t.lr;
    inner.momentum = t.momentum;
    inner.batch_size = t.batch_size;
    inner.scale_s = t.scale;
    inner.epochs = t.epochs;
    inner.seed = seed;

    json manifest;
    manifest["tool"] = "amlfs";
    manifest["version"] = AMLFS_VERSION;
    manifest["command"] = "baseline";
    manifest["started_at"] = now_iso8601();
    manifest["finished_at"] = nullptr;
    manifest["seed"] = seed;
    manifest["dataset"] = data_json(d, data.provenance);
    manifest["model"] = {{"hidden", m.hidden},
                         {"feature_dim", m.feature_dim},
                         {"head_requested", m.head},
                         {"head", model_cfg.head == HeadKind::Cosine ? "cosine" : "linear"},
                         {"head_forced", forced},
                         {"input_dim", model_cfg.input_dim},
                         {"num_classes", model_cfg.num_classes}};
    manifest["train"] = {{"lr", t.lr},         {"momentum", t.momentum},
                         {"batch_size", t.batch_size}, {"scale", t.scale},
                         {"epochs", t.epochs}};
    manifest["loss"] = {{"name", loss_name}, {"margin", margin}, {"alpha", alpha}};
    manifest["outputs"] = {{"metrics", "metrics.jsonl"}, {"checkpoint", "model.ckpt"}};
    write_manifest(fs::path(out_dir) / "manifest.json", manifest);

    LossFn loss = make_reference_loss(loss_name, margin, alpha, t.scale);
    std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw FormatError("cannot write metrics.jsonl under '" + out_dir + "'");

    BaselineResult res = run_baseline(model_cfg, inner, loss, data);
    for (const BaselineEpoch& e : res.history) {
        json line;
        line["epoch"] = e.epoch;
        line["train_loss"] = e.train_loss;
        line["val_accuracy"] = e.val_accuracy;
        metrics << line.dump() << '\n';
        std::cerr << "epoch " << e.epoch << ": train_loss=" << e.train_loss
                  << " val_acc=" << e.val_accuracy << '\n';
    }
    save_checkpoint(res.model, (fs::path(out_dir) / "model.ckpt").string());

    const double final_acc = res.history.back().val_accuracy;
    manifest["finished_at"] = now_iso8601();
    manifest["results"] = {{"final_val_accuracy", final_acc}};
    write_manifest(fs::path(out_dir) / "manifest.json", manifest);

    json out;
    out["final_val_accuracy"] = final_acc;
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_search(const DataOpts& data_in, const ModelOpts& model_in,
               const TrainOpts& train_in, const SearchOpts& search_in,
               std::uint64_t seed_in, const std::string& out_dir,
               const std::string& from_manifest, int env_workers) {
    DataOpts d = data_in;
    ModelOpts m = model_in;
    TrainOpts t = train_in;
    SearchOpts s = search_in;
    std::uint64_t seed = seed_in;

    if (!from_manifest.empty()) {
        json j = load_manifest(from_manifest, "search");
        data_from_json(j.at("dataset"), d);
        m.hidden = j.at("model").at("hidden").get<std::vector<int>>();
        m.feature_dim = j.at("model").at("feature_dim");
        t.lr = j.at("train").at("lr");
        t.momentum = j.at("train").at("momentum");
        t.batch_size = j.at("train").at("batch_size");
        t.scale = j.at("train").at("scale");
        s.population = j.at("search").at("B");
        s.intervals = j.at("search").at("M");
        s.sigma = j.at("search").at("sigma");
        s.eta = j.at("search").at("eta");
        s.epochs = j.at("search").at("epochs");
        s.workers = j.at("search").at("workers");
        s.outer_opt = j.at("search").at("outer_opt");
        seed = j.at("seed");
    }
    if (env_workers > 0) s.workers = env_workers; // results never depend on it

    fs::create_directories(out_dir);
    DatasetSplit data = build_dataset(d, seed);
    bool forced = false;
    ModelConfig model_cfg = resolve_model(m, data, forced, /*needs_cosine=*/true);
    if (m.head == "linear") {
        std::cerr << "note: search requires the cosine head; forcing cosine\n";
    }

    SearchConfig cfg;
    cfg.population = s.population;
    cfg.num_intervals = s.intervals;
    cfg.epochs = s.epochs;
    cfg.sigma = s.sigma;
    cfg.eta = s.eta;
    cfg.inner.learning_rate = t.lr;
    cfg.inner.momentum = t.momentum;
    cfg.inner.batch_size = t.batch_size;
    cfg.inner.scale_s = t.scale;
    cfg.model = model_cfg;
    cfg.worker_count = s.workers;
    cfg.seed = seed;
    cfg.outer_opt = (s.outer_opt == "sgd") ? OuterOptimizer::Sgd : OuterOptimizer::Adam;

    json manifest;
    manifest["tool"] = "amlfs";
    manifest["version"] = AMLFS_VERSION;
    manifest["command"] = "search";
    manifest["started_at"] = now_iso8601();
    manifest["finished_at"] = nullptr;
    manifest["seed"] = seed;
    manifest["dataset"] = data_json(d, data.provenance);
    manifest["model"] = {{"hidden", m.hidden},
                         {"feature_dim", m.feature_dim},
                         {"head_requested", m.head},
                         {"head", "cosine"},
                         {"head_forced", m.head == "linear"},
                         {"input_dim", model_cfg.input_dim},
                         {"num_classes", model_cfg.num_classes}};
    manifest["train"] = {{"lr", t.lr},
                         {"momentum", t.momentum},
                         {"batch_size", t.batch_size},
                         {"scale", t.scale}};
    manifest["search"] = {{"B", s.population}, {"M", s.intervals},
                          {"sigma", s.sigma},  {"eta", s.eta},
                          {"epochs", s.epochs}, {"workers", s.workers},
                          {"outer_opt", s.outer_opt}};
    manifest["outputs"] = {{"log", "search_log.jsonl"},
                           {"mu_trajectory", "mu_trajectory.csv"},
                           {"loss_params", "loss_params.json"},
                           {"checkpoint", "winner.ckpt"}};
    write_manifest(fs::path(out_dir) / "manifest.json", manifest);

    std::ofstream log(fs::path(out_dir) / "search_log.jsonl", std::ios::trunc);
    if (!log) throw FormatError("cannot write search_log.jsonl under '" + out_dir + "'");

    SearchResult result = run_search(cfg, data, [&](const EpochRecord& rec) {
        log << epoch_record_to_json(rec) << '\n';
        std::cerr << "epoch " << rec.epoch << ": winner=" << rec.winner
                  << " best_reward=" << rec.raw_rewards[rec.winner]
                  << " clamps=" << rec.clamp_events << " ("
                  << rec.duration_seconds << "s)\n";
    });
    log.flush();

    save_checkpoint(result.model, (fs::path(out_dir) / "winner.ckpt").string());
    {
        std::ofstream csv(fs::path(out_dir) / "mu_trajectory.csv", std::ios::trunc);
        write_mu_trajectory_csv(csv, result.records);
    }
    {
        LossParams params = LossParams::from_theta(result.dist.mu, cfg.num_intervals);
        std::ofstream pj(fs::path(out_dir) / "loss_params.json", std::ios::trunc);
        pj << loss_params_to_json(params).dump(2) << '\n';
    }

    const EpochRecord& last = result.records.back();
    const double final_acc = last.raw_rewards[last.winner];
    manifest["finished_at"] = now_iso8601();
    manifest["results"] = {{"final_val_accuracy", final_acc}};
    write_manifest(fs::path(out_dir) / "manifest.json", manifest);

    json out;
    out["final_val_accuracy"] = final_acc;
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_eval(const DataOpts& d, const std::string& checkpoint, const std::string& split,
             double scale, std::uint64_t seed) {
    ModelState model = load_checkpoint(checkpoint);
    DatasetSplit data = build_dataset(d, seed);
    const Matrix& x = (split == "train") ? data.train_x : data.val_x;
    const std::vector<int>& y = (split == "train") ? data.train_y : data.val_y;
    double acc = evaluate(model, x, y, scale);
    json out;
    out["accuracy"] = acc;
    out["n"] = x.rows;
    out["checkpoint"] = checkpoint;
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_export_grads(const DataOpts& d, const std::string& checkpoint,
                     const std::string& loss_params_path, const std::string& reference,
                     double margin, double alpha, double scale,
                     const std::string& split, std::uint64_t seed,
                     const std::string& output) {
    ModelState model = load_checkpoint(checkpoint);

    std::ifstream pin(loss_params_path);
    if (!pin) throw FormatError("cannot open loss params '" + loss_params_path + "'");
    json pj;
    try {
        pin >> pj;
    } catch (const json::exception& e) {
        throw FormatError("loss params '" + loss_params_path + "': " + e.what());
    }
    LossParams params = loss_params_from_json(pj);

    DatasetSplit data = build_dataset(d, seed);
    const Matrix& x = (split == "train") ? data.train_x : data.val_x;
    const std::vector<int>& y = (split == "train") ? data.train_y : data.val_y;

    LogitsBatch batch;
    batch.values = forward(model, x, scale);
    batch.labels = y;

    LossOutput searched = unified_loss(batch, params, scale);
    LossFn ref = make_reference_loss(reference, margin, alpha, scale);
    LossOutput reference_out = ref(batch);

    std::ofstream os(output, std::ios::trunc);
    if (!os) throw FormatError("cannot write '" + output + "'");
    write_grad_distribution_csv(os, batch, searched, "searched", true);
    write_grad_distribution_csv(os, batch, reference_out, reference, false);
    std::cerr << "wrote " << 2 * batch.size() << " rows to " << output << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"piecewise-linear loss-function search"};
    app.require_subcommand(1);
    app.set_version_flag("--version", AMLFS_VERSION);

    DataOpts data;
    ModelOpts model;
    TrainOpts train;
    SearchOpts search;
    std::uint64_t seed = 0;
    std::string out_dir, from_manifest;
    std::string loss_name = "softmax";
    double margin = 0.5, alpha = 2.0;
    std::string checkpoint, split = "val", loss_params_path, reference = "softmax";
    std::string output = "grads.csv";

    CLI::App* b = app.add_subcommand("baseline", "train with a fixed reference loss");
    add_data_flags(b, data);
    add_model_flags(b, model, /*with_head=*/true);
    add_train_flags(b, train);
    b->add_option("--epochs", train.epochs, "training epochs")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    b->add_option("--loss", loss_name, "reference loss")
        ->check(CLI::IsMember({"softmax", "focal", "arcface", "lsoftmax", "asoftmax"}))
        ->capture_default_str();
    b->add_option("--margin", margin, "margin m for arcface/lsoftmax/asoftmax")
        ->capture_default_str();
    b->add_option("--alpha", alpha, "focal exponent")->capture_default_str();
    b->add_option("--seed", seed, "run seed")->capture_default_str();
    b->add_option("--out", out_dir, "output directory")->required();
    b->add_option("--from-manifest", from_manifest,
                  "reproduce a previous run (other flags ignored)");

    CLI::App* s = app.add_subcommand("search", "run the loss-function search");
    add_data_flags(s, data);
    add_model_flags(s, model, /*with_head=*/false);
    add_train_flags(s, train);
    s->add_option("--B", search.population, "population size per epoch")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    s->add_option("--M", search.intervals, "piecewise intervals per transform")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    s->add_option("--sigma", search.sigma, "sampling stddev")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    s->add_option("--eta", search.eta, "outer learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    s->add_option("--epochs", search.epochs, "search epochs")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    s->add_option("--workers", search.workers, "parallel training workers")
        ->check(CLI::Range(1, 1000000000))
        ->capture_default_str();
    s->add_option("--outer-opt", search.outer_opt, "outer optimizer")
        ->check(CLI::IsMember({"adam", "sgd"}))
        ->capture_default_str();
    s->add_option("--seed", seed, "run seed")->capture_default_str();
    s->add_option("--out", out_dir, "output directory")->required();
    s->add_option("--from-manifest", from_manifest,
                  "reproduce a previous run (other flags ignored)");

    CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_data_flags(e, data);
    e->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    e->add_option("--split", split, "which split to score")
        ->check(CLI::IsMember({"train", "val"}))
        ->capture_default_str();
    e->add_option("--scale", train.scale, "cosine-head scale s")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    e->add_option("--seed", seed, "seed the dataset was built with")
        ->capture_default_str();

    CLI::App* g = app.add_subcommand("export-grads",
                                     "per-sample target-gradient norms as CSV");
    add_data_flags(g, data);
    g->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    g->add_option("--loss-params", loss_params_path, "searched LossParams JSON")
        ->required();
    g->add_option("--reference", reference, "reference loss to compare against")
        ->check(CLI::IsMember({"softmax", "focal", "arcface", "lsoftmax", "asoftmax"}))
        ->capture_default_str();
    g->add_option("--margin", margin, "margin m for the reference")
        ->capture_default_str();
    g->add_option("--alpha", alpha, "focal exponent")->capture_default_str();
    g->add_option("--scale", train.scale, "cosine-head scale s")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    g->add_option("--split", split, "which split to use")
        ->check(CLI::IsMember({"train", "val"}))
        ->capture_default_str();
    g->add_option("--seed", seed, "seed the dataset was built with")
        ->capture_default_str();
    g->add_option("--output", output, "destination CSV")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        int rc = app.exit(err);
        return rc == 0 ? 0 : 2;
    }

    int env_workers = 0;
    if (const char* env = std::getenv("AMLFS_WORKERS")) {
        char* end = nullptr;
        long w = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || w < 1) {
            std::cerr << "AMLFS_WORKERS must be a positive integer, got '" << env
                      << "'\n";
            return 2;
        }
        env_workers = static_cast<int>(w);
    }

    try {
        if (b->parsed()) {
            return cmd_baseline(data, model, train, loss_name, margin, alpha, seed,
                                out_dir, from_manifest);
        }
        if (s->parsed()) {
            return cmd_search(data, model, train, search, seed, out_dir,
                              from_manifest, env_workers);
        }
        if (e->parsed()) return cmd_eval(data, checkpoint, split, train.scale, seed);
        if (g->parsed()) {
            return cmd_export_grads(data, checkpoint, loss_params_path, reference,
                                    margin, alpha, train.scale, split, seed, output);
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 2; // no subcommand (require_subcommand should have caught this)
}
