#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellstab/dataset.hpp"
#include "cellstab/evaluation.hpp"
#include "cellstab/models/meta_model.hpp"
#include "cellstab/pipeline.hpp"
#include "cellstab/synth.hpp"

namespace fs = std::filesystem;
using namespace cellstab;

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct SynthOpts {
    std::string config;
    std::string out;
    std::optional<uint64_t> seed;
    std::optional<int> frames;
    std::optional<double> p_err;
};

void run_synth(const SynthOpts& o) {
    SynthConfig cfg;
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw Error("cannot open config " + o.config);
        cfg = synth_config_from_json(nlohmann::json::parse(in));
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.frames) cfg.num_frames = *o.frames;
    if (o.p_err) cfg.p_err = *o.p_err;
    cfg.validate();
    const auto m = generate_stream(cfg, o.out);
    std::cout << "wrote " << m.num_frames << " frames to " << o.out << "\n";
}

struct ExtractOpts {
    std::string manifest;
    int m = -1;
    int smooth_gt = 0;
    std::string out;
    std::string segments_out;
};

void run_extract(const ExtractOpts& o) {
    const StreamManifest man = read_manifest(o.manifest);
    const int m = o.m < 0 ? man.num_blocks - 1 : o.m;
    if (m > man.num_blocks - 1) {
        throw Error("--m " + std::to_string(m) + " exceeds l-1 = " + std::to_string(man.num_blocks - 1) +
                    " for this stream");
    }
    validate_manifest(man);
    auto out = open_out(o.out);
    write_features_csv_header(out, man.num_classes, m);
    std::ofstream seg_out;
    if (!o.segments_out.empty()) {
        seg_out = open_out(o.segments_out);
        write_segments_csv_header(seg_out);
    }
    std::size_t count = 0;
    for (int t = 0; t < man.num_frames; ++t) {
        const FrameInputs in = load_frame(man, t, o.smooth_gt);
        const FrameFeatures ff = extract_frame_features(t, in.softmax, in.cells, in.ground_truth, m);
        for (const auto& f : ff.features) write_features_csv_row(out, f);
        if (seg_out.is_open()) {
            for (const auto& s : ff.segmentation.segments) write_segments_csv_row(seg_out, s);
        }
        count += ff.features.size();
    }
    std::cout << "extracted " << count << " segments (m=" << m << ") to " << o.out << "\n";
}

struct TrackOpts {
    std::string manifest;
    TrackingParams params;
    std::string out;
};

void run_track(const TrackOpts& o) {
    const StreamManifest man = read_manifest(o.manifest);
    validate_manifest(man);
    Tracker tracker(o.params);
    auto out = open_out(o.out);
    write_tracking_csv_header(out);
    for (int t = 0; t < man.num_frames; ++t) {
        const auto softmax = SoftmaxFrame::from_tensor(read_tensor(man.resolve(man.frames[t].softmax), man.softmax_shape()));
        FrameSegments fs = connected_components(predicted_labels(softmax), t);
        write_tracking_csv_rows(out, t, tracker.track(t, fs.segments));
    }
    std::cout << "tracked " << man.num_frames << " frames, " << tracker.state().next_id << " track ids, to " << o.out
              << "\n";
}

struct DatasetOpts {
    std::string features;
    std::string tracks;
    int T = 0;
    std::string out;
};

void run_dataset(const DatasetOpts& o) {
    FeatureTable ft = read_features_csv(o.features);
    const auto tracks = csv::read(o.tracks);
    if (tracks.header != std::vector<std::string>{"frame", "component", "track_id", "matched_step"}) {
        throw Error("tracking csv: unexpected header in " + o.tracks);
    }
    std::map<std::pair<int, int>, int> ids;
    for (const auto& row : tracks.rows) {
        ids[{static_cast<int>(csv::to_long(row[0], o.tracks)), static_cast<int>(csv::to_long(row[1], o.tracks))}] =
            static_cast<int>(csv::to_long(row[2], o.tracks));
    }
    for (auto& f : ft.rows) {
        auto it = ids.find({f.frame, f.component});
        if (it == ids.end()) {
            throw Error("no track id for frame " + std::to_string(f.frame) + " component " + std::to_string(f.component) +
                        " (was the tracking CSV produced from the same stream?)");
        }
        f.track_id = it->second;
    }
    const MetaDataset ds = build_time_series(ft.rows, ft.num_classes, ft.num_stability, o.T);
    fs::path json_path = o.out;
    fs::path csv_path = json_path;
    csv_path.replace_extension(".csv");
    if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
    write_dataset(csv_path, json_path, ds);
    std::cout << "wrote " << ds.records.size() << " records (m=" << ds.num_stability << ", T=" << ds.history << ") to "
              << json_path.string() << "\n";
}

struct ModelOpts {
    std::string family = "gradient_boosting";
    std::string task = "classification";
    int m = -1;
    int T = -1;
    ModelSpec spec;
    SplitSpec split;
};

void add_model_flags(CLI::App* app, ModelOpts& o) {
    app->add_option("--m", o.m, "Cell-state stability metrics used (default: all in the dataset)");
    app->add_option("--T", o.T, "History length used (default: the dataset's)");
    app->add_option("--sample-size", o.split.sample_size, "Records drawn per run, 0 = all")->capture_default_str();
    app->add_option("--train-fraction", o.split.train_fraction)->capture_default_str();
    app->add_option("--val-fraction", o.split.val_fraction)->capture_default_str();
    app->add_option("--test-fraction", o.split.test_fraction)->capture_default_str();
    app->add_option("--seed", o.split.seed, "Split seed")->capture_default_str();
    app->add_option("--gb-rounds", o.spec.gb.max_rounds)->capture_default_str();
    app->add_option("--gb-depth", o.spec.gb.max_depth)->capture_default_str();
    app->add_option("--gb-learning-rate", o.spec.gb.learning_rate)->capture_default_str();
    app->add_option("--hidden", o.spec.net.hidden, "Hidden units of the NN and LSTM")->capture_default_str();
    app->add_option("--epochs", o.spec.net.max_epochs)->capture_default_str();
    app->add_option("--patience", o.spec.net.patience)->capture_default_str();
    app->add_option("--batch", o.spec.net.batch_size)->capture_default_str();
    app->add_option("--learning-rate", o.spec.net.learning_rate, "Adam step size")->capture_default_str();
}

std::pair<int, int> resolve_setting(const ModelOpts& o, const MetaDataset& ds) {
    const int m = o.m < 0 ? ds.num_stability : o.m;
    const int T = o.T < 0 ? ds.history : o.T;
    if (m > ds.num_stability || T > ds.history) {
        throw Error("requested m=" + std::to_string(m) + ", T=" + std::to_string(T) + " but the dataset holds m<=" +
                    std::to_string(ds.num_stability) + ", T<=" + std::to_string(ds.history));
    }
    return {m, T};
}

struct TrainOpts {
    std::string dataset;
    int run = 0;
    std::string out;
    ModelOpts model;
};

void run_train(const TrainOpts& o) {
    const MetaDataset full = read_dataset(o.dataset);
    const auto [m, T] = resolve_setting(o.model, full);
    const MetaDataset ds = select_view(full, m, T);
    ModelSpec spec = o.model.spec;
    spec.family = family_from_string(o.model.family);
    spec.task = task_from_string(o.model.task);
    spec.seed = o.model.split.seed * 1000003ULL + static_cast<uint64_t>(o.run);
    const SplitIndices idx = split(ds.records.size(), o.model.split, o.run);
    Design train = make_design(ds, idx.train, spec.task);
    Design val = make_design(ds, idx.val, spec.task);
    Design test = make_design(ds, idx.test, spec.task);
    const Standardizer st = standardize(train, val, test);
    TrainedModel tm = train_model(spec, train, val);
    tm.standardizer = st;
    fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_model(out, tm);
    std::map<std::string, double> metrics;
    detail::add_metrics(metrics, spec.task, test.y, predict(tm, test.x), 0.5);
    std::cout << short_name(spec.family) << " " << to_string(spec.task) << " m=" << m << " T=" << T << " run=" << o.run;
    for (const auto& [k, v] : metrics) std::cout << " " << k << "=" << v;
    std::cout << " -> " << out.string() << "\n";
}

struct EvalOpts {
    std::string dataset;
    std::string families = "linear,gradient_boosting,shallow_nn,shallow_lstm";
    std::string tasks = "classification,regression";
    bool grid = false;
    std::string model;
    int run = 0;
    double threshold = 0.5;
    int threads = 1;
    std::string out = "report";
    ModelOpts cfg;
};

void print_rows(const EvalReport& report) {
    for (const auto& r : report.rows) {
        std::printf("%-16s %-5s %-14s m=%-2d T=%-2d %-6s %.4f +- %.4f\n", r.role.c_str(), r.model.c_str(),
                    to_string(r.task), r.m, r.T, r.metric.c_str(), r.mean, r.std);
    }
    for (const auto& b : report.best) {
        std::printf("best %-5s %-14s %-6s over %s (other axis %d): %d  %.4f +- %.4f\n", b.model.c_str(),
                    to_string(b.task), b.metric.c_str(), b.axis.c_str(), b.fixed, b.best, b.mean, b.std);
    }
}

void run_eval(const EvalOpts& o) {
    const MetaDataset ds = read_dataset(o.dataset);
    if (!o.model.empty()) {
        // Score a saved model on the test part of one split.
        const TrainedModel tm = load_model(o.model);
        const int m = (tm.layout.step_features - feature_count(ds.num_classes, 0)) / 5;
        if (m < 0 || m > ds.num_stability || tm.layout.history > ds.history) {
            throw Error("feature layout mismatch: model was trained on a wider view than this dataset holds");
        }
        const MetaDataset view = select_view(ds, m, tm.layout.history);
        const SplitIndices idx = split(view.records.size(), o.cfg.split, o.run);
        Design test = make_design(view, idx.test, tm.task);
        if (!tm.standardizer) throw Error("model file carries no standardizer");
        if (!(test.layout == tm.layout)) {
            throw Error("feature layout mismatch: dataset view has " + std::to_string(test.layout.input_dim()) +
                        " inputs, model expects " + std::to_string(tm.layout.input_dim()));
        }
        tm.standardizer->apply(test);
        std::map<std::string, double> metrics;
        detail::add_metrics(metrics, tm.task, test.y, predict(tm, test.x), o.threshold);
        EvalReport report;
        for (const auto& [k, v] : metrics) {
            report.rows.push_back({"model", short_name(tm.family), tm.task, m, tm.layout.history, k, v, 0.0, {v}});
        }
        write_report_csv(o.out + ".csv", report);
        write_report_json(o.out + ".json", report);
        print_rows(report);
        return;
    }

    ExperimentConfig cfg;
    cfg.families.clear();
    for (const auto& f : split_list(o.families)) cfg.families.push_back(family_from_string(f));
    cfg.tasks.clear();
    for (const auto& t : split_list(o.tasks)) cfg.tasks.push_back(task_from_string(t));
    cfg.split = o.cfg.split;
    cfg.model = o.cfg.spec;
    cfg.threshold = o.threshold;
    cfg.threads = o.threads;
    cfg.settings.clear();
    if (o.grid) {
        for (int m = 0; m <= ds.num_stability; ++m) cfg.settings.push_back({m, 0});
        for (int T = 1; T <= ds.history; ++T) cfg.settings.push_back({ds.num_stability, T});
    } else {
        cfg.settings.push_back(resolve_setting(o.cfg, ds));
    }
    const EvalReport report = run_experiment(ds, cfg);
    fs::path base = o.out;
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    write_report_csv(o.out + ".csv", report);
    write_report_json(o.out + ".json", report);
    print_rows(report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segment-wise performance prediction from softmax dispersion and cell-state stability"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Maximum worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic prediction stream");
    synth->add_option("--config", so.config, "JSON generator config (missing keys use defaults)");
    synth->add_option("--out", so.out, "Output directory")->required();
    synth->add_option("--seed", so.seed, "Override the config seed");
    synth->add_option("--frames", so.frames, "Override the number of frames");
    synth->add_option("--p-err", so.p_err, "Override the per-object misprediction probability");

    ExtractOpts xo;
    auto* extract = app.add_subcommand("extract", "Segment each frame and write per-segment metrics");
    extract->add_option("--manifest", xo.manifest, "Stream manifest")->required()->check(CLI::ExistingFile);
    extract->add_option("--m", xo.m, "Cell-state stability metrics per segment, 0..l-1 (default l-1)");
    extract->add_option("--smooth-gt", xo.smooth_gt, "Majority-filter the ground truth with this odd kernel size");
    extract->add_option("--out", xo.out, "Features CSV")->required();
    extract->add_option("--segments-out", xo.segments_out, "Optional per-segment geometry CSV");

    TrackOpts to;
    auto* track = app.add_subcommand("track", "Assign track ids to predicted segments");
    track->add_option("--manifest", to.manifest, "Stream manifest")->required()->check(CLI::ExistingFile);
    track->add_option("--c-near", to.params.c_near, "Same-frame aggregation distance (px)")->capture_default_str();
    track->add_option("--c-over", to.params.c_over, "Overlap threshold")->capture_default_str();
    track->add_option("--c-dist", to.params.c_dist, "Center distance threshold (px)")->capture_default_str();
    track->add_option("--c-lin", to.params.c_lin, "Extrapolated center threshold (px)")->capture_default_str();
    track->add_option("--lr", to.params.lr, "Regression window (frames)")->capture_default_str();
    track->add_option("--out", to.out, "Tracking CSV")->required();

    DatasetOpts dso;
    auto* dataset = app.add_subcommand("dataset", "Join features and tracks into time-series records");
    dataset->add_option("--features", dso.features, "Features CSV")->required()->check(CLI::ExistingFile);
    dataset->add_option("--tracks", dso.tracks, "Tracking CSV")->required()->check(CLI::ExistingFile);
    dataset->add_option("--T", dso.T, "Previous frames attached to each record, 0..10")->capture_default_str();
    dataset->add_option("--out", dso.out, "Dataset JSON header (the CSV is written next to it)")->required();

    TrainOpts tro;
    tro.model.split.sample_size = 0;
    auto* train = app.add_subcommand("train", "Fit one meta model on one split");
    train->add_option("--dataset", tro.dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--family", tro.model.family, "linear | gradient_boosting | shallow_nn | shallow_lstm")
        ->capture_default_str();
    train->add_option("--task", tro.model.task, "classification | regression")->capture_default_str();
    train->add_option("--run", tro.run, "Split index")->capture_default_str();
    train->add_option("--out", tro.out, "Model JSON")->required();
    add_model_flags(train, tro.model);

    EvalOpts eo;
    eo.cfg.split.sample_size = 0;
    auto* eval = app.add_subcommand("eval", "Evaluate meta models over repeated random splits");
    eval->add_option("--dataset", eo.dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--families", eo.families, "Comma-separated model families")->capture_default_str();
    eval->add_option("--tasks", eo.tasks, "Comma-separated tasks")->capture_default_str();
    eval->add_flag("--grid", eo.grid, "Sweep m at T=0 and T at the largest m");
    eval->add_option("--model", eo.model, "Score a saved model on the test part of --run instead");
    eval->add_option("--run", eo.run, "Split index for --model")->capture_default_str();
    eval->add_option("--runs", eo.cfg.split.runs, "Random splits")->capture_default_str();
    eval->add_option("--threshold", eo.threshold, "Classification threshold")->capture_default_str();
    eval->add_option("--out", eo.out, "Report path prefix (.csv and .json are appended)")->capture_default_str();
    add_model_flags(eval, eo.cfg);

    CLI11_PARSE(app, argc, argv);
    eo.threads = threads;

    try {
        if (*synth) run_synth(so);
        if (*extract) run_extract(xo);
        if (*track) run_track(to);
        if (*dataset) run_dataset(dso);
        if (*train) run_train(tro);
        if (*eval) run_eval(eo);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
