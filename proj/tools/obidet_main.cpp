// obidet: synthetic glyph-detection pipeline with clustering-guided
// contrastive feature learning. Subcommands: gen, train, eval, embed,
// cluster. stdout carries machine-readable results only; diagnostics go to
// stderr. Exit codes: 0 ok, 1 input error, 2 numeric error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "obidet/clustering.hpp"
#include "obidet/dataset.hpp"
#include "obidet/errors.hpp"
#include "obidet/eval.hpp"
#include "obidet/format.hpp"
#include "obidet/net.hpp"
#include "obidet/pca.hpp"
#include "obidet/roi_align.hpp"
#include "obidet/trainer.hpp"

namespace {

using nlohmann::json;
using namespace obidet;

struct FeatureRecord {
    FeatureRole role;
    FeatureVector vec;
};

void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureRecord>& recs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    for (const auto& r : recs) {
        out << role_name(r.role);
        for (double v : r.vec.values) out << ',' << fmt_double(v);
        out << '\n';
    }
}

std::vector<FeatureRecord> read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<FeatureRecord> recs;
    std::string line;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            ++offset;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ','))
            throw FormatError(path.string(), offset, "missing role column");
        FeatureRecord rec;
        rec.role = role_from_name(cell);
        while (std::getline(ss, cell, ',')) {
            try {
                rec.vec.values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError(path.string(), offset, "bad number on line " + std::to_string(line_no));
            }
        }
        if (rec.vec.values.empty())
            throw FormatError(path.string(), offset, "no values on line " + std::to_string(line_no));
        recs.push_back(std::move(rec));
        offset += line.size() + 1;
    }
    return recs;
}

// Training-style feature gathering over whole datasets, shared by `embed`.
std::vector<FeatureRecord> gather_features(const ExtractorParams& params,
                                           const std::vector<ImageSample>& rubbing,
                                           const std::vector<ImageSample>& font,
                                           const TrainConfig& cfg) {
    std::vector<FeatureRecord> recs;
    constexpr int kNegCap = 256;
    for (const ImageSample& img : rubbing) {
        const Tensor input = pad_to_stride(img.to_tensor());
        const ForwardResult out = forward(params, input);
        const std::vector<Box> anchors = generate_anchors(
            input.dim(1) / kStride, input.dim(2) / kStride, kStride, cfg.anchor_sizes);
        const AnchorMatch match = match_anchors_detailed(anchors, img.boxes, cfg.match_policy);
        std::vector<int> negs;
        for (int i = 0; i < static_cast<int>(match.labels.size()); ++i) {
            if (match.labels[i] == AnchorLabel::Positive) {
                FeatureVector f = roi_align(out.feature_map, kStride, anchors[i]);
                recs.push_back({FeatureRole::Sample,
                                cfg.normalize_features ? l2_normalize(f) : std::move(f)});
            } else if (match.labels[i] == AnchorLabel::Negative) {
                negs.push_back(i);
            }
        }
        std::stable_sort(negs.begin(), negs.end(),
                         [&](int a, int b) { return match.max_iou[a] < match.max_iou[b]; });
        if (static_cast<int>(negs.size()) > kNegCap) negs.resize(kNegCap);
        for (int i : negs) {
            FeatureVector f = roi_align(out.feature_map, kStride, anchors[i]);
            recs.push_back({FeatureRole::Negative,
                            cfg.normalize_features ? l2_normalize(f) : std::move(f)});
        }
    }
    for (const ImageSample& img : font) {
        const Tensor input = pad_to_stride(img.to_tensor());
        const ForwardResult out = forward(params, input);
        const std::vector<Box> anchors = generate_anchors(
            input.dim(1) / kStride, input.dim(2) / kStride, kStride, cfg.anchor_sizes);
        const AnchorMatch match = match_anchors_detailed(anchors, img.boxes, cfg.match_policy);
        for (int i = 0; i < static_cast<int>(match.labels.size()); ++i)
            if (match.labels[i] == AnchorLabel::Positive) {
                FeatureVector f = roi_align(out.feature_map, kStride, anchors[i]);
                recs.push_back({FeatureRole::Positive,
                                cfg.normalize_features ? l2_normalize(f) : std::move(f)});
            }
    }
    return recs;
}

int run_gen(const std::string& out_dir, const std::string& kind, int count, std::uint64_t seed,
            int size, double noise) {
    GenSpec spec;
    spec.image_size = size;
    spec.noise_density = noise;
    spec.seed = seed;
    std::vector<ImageSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        samples.push_back(kind == "rubbing" ? gen_rubbing(spec, i) : gen_font(spec, i));
    save_dataset(samples, out_dir);
    json summary{{"written", count}, {"dir", out_dir}, {"kind", kind}};
    std::cout << summary.dump() << "\n";
    return 0;
}

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations, obc_count, batch_size;
    std::optional<double> lr, tau, lambda1, lambda2, lambda3;
};

int run_train(const std::string& config_path, const std::string& rubbing_dir,
              const std::string& font_dir, const std::string& out_ckpt,
              const std::string& log_path, const TrainOverrides& ov) {
    TrainConfig cfg =
        config_path.empty() ? TrainConfig{} : config_from_json_file(config_path);
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.iterations) cfg.iterations = *ov.iterations;
    if (ov.obc_count) cfg.obc_count = *ov.obc_count;
    if (ov.batch_size) cfg.batch_size = *ov.batch_size;
    if (ov.lr) cfg.lr = *ov.lr;
    if (ov.tau) cfg.tau = *ov.tau;
    if (ov.lambda1) cfg.lambdas[0] = *ov.lambda1;
    if (ov.lambda2) cfg.lambdas[1] = *ov.lambda2;
    if (ov.lambda3) cfg.lambdas[2] = *ov.lambda3;
    cfg.validate();
    std::cout << config_to_json(cfg) << "\n";

    const std::vector<ImageSample> rubbing = load_dataset(rubbing_dir, SampleSource::Rubbing);
    if (rubbing.empty()) throw InputError("train: no rubbing images in " + rubbing_dir);
    std::vector<ImageSample> font;
    if (!font_dir.empty()) font = load_dataset(font_dir, SampleSource::FontLibrary);
    if (cfg.contrastive_enabled() && font.empty())
        throw InputError("train: contrastive path enabled but no font images in " + font_dir);

    const TrainResult result = train(cfg, rubbing, font);

    if (!log_path.empty()) {
        std::ofstream log(log_path, std::ios::trunc);
        if (!log) throw InputError("train: cannot write log " + log_path);
        log << iteration_csv_header() << "\n";
        for (const IterationRecord& rec : result.records) log << iteration_csv_line(rec) << "\n";
    }
    save_checkpoint(result.params, out_ckpt);

    json summary{{"iterations_run", result.records.size()},
                 {"checkpoint", out_ckpt},
                 {"aborted", result.aborted}};
    if (!result.records.empty()) summary["final_total"] = result.records.back().loss.total;
    if (result.aborted) {
        summary["abort_reason"] = result.abort_reason;
        summary["last_good_iteration"] =
            result.records.empty() ? -1 : result.records.back().iteration;
        std::cout << summary.dump() << "\n";
        std::cerr << "train aborted: " << result.abort_reason << "\n";
        return 2;
    }
    std::cout << summary.dump() << "\n";
    return 0;
}

json metrics_to_json(const MetricsReport& m) {
    json by_iou = json::array();
    for (const auto& [t, ap] : m.ap_by_iou) by_iou.push_back({{"iou", t}, {"ap", ap}});
    return json{{"ap", m.ap},
                {"ap50", m.ap50},
                {"ap75", m.ap75},
                {"ar50", m.ar50},
                {"precision50", m.precision50},
                {"recall50", m.recall50},
                {"f1_50", m.f1_50},
                {"ap_by_iou", by_iou},
                {"no_ground_truth", m.no_ground_truth}};
}

int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& config_path,
             double score_thresh, double nms_thresh, double f1_thresh) {
    const TrainConfig cfg =
        config_path.empty() ? TrainConfig{} : config_from_json_file(config_path);
    const ExtractorParams params = load_checkpoint(ckpt);
    if (params.layout.num_sizes != static_cast<int>(cfg.anchor_sizes.size()))
        throw InputError("eval: checkpoint anchor count does not match configured anchor_sizes");
    const std::vector<ImageSample> data = load_dataset(data_dir);
    if (data.empty()) throw InputError("eval: no images in " + data_dir);

    std::vector<DetectionResult> preds;
    std::vector<std::vector<Box>> gts;
    for (const ImageSample& img : data) {
        preds.push_back(infer(params, img, cfg.anchor_sizes, score_thresh, nms_thresh));
        gts.push_back(img.boxes);
    }
    const MetricsReport m = average_precision(preds, gts, coco_iou_thresholds(), f1_thresh);
    std::cout << metrics_to_json(m).dump() << "\n";
    return 0;
}

int run_embed(const std::string& ckpt, const std::string& rubbing_dir, const std::string& font_dir,
              const std::string& out_csv, const std::string& features_out,
              const std::string& config_path) {
    const TrainConfig cfg =
        config_path.empty() ? TrainConfig{} : config_from_json_file(config_path);
    const ExtractorParams params = load_checkpoint(ckpt);
    if (params.layout.num_sizes != static_cast<int>(cfg.anchor_sizes.size()))
        throw InputError("embed: checkpoint anchor count does not match configured anchor_sizes");
    const std::vector<ImageSample> rubbing = load_dataset(rubbing_dir, SampleSource::Rubbing);
    const std::vector<ImageSample> font = load_dataset(font_dir, SampleSource::FontLibrary);
    if (rubbing.empty() && font.empty()) throw InputError("embed: no input images");

    const std::vector<FeatureRecord> recs = gather_features(params, rubbing, font, cfg);
    if (!features_out.empty()) write_feature_csv(features_out, recs);

    std::vector<std::pair<FeatureRole, FeatureVector>> feats;
    feats.reserve(recs.size());
    for (const auto& r : recs) feats.emplace_back(r.role, r.vec);
    const Embedding emb = embed_2d(feats);

    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw InputError("embed: cannot write " + out_csv);
    out << "role,x,y\n";
    for (const EmbeddedPoint& p : emb.points)
        out << role_name(p.role) << ',' << fmt_double(p.x) << ',' << fmt_double(p.y) << '\n';

    json summary{{"points", emb.points.size()},
                 {"explained_variance", {emb.explained_variance[0], emb.explained_variance[1]}},
                 {"degenerate", emb.degenerate},
                 {"out", out_csv}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_cluster(const std::string& features_csv, const std::string& method, int k, double eps,
                int min_samples, std::uint64_t seed, int restarts, const std::string& role,
                const std::string& out_path) {
    std::vector<FeatureRecord> recs = read_feature_csv(features_csv);
    if (role != "all") {
        const FeatureRole want = role_from_name(role);
        std::erase_if(recs, [&](const FeatureRecord& r) { return r.role != want; });
    }
    if (recs.empty()) throw InputError("cluster: no feature rows selected");
    std::vector<FeatureVector> points;
    points.reserve(recs.size());
    for (auto& r : recs) points.push_back(std::move(r.vec));

    ClusterSpec spec;
    spec.k = k;
    spec.eps = eps;
    spec.min_samples = min_samples;
    spec.seed = seed;
    ClusterModel model;
    if (method == "kmeans") {
        spec.method = ClusterMethod::KMeans;
        model = restarts > 1 ? kmeans_fit_best_of(points, spec, restarts) : kmeans_fit(points, spec);
    } else {
        spec.method = ClusterMethod::DBSCAN;
        model = dbscan_fit(points, spec);
    }

    std::vector<int> sizes(model.k, 0);
    int noise = 0;
    for (int a : model.assignments) {
        if (a < 0)
            ++noise;
        else
            ++sizes[a];
    }
    json report{{"method", method},
                {"n_points", points.size()},
                {"clusters", model.k},
                {"inertia", model.inertia},
                {"iterations_run", model.iterations_run},
                {"cluster_sizes", sizes},
                {"noise_points", noise}};
    if (method == "kmeans") {
        report["k"] = k;
        report["restarts"] = restarts;
    } else {
        report["eps"] = eps;
        report["min_samples"] = min_samples;
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw InputError("cluster: cannot write " + out_path);
    out << report.dump(2) << "\n";
    std::cout << report.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Glyph detector with clustering-guided contrastive features"};
    app.require_subcommand(1);

    // gen
    std::string gen_out, gen_kind;
    int gen_count = 0, gen_size = 128;
    std::uint64_t gen_seed = 0;
    double gen_noise = 0.02;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--kind", gen_kind, "rubbing|font")
        ->required()
        ->check(CLI::IsMember({"rubbing", "font"}));
    gen->add_option("--count", gen_count, "Number of images")->required()
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", gen_seed, "Generator seed")->required();
    gen->add_option("--size", gen_size, "Square image size, multiple of 8");
    gen->add_option("--noise", gen_noise, "Salt-and-pepper density (rubbing only)");

    // train
    std::string tr_config, tr_rubbing, tr_font, tr_out, tr_log;
    TrainOverrides ov;
    CLI::App* tr = app.add_subcommand("train", "Train the detector");
    tr->add_option("--config", tr_config, "JSON config file");
    tr->add_option("--rubbing", tr_rubbing, "Rubbing dataset dir")->required();
    tr->add_option("--font", tr_font, "Font-library dataset dir");
    tr->add_option("--out", tr_out, "Checkpoint output path")->required();
    tr->add_option("--log", tr_log, "Per-iteration CSV log path");
    tr->add_option("--seed", [&ov](auto& v) { ov.seed = std::stoull(v[0]); return true; },
                   "Override seed")->expected(1);
    tr->add_option("--iterations", [&ov](auto& v) { ov.iterations = std::stoi(v[0]); return true; },
                   "Override iterations")->expected(1);
    tr->add_option("--obc-count", [&ov](auto& v) { ov.obc_count = std::stoi(v[0]); return true; },
                   "Override font draws per iteration")->expected(1);
    tr->add_option("--batch-size", [&ov](auto& v) { ov.batch_size = std::stoi(v[0]); return true; },
                   "Override batch size")->expected(1);
    tr->add_option("--lr", [&ov](auto& v) { ov.lr = std::stod(v[0]); return true; },
                   "Override learning rate")->expected(1);
    tr->add_option("--tau", [&ov](auto& v) { ov.tau = std::stod(v[0]); return true; },
                   "Override temperature")->expected(1);
    tr->add_option("--lambda1", [&ov](auto& v) { ov.lambda1 = std::stod(v[0]); return true; },
                   "Override contrastive weight")->expected(1);
    tr->add_option("--lambda2", [&ov](auto& v) { ov.lambda2 = std::stod(v[0]); return true; },
                   "Override classification weight")->expected(1);
    tr->add_option("--lambda3", [&ov](auto& v) { ov.lambda3 = std::stod(v[0]); return true; },
                   "Override box-regression weight")->expected(1);

    // eval
    std::string ev_ckpt, ev_data, ev_config;
    double ev_score = 0.05, ev_nms = 0.5, ev_f1 = 0.5;
    CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--data", ev_data, "Dataset dir")->required();
    ev->add_option("--config", ev_config, "JSON config (anchor sizes etc.)");
    ev->add_option("--score-thresh", ev_score, "Score threshold for admitted detections");
    ev->add_option("--nms", ev_nms, "NMS IoU threshold");
    ev->add_option("--f1-thresh", ev_f1, "Operating score threshold for P/R/F1");

    // embed
    std::string em_ckpt, em_rubbing, em_font, em_out, em_features_out, em_config;
    CLI::App* em = app.add_subcommand("embed", "Export a 2-D feature embedding");
    em->add_option("--ckpt", em_ckpt, "Checkpoint path")->required();
    em->add_option("--rubbing", em_rubbing, "Rubbing dataset dir")->required();
    em->add_option("--font", em_font, "Font-library dataset dir")->required();
    em->add_option("--out", em_out, "Embedding CSV (role,x,y)")->required();
    em->add_option("--features-out", em_features_out, "Optional raw feature CSV dump");
    em->add_option("--config", em_config, "JSON config (anchor sizes etc.)");

    // cluster
    std::string cl_features, cl_method = "kmeans", cl_role = "all", cl_out;
    int cl_k = 8, cl_min_samples = 5, cl_restarts = 1;
    double cl_eps = 12.0;
    std::uint64_t cl_seed = 0;
    CLI::App* cl = app.add_subcommand("cluster", "Cluster a feature dump");
    cl->add_option("--features", cl_features, "Feature CSV (role,values...)")->required();
    cl->add_option("--method", cl_method, "kmeans|dbscan")
        ->check(CLI::IsMember({"kmeans", "dbscan"}));
    cl->add_option("--k", cl_k, "K-Means cluster count");
    cl->add_option("--eps", cl_eps, "DBSCAN radius");
    cl->add_option("--min-samples", cl_min_samples, "DBSCAN core threshold");
    cl->add_option("--seed", cl_seed, "K-Means init seed");
    cl->add_option("--restarts", cl_restarts, "K-Means restarts, best inertia wins");
    cl->add_option("--role", cl_role, "sample|positive|negative|all")
        ->check(CLI::IsMember({"sample", "positive", "negative", "all"}));
    cl->add_option("--out", cl_out, "Cluster report JSON path")->required();

    try {
        app.parse(argc, argv);
        if (*gen) return run_gen(gen_out, gen_kind, gen_count, gen_seed, gen_size, gen_noise);
        if (*tr) return run_train(tr_config, tr_rubbing, tr_font, tr_out, tr_log, ov);
        if (*ev) return run_eval(ev_ckpt, ev_data, ev_config, ev_score, ev_nms, ev_f1);
        if (*em) return run_embed(em_ckpt, em_rubbing, em_font, em_out, em_features_out, em_config);
        if (*cl)
            return run_cluster(cl_features, cl_method, cl_k, cl_eps, cl_min_samples, cl_seed,
                               cl_restarts, cl_role, cl_out);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
