#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "obidet/errors.hpp"
#include "obidet/trainer.hpp"

namespace obidet {

namespace {

using nlohmann::json;

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw InputError("config: unknown key \"" + key + "\" in " + where);
}

MatchPolicy parse_policy(const json& j, const MatchPolicy& base) {
    reject_unknown(j, {"pos_threshold", "neg_threshold", "regime"}, "match_policy");
    MatchPolicy p = base;
    if (j.contains("regime")) {
        const std::string r = j.at("regime").get<std::string>();
        if (r == "dense")
            p = MatchPolicy::dense();
        else if (r == "sparse")
            p = MatchPolicy::sparse();
        else
            throw InputError("config: match_policy.regime must be dense or sparse");
    }
    take(j, "pos_threshold", p.pos_threshold);
    take(j, "neg_threshold", p.neg_threshold);
    if (!p.valid()) throw InputError("config: invalid match_policy thresholds");
    return p;
}

ClusterSpec parse_cluster(const json& j, const ClusterSpec& base) {
    reject_unknown(j, {"method", "eps", "min_samples", "max_iters", "tol"}, "cluster_method");
    ClusterSpec s = base;
    if (j.contains("method")) {
        const std::string m = j.at("method").get<std::string>();
        if (m == "kmeans")
            s.method = ClusterMethod::KMeans;
        else if (m == "dbscan")
            s.method = ClusterMethod::DBSCAN;
        else
            throw InputError("config: cluster_method.method must be kmeans or dbscan");
    }
    take(j, "eps", s.eps);
    take(j, "min_samples", s.min_samples);
    take(j, "max_iters", s.max_iters);
    take(j, "tol", s.tol);
    return s;
}

}  // namespace

TrainConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("<config>", e.byte, e.what());
    }
    reject_unknown(j,
                   {"lr", "momentum", "weight_decay", "lambdas", "tau", "n_neg_clusters",
                    "m_pos_clusters", "obc_count", "match_policy", "cluster_method", "batch_size",
                    "iterations", "seed", "normalize_features", "denominator_mode", "anchor_sizes",
                    "disable_contrastive"},
                   "config");
    TrainConfig cfg;
    take(j, "lr", cfg.lr);
    take(j, "momentum", cfg.momentum);
    take(j, "weight_decay", cfg.weight_decay);
    if (j.contains("lambdas")) {
        const auto& l = j.at("lambdas");
        if (!l.is_array() || l.size() != 3)
            throw InputError("config: lambdas must be an array of three numbers");
        for (int i = 0; i < 3; ++i) cfg.lambdas[i] = l.at(i).get<double>();
    }
    take(j, "tau", cfg.tau);
    take(j, "n_neg_clusters", cfg.n_neg_clusters);
    take(j, "m_pos_clusters", cfg.m_pos_clusters);
    take(j, "obc_count", cfg.obc_count);
    if (j.contains("match_policy")) cfg.match_policy = parse_policy(j.at("match_policy"), cfg.match_policy);
    if (j.contains("cluster_method")) cfg.cluster_method = parse_cluster(j.at("cluster_method"), cfg.cluster_method);
    take(j, "batch_size", cfg.batch_size);
    take(j, "iterations", cfg.iterations);
    take(j, "seed", cfg.seed);
    take(j, "normalize_features", cfg.normalize_features);
    if (j.contains("denominator_mode")) {
        const std::string m = j.at("denominator_mode").get<std::string>();
        if (m == "infonce")
            cfg.denominator_mode = DenominatorMode::InfoNce;
        else if (m == "negatives_only")
            cfg.denominator_mode = DenominatorMode::NegativesOnly;
        else
            throw InputError("config: denominator_mode must be infonce or negatives_only");
    }
    take(j, "anchor_sizes", cfg.anchor_sizes);
    take(j, "disable_contrastive", cfg.disable_contrastive);
    cfg.validate();
    return cfg;
}

TrainConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json(const TrainConfig& cfg) {
    json j;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["lambdas"] = {cfg.lambdas[0], cfg.lambdas[1], cfg.lambdas[2]};
    j["tau"] = cfg.tau;
    j["n_neg_clusters"] = cfg.n_neg_clusters;
    j["m_pos_clusters"] = cfg.m_pos_clusters;
    j["obc_count"] = cfg.obc_count;
    j["match_policy"] = {{"pos_threshold", cfg.match_policy.pos_threshold},
                         {"neg_threshold", cfg.match_policy.neg_threshold},
                         {"regime", cfg.match_policy.regime == MatchRegime::Dense ? "dense" : "sparse"}};
    j["cluster_method"] = {
        {"method", cfg.cluster_method.method == ClusterMethod::KMeans ? "kmeans" : "dbscan"},
        {"eps", cfg.cluster_method.eps},
        {"min_samples", cfg.cluster_method.min_samples},
        {"max_iters", cfg.cluster_method.max_iters},
        {"tol", cfg.cluster_method.tol}};
    j["batch_size"] = cfg.batch_size;
    j["iterations"] = cfg.iterations;
    j["seed"] = cfg.seed;
    j["normalize_features"] = cfg.normalize_features;
    j["denominator_mode"] =
        cfg.denominator_mode == DenominatorMode::InfoNce ? "infonce" : "negatives_only";
    j["anchor_sizes"] = cfg.anchor_sizes;
    j["disable_contrastive"] = cfg.disable_contrastive;
    return j.dump();
}

}  // namespace obidet
