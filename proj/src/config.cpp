#include "vacl/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "vacl/errors.hpp"
#include "vacl/format.hpp"

namespace vacl {

namespace {

using nlohmann::json;

class Checker {
public:
    std::vector<std::string> errors;

    void fail(const std::string& where, const std::string& what) { errors.push_back(where + ": " + what); }

    /// True if `node` is an object; unknown keys are reported.
    bool object(const json& node, const std::string& where, std::initializer_list<const char*> allowed) {
        if (!node.is_object()) {
            fail(where, "expected an object");
            return false;
        }
        for (const auto& item : node.items()) {
            bool known = false;
            for (const char* k : allowed) known = known || item.key() == k;
            if (!known) fail(where + "." + item.key(), "unknown key");
        }
        return true;
    }

    void number(const json& obj, const char* key, const std::string& where, double& out, double min,
                bool strict_min = false) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        const std::string at = where + "." + key;
        if (!v.is_number()) return fail(at, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x) || x < min || (strict_min && x == min)) {
            return fail(at, std::string("must be ") + (strict_min ? "> " : ">= ") + std::to_string(min));
        }
        out = x;
    }

    void count(const json& obj, const char* key, const std::string& where, std::size_t& out, std::size_t min) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        const std::string at = where + "." + key;
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            return fail(at, "expected a non-negative integer");
        }
        const auto x = v.get<std::uint64_t>();
        if (x < min) return fail(at, "must be >= " + std::to_string(min));
        out = static_cast<std::size_t>(x);
    }

    void seed(const json& obj, const char* key, const std::string& where, std::uint64_t& out) {
        std::size_t tmp = 0;
        if (!obj.contains(key)) return;
        const std::size_t before = errors.size();
        count(obj, key, where, tmp, 0);
        if (errors.size() == before) out = tmp;
    }

    void boolean(const json& obj, const char* key, const std::string& where, bool& out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_boolean()) return fail(where + "." + key, "expected true or false");
        out = obj.at(key).get<bool>();
    }

    void string(const json& obj, const char* key, const std::string& where, std::string& out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_string()) return fail(where + "." + key, "expected a string");
        out = obj.at(key).get<std::string>();
    }

    template <typename T, typename Fn>
    void list(const json& obj, const char* key, const std::string& where, std::vector<T>& out, Fn&& element) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        const std::string at = where + "." + key;
        if (!v.is_array()) return fail(at, "expected an array");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            T item{};
            if (element(v[i], at + "[" + std::to_string(i) + "]", item)) out.push_back(item);
        }
    }

    bool positive_count(const json& v, const std::string& at, std::size_t& out) {
        if (!v.is_number_integer() || v.get<long long>() < 1) {
            fail(at, "expected a positive integer");
            return false;
        }
        out = v.get<std::size_t>();
        return true;
    }

    bool nonneg_count(const json& v, const std::string& at, std::size_t& out) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            fail(at, "expected a non-negative integer");
            return false;
        }
        out = v.get<std::size_t>();
        return true;
    }

    bool nonneg_number(const json& v, const std::string& at, double& out) {
        if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0.0) {
            fail(at, "expected a finite number >= 0");
            return false;
        }
        out = v.get<double>();
        return true;
    }
};

void parse_schedule(Checker& c, const json& obj, const std::string& where, TrainConfig& t) {
    c.count(obj, "epochs", where, t.epochs, 0);
    c.count(obj, "batch_size", where, t.batch_size, 1);
    c.number(obj, "lr", where, t.lr.initial, 0.0);
    c.list<std::size_t>(obj, "decay_epochs", where, t.lr.decay_epochs,
                        [&](const json& v, const std::string& at, std::size_t& out) { return c.nonneg_count(v, at, out); });
    for (std::size_t i = 1; i < t.lr.decay_epochs.size(); ++i) {
        if (t.lr.decay_epochs[i] <= t.lr.decay_epochs[i - 1]) {
            c.fail(where + ".decay_epochs", "must be strictly increasing");
            break;
        }
    }
    c.number(obj, "decay_factor", where, t.lr.factor, 0.0, true);
    c.number(obj, "momentum", where, t.momentum, 0.0);
    if (t.momentum >= 1.0) c.fail(where + ".momentum", "must be < 1");
}

PenaltyKind kind_or_fail(Checker& c, const std::string& name, const std::string& at) {
    try {
        return parse_penalty_kind(name);
    } catch (const ConfigError&) {
        c.fail(at, "unknown penalty kind '" + name +
                       "' (expected none, l1, l2, group_lasso, variance, variance_aware, clgl or vacl)");
        return PenaltyKind::None;
    }
}

}  // namespace

std::vector<TrainConfig> ExperimentConfig::stage_configs() const {
    std::vector<TrainConfig> out;
    if (pipeline.empty()) {
        TrainConfig t = train;
        t.penalty = penalty;
        out.push_back(t);
        return out;
    }
    for (std::size_t s = 0; s < pipeline.size(); ++s) {
        TrainConfig t = train;
        t.penalty = penalty;
        t.penalty.kind = pipeline[s].kind;
        if (pipeline[s].lambda) t.penalty.lambda = *pipeline[s].lambda;
        if (pipeline[s].epochs) t.epochs = *pipeline[s].epochs;
        t.seed = train.seed + 1000003ULL * s;
        out.push_back(t);
    }
    return out;
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    Checker c;
    ExperimentConfig cfg;
    cfg.train.epochs = 40;
    cfg.train.batch_size = 32;
    cfg.train.lr.initial = 0.05;
    cfg.train.momentum = 0.9;
    cfg.finetune.train.epochs = 10;
    cfg.finetune.train.batch_size = 32;
    cfg.finetune.train.lr.initial = 0.01;
    cfg.finetune.train.momentum = 0.9;

    if (!c.object(doc, "config", {"model", "dataset", "penalty", "train", "finetune", "tau", "pipeline", "sweep",
                                  "heatmap", "contour", "output", "accuracy_tolerance"})) {
        throw ConfigError("config: expected a JSON object");
    }

    if (!doc.contains("model")) {
        c.fail("config.model", "missing");
    } else if (const json& m = doc.at("model"); c.object(m, "model", {"widths", "blocks", "classes"})) {
        auto pos = [&](const json& v, const std::string& at, std::size_t& out) { return c.positive_count(v, at, out); };
        if (!m.contains("widths") || !m.contains("blocks")) c.fail("model", "needs widths and blocks");
        c.list<std::size_t>(m, "widths", "model", cfg.model.widths, pos);
        c.list<std::size_t>(m, "blocks", "model", cfg.model.blocks, pos);
        c.count(m, "classes", "model", cfg.model.classes, 1);
        if (cfg.model.widths.empty()) c.fail("model.widths", "must not be empty");
        if (cfg.model.widths.size() != cfg.model.blocks.size()) c.fail("model", "widths and blocks differ in length");
    }

    if (!doc.contains("dataset")) {
        c.fail("config.dataset", "missing");
    } else if (const json& d = doc.at("dataset");
               c.object(d, "dataset", {"type", "features", "train_size", "test_size", "seed", "separation", "train",
                                       "test"})) {
        std::string type = "synthetic";
        c.string(d, "type", "dataset", type);
        if (type == "synthetic") {
            for (const char* k : {"train", "test"})
                if (d.contains(k)) c.fail(std::string("dataset.") + k, "only valid for csv datasets");
            c.count(d, "features", "dataset", cfg.dataset.features, 1);
            c.count(d, "train_size", "dataset", cfg.dataset.train_size, 1);
            c.count(d, "test_size", "dataset", cfg.dataset.test_size, 1);
            c.seed(d, "seed", "dataset", cfg.dataset.seed);
            c.number(d, "separation", "dataset", cfg.dataset.separation, 0.0);
        } else if (type == "csv") {
            cfg.dataset.source = DatasetConfig::Source::Csv;
            for (const char* k : {"features", "train_size", "test_size", "seed", "separation"})
                if (d.contains(k)) c.fail(std::string("dataset.") + k, "only valid for synthetic datasets");
            std::string train_path, test_path;
            c.string(d, "train", "dataset", train_path);
            c.string(d, "test", "dataset", test_path);
            if (train_path.empty() || test_path.empty()) c.fail("dataset", "csv datasets need train and test paths");
            auto resolve = [&](const std::string& p) {
                std::filesystem::path path(p);
                return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
            };
            cfg.dataset.train_path = resolve(train_path);
            cfg.dataset.test_path = resolve(test_path);
        } else {
            c.fail("dataset.type", "expected synthetic or csv");
        }
    }

    if (doc.contains("penalty")) {
        const json& p = doc.at("penalty");
        if (c.object(p, "penalty", {"kind", "lambda", "partition", "head_l2"})) {
            std::string kind = "none", partition = "all";
            c.string(p, "kind", "penalty", kind);
            cfg.penalty.kind = kind_or_fail(c, kind, "penalty.kind");
            c.number(p, "lambda", "penalty", cfg.penalty.lambda, 0.0);
            c.number(p, "head_l2", "penalty", cfg.penalty.head_l2, 0.0);
            c.string(p, "partition", "penalty", partition);
            try {
                cfg.penalty.partition = parse_partition(partition);
            } catch (const ConfigError& e) {
                c.fail("penalty.partition", e.what());
            }
        }
    }

    if (doc.contains("train")) {
        const json& t = doc.at("train");
        if (c.object(t, "train", {"epochs", "batch_size", "lr", "decay_epochs", "decay_factor", "momentum", "seed"})) {
            parse_schedule(c, t, "train", cfg.train);
            c.seed(t, "seed", "train", cfg.train.seed);
        }
    }
    if (cfg.train.epochs == 0) c.fail("train.epochs", "must be >= 1");

    if (doc.contains("finetune")) {
        const json& f = doc.at("finetune");
        if (c.object(f, "finetune", {"epochs", "batch_size", "lr", "decay_epochs", "decay_factor", "momentum",
                                     "regularize", "l2", "between_regularize"})) {
            parse_schedule(c, f, "finetune", cfg.finetune.train);
            c.boolean(f, "regularize", "finetune", cfg.finetune.final.regularize);
            c.boolean(f, "between_regularize", "finetune", cfg.finetune.between.regularize);
            c.number(f, "l2", "finetune", cfg.finetune.final.l2, 0.0);
            cfg.finetune.between.l2 = cfg.finetune.final.l2;
        }
    }

    c.number(doc, "tau", "config", cfg.tau, 0.0);
    c.number(doc, "accuracy_tolerance", "config", cfg.accuracy_tolerance, 0.0);

    c.list<StageConfig>(doc, "pipeline", "config", cfg.pipeline,
                        [&](const json& v, const std::string& at, StageConfig& out) {
                            if (!c.object(v, at, {"kind", "lambda", "epochs"})) return false;
                            std::string kind;
                            c.string(v, "kind", at, kind);
                            if (kind.empty()) {
                                c.fail(at, "stage needs a kind");
                                return false;
                            }
                            out.kind = kind_or_fail(c, kind, at + ".kind");
                            if (v.contains("lambda")) {
                                double l = 0.0;
                                if (c.nonneg_number(v.at("lambda"), at + ".lambda", l)) out.lambda = l;
                            }
                            if (v.contains("epochs")) {
                                std::size_t e = 0;
                                if (c.positive_count(v.at("epochs"), at + ".epochs", e)) out.epochs = e;
                            }
                            return true;
                        });
    if (doc.contains("pipeline") && cfg.pipeline.empty()) c.fail("config.pipeline", "needs at least one stage");

    if (doc.contains("sweep")) {
        const json& s = doc.at("sweep");
        if (c.object(s, "sweep", {"tau", "lambda", "seeds"})) {
            auto nonneg = [&](const json& v, const std::string& at, double& out) { return c.nonneg_number(v, at, out); };
            c.list<double>(s, "tau", "sweep", cfg.sweep_tau, nonneg);
            c.list<double>(s, "lambda", "sweep", cfg.sweep_lambda, nonneg);
            c.list<std::uint64_t>(s, "seeds", "sweep", cfg.sweep_seeds,
                                  [&](const json& v, const std::string& at, std::uint64_t& out) {
                                      std::size_t tmp = 0;
                                      if (!c.nonneg_count(v, at, tmp)) return false;
                                      out = tmp;
                                      return true;
                                  });
        }
    }

    if (doc.contains("heatmap")) {
        const json& h = doc.at("heatmap");
        if (c.object(h, "heatmap", {"group"})) {
            std::size_t g = 0;
            c.count(h, "group", "heatmap", g, 0);
            cfg.heatmap_group = static_cast<int>(g);
        }
    }

    if (doc.contains("contour")) {
        const json& k = doc.at("contour");
        if (c.object(k, "contour", {"kind", "resolution", "w1", "extent"})) {
            c.string(k, "kind", "contour", cfg.contour.kind);
            const std::string& name = cfg.contour.kind;
            if (name != "l1" && name != "group_lasso" && name != "variance" && name != "variance_aware")
                c.fail("contour.kind", "unsupported kind '" + name +
                                           "' (expected l1, group_lasso, variance or variance_aware)");
            c.count(k, "resolution", "contour", cfg.contour.resolution, 3);
            if (k.contains("w1")) {
                if (!k.at("w1").is_number()) c.fail("contour.w1", "expected a number");
                else cfg.contour.w1 = k.at("w1").get<double>();
            }
            c.number(k, "extent", "contour", cfg.contour.extent, 0.0, true);
        }
    }

    if (doc.contains("output")) {
        const json& o = doc.at("output");
        if (c.object(o, "output", {"dir"})) {
            std::string dir;
            c.string(o, "dir", "output", dir);
            if (!dir.empty()) {
                std::filesystem::path p(dir);
                cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
            }
        }
    }

    if (!c.errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : c.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    cfg.train.penalty = cfg.penalty;
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

}  // namespace vacl
