// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mopd {

namespace {

const Json& require(const Json& j, const std::string& field) {
    if (!j.is_object()) throw ConfigError("expected an object holding field '" + field + "'");
    auto it = j.find(field);
    if (it == j.end()) throw ConfigError("missing required field '" + field + "'");
    return *it;
}

template <class T>
T as(const Json& v, const std::string& field) {
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError("field '" + field + "': expected a number");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("field '" + field + "': expected a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("field '" + field + "': expected a string");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("field '" + field + "': expected an integer");
            if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
                throw ConfigError("field '" + field + "': expected a non-negative integer");
            }
        }
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("field '" + field + "': " + e.what());
    }
}

template <class T>
void optional_field(const Json& j, const std::string& field, T& out) {
    auto it = j.find(field);
    if (it != j.end()) out = as<T>(*it, field);
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError(what + ": unknown field '" + it.key() + "'");
    }
}

Vector vector_from_json(const Json& j, const std::string& field) {
    if (!j.is_array()) throw ConfigError("field '" + field + "': expected an array");
    Vector v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(as<double>(x, field));
    return v;
}

std::vector<int> ints_from_json(const Json& j, const std::string& field) {
    if (!j.is_array()) throw ConfigError("field '" + field + "': expected an array");
    std::vector<int> v;
    for (const auto& x : j) v.push_back(as<int>(x, field));
    return v;
}

Json instances_to_json(const std::vector<Instance>& xs) {
    Json a = Json::array();
    for (const auto& x : xs) a.push_back({{"id", x.id}, {"label", x.label}, {"f", x.f}});
    return a;
}

std::vector<Instance> instances_from_json(const Json& j, const std::string& field) {
    if (!j.is_array()) throw ConfigError("field '" + field + "': expected an array");
    std::vector<Instance> out;
    for (const auto& x : j) {
        Instance inst;
        inst.id = as<std::size_t>(require(x, "id"), field + ".id");
        inst.label = as<int>(require(x, "label"), field + ".label");
        inst.f = vector_from_json(require(x, "f"), field + ".f");
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(m.row(r));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
    const auto rows = as<std::size_t>(require(j, "rows"), field + ".rows");
    const auto cols = as<std::size_t>(require(j, "cols"), field + ".cols");
    const Json& data = require(j, "data");
    if (!data.is_array() || data.size() != rows) throw ConfigError("field '" + field + "': row count mismatch");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        Vector v = vector_from_json(data[r], field + ".data");
        if (v.size() != cols) throw ConfigError("field '" + field + "': column count mismatch");
        m.set_row(r, v);
    }
    return m;
}

Json to_json(const Backbone& b) {
    Json j;
    j["kind"] = "mopd-backbone";
    j["seed"] = b.seed;
    j["d"] = b.text.d();
    j["d_e"] = b.text.d_e();
    j["text_projection"] = to_json(b.text.projection);
    j["image_identity"] = b.image.identity;
    if (!b.image.identity) j["image_map"] = to_json(b.image.map);
    return j;
}

Backbone backbone_from_json(const Json& j) {
    Backbone b;
    b.seed = as<std::uint64_t>(require(j, "seed"), "seed");
    b.text.projection = matrix_from_json(require(j, "text_projection"), "text_projection");
    b.image.identity = as<bool>(require(j, "image_identity"), "image_identity");
    if (!b.image.identity) b.image.map = matrix_from_json(require(j, "image_map"), "image_map");
    return b;
}

Json to_json(const TaskSpec& s) {
    return {{"num_classes", s.num_classes},   {"d", s.d},
            {"d_e", s.d_e},                   {"shots", s.shots},
            {"test_per_class", s.test_per_class}, {"sigma_x", s.sigma_x},
            {"base_fraction", s.base_fraction}, {"seed", s.seed},
            {"cone", s.cone},                 {"clusters", s.clusters},
            {"cluster_spread", s.cluster_spread}, {"max_prototype_cos", s.max_prototype_cos},
            {"text_gap", s.text_gap},         {"token_noise", s.token_noise},
            {"token_scale", s.token_scale}};
}

TaskSpec task_spec_from_json(const Json& j, const std::vector<std::string>& required) {
    if (!j.is_object()) throw ConfigError("task spec must be an object");
    for (const auto& r : required) require(j, r);
    reject_unknown(j, {"num_classes", "d", "d_e", "shots", "test_per_class", "sigma_x", "base_fraction", "seed",
                       "cone", "clusters", "cluster_spread", "max_prototype_cos", "text_gap", "token_noise",
                       "token_scale"},
                   "task spec");
    TaskSpec s;
    optional_field(j, "num_classes", s.num_classes);
    optional_field(j, "d", s.d);
    optional_field(j, "d_e", s.d_e);
    optional_field(j, "shots", s.shots);
    optional_field(j, "test_per_class", s.test_per_class);
    optional_field(j, "sigma_x", s.sigma_x);
    optional_field(j, "base_fraction", s.base_fraction);
    optional_field(j, "seed", s.seed);
    optional_field(j, "cone", s.cone);
    optional_field(j, "clusters", s.clusters);
    optional_field(j, "cluster_spread", s.cluster_spread);
    optional_field(j, "max_prototype_cos", s.max_prototype_cos);
    optional_field(j, "text_gap", s.text_gap);
    optional_field(j, "token_noise", s.token_noise);
    optional_field(j, "token_scale", s.token_scale);
    return s;
}

Json to_json(const SyntheticTask& t) {
    Json j;
    j["kind"] = "mopd-task";
    j["spec"] = to_json(t.spec);
    j["shift"] = t.shift;
    j["base_ids"] = t.base_ids;
    j["new_ids"] = t.new_ids;
    j["prototypes"] = to_json(t.prototypes);
    j["class_tokens"] = to_json(t.vocabulary.tokens);
    j["train"] = instances_to_json(t.train);
    j["test"] = instances_to_json(t.test);
    return j;
}

SyntheticTask task_from_json(const Json& j, const Backbone& backbone) {
    SyntheticTask t;
    t.spec = task_spec_from_json(require(j, "spec"));
    t.backbone = backbone;
    t.shift = as<double>(require(j, "shift"), "shift");
    t.base_ids = ints_from_json(require(j, "base_ids"), "base_ids");
    t.new_ids = ints_from_json(require(j, "new_ids"), "new_ids");
    t.prototypes = matrix_from_json(require(j, "prototypes"), "prototypes");
    t.vocabulary.tokens = matrix_from_json(require(j, "class_tokens"), "class_tokens");
    t.train = instances_from_json(require(j, "train"), "train");
    t.test = instances_from_json(require(j, "test"), "test");
    if (t.vocabulary.tokens.cols() != backbone.text.d_e()) throw ConfigError("task class tokens do not match backbone");
    return t;
}

Json to_json(const TeacherSpec& s) {
    return {{"sigmas", s.sigmas}, {"noisy", s.noisy}, {"rho", s.rho},
            {"expert_factor", s.expert_factor}, {"seed", s.seed}};
}

TeacherSpec teacher_spec_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("teacher spec must be an object");
    reject_unknown(j, {"sigmas", "noisy", "rho", "expert_factor", "seed", "mixture"}, "teacher spec");
    TeacherSpec s;
    if (j.contains("mixture")) s = parse_mixture(as<std::string>(j["mixture"], "mixture"), s);
    if (j.contains("sigmas")) s.sigmas = vector_from_json(j["sigmas"], "sigmas");
    optional_field(j, "noisy", s.noisy);
    optional_field(j, "rho", s.rho);
    optional_field(j, "expert_factor", s.expert_factor);
    optional_field(j, "seed", s.seed);
    return s;
}

Json to_json(const TeacherPool& p) {
    Json teachers = Json::array();
    for (std::size_t t = 0; t < p.size(); ++t) {
        teachers.push_back({{"label", p.labels[t]}, {"noisy", static_cast<bool>(p.noisy[t])},
                            {"table", to_json(p.tables[t])}});
    }
    return {{"kind", "mopd-teacher-pool"}, {"H", p.size()}, {"teachers", teachers}};
}

TeacherPool pool_from_json(const Json& j) {
    TeacherPool p;
    const Json& ts = require(j, "teachers");
    if (!ts.is_array() || ts.empty()) throw ConfigError("field 'teachers': expected a non-empty array");
    for (const auto& t : ts) {
        p.labels.push_back(as<std::string>(require(t, "label"), "teachers.label"));
        p.noisy.push_back(as<bool>(require(t, "noisy"), "teachers.noisy"));
        p.tables.push_back(matrix_from_json(require(t, "table"), "teachers.table"));
    }
    return p;
}

Json to_json(const TrainConfig& c) {
    return {{"alpha", c.alpha},
            {"beta", c.beta},
            {"T", c.top_t},
            {"H", c.pool_size},
            {"M", c.prompt_length},
            {"tau", c.tau},
            {"lr", c.lr},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"variant", to_string(c.variant)},
            {"transfer", to_string(c.transfer)},
            {"kl_direction", to_string(c.kl_direction)},
            {"mean_reduction", c.mean_reduction},
            {"cosine_decay", c.cosine_decay},
            {"sipd_teacher", c.sipd_teacher},
            {"label_space", to_string(c.label_space)},
            {"prompt_init_std", c.prompt_init_std},
            {"gate_init_std", c.gate_init_std},
            {"abort_threshold", c.abort_threshold}};
}

TrainConfig train_config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("train config must be an object");
    reject_unknown(j, {"alpha", "beta", "T", "H", "M", "tau", "lr", "epochs", "batch_size", "seed", "variant",
                       "transfer", "kl_direction", "mean_reduction", "cosine_decay", "sipd_teacher",
                       "label_space", "prompt_init_std", "gate_init_std", "abort_threshold"},
                   "train config");
    TrainConfig c;
    optional_field(j, "alpha", c.alpha);
    optional_field(j, "beta", c.beta);
    optional_field(j, "T", c.top_t);
    optional_field(j, "H", c.pool_size);
    optional_field(j, "M", c.prompt_length);
    optional_field(j, "tau", c.tau);
    optional_field(j, "lr", c.lr);
    optional_field(j, "epochs", c.epochs);
    optional_field(j, "batch_size", c.batch_size);
    optional_field(j, "seed", c.seed);
    optional_field(j, "mean_reduction", c.mean_reduction);
    optional_field(j, "cosine_decay", c.cosine_decay);
    optional_field(j, "sipd_teacher", c.sipd_teacher);
    optional_field(j, "prompt_init_std", c.prompt_init_std);
    optional_field(j, "gate_init_std", c.gate_init_std);
    optional_field(j, "abort_threshold", c.abort_threshold);
    try {
        if (j.contains("variant")) c.variant = variant_from_string(as<std::string>(j["variant"], "variant"));
        if (j.contains("transfer")) c.transfer = transfer_kind_from_string(as<std::string>(j["transfer"], "transfer"));
        if (j.contains("kl_direction")) {
            c.kl_direction = kl_direction_from_string(as<std::string>(j["kl_direction"], "kl_direction"));
        }
        if (j.contains("label_space")) {
            c.label_space = label_space_from_string(as<std::string>(j["label_space"], "label_space"));
        }
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    return c;
}

Json to_json(const GatingNetwork& g) { return {{"T", g.top_t}, {"W_g", to_json(g.w)}}; }

GatingNetwork gating_from_json(const Json& j) {
    GatingNetwork g;
    g.top_t = as<std::size_t>(require(j, "T"), "gate.T");
    g.w = matrix_from_json(require(j, "W_g"), "gate.W_g");
    if (g.top_t < 1 || g.top_t > g.w.cols()) throw ConfigError("field 'gate.T': out of range");
    return g;
}

Json to_json(const Checkpoint& c) {
    Json j;
    j["kind"] = "mopd-checkpoint";
    j["soft_prompt"] = to_json(c.prompt.vectors);
    j["tau"] = c.tau;
    j["gate"] = c.gate ? to_json(*c.gate) : Json(nullptr);
    j["backbone_hash"] = c.backbone_hash;
    j["task_hash"] = c.task_hash;
    j["pool_hash"] = c.pool_hash;
    j["metadata"] = {{"variant", c.variant}, {"seed", c.seed}, {"steps", c.steps}, {"final_loss", c.final_loss}};
    return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
    Checkpoint c;
    c.prompt.vectors = matrix_from_json(require(j, "soft_prompt"), "soft_prompt");
    c.tau = as<double>(require(j, "tau"), "tau");
    if (j.contains("gate") && !j["gate"].is_null()) c.gate = gating_from_json(j["gate"]);
    c.backbone_hash = as<std::string>(require(j, "backbone_hash"), "backbone_hash");
    c.task_hash = as<std::string>(require(j, "task_hash"), "task_hash");
    c.pool_hash = as<std::string>(require(j, "pool_hash"), "pool_hash");
    const Json& m = require(j, "metadata");
    c.variant = as<std::string>(require(m, "variant"), "metadata.variant");
    c.seed = as<std::uint64_t>(require(m, "seed"), "metadata.seed");
    c.steps = as<std::size_t>(require(m, "steps"), "metadata.steps");
    c.final_loss = as<double>(require(m, "final_loss"), "metadata.final_loss");
    return c;
}

Json to_json(const EvalReport& r) {
    Json per = Json::array();
    for (const auto& [c, a] : r.per_class) per.push_back({{"class", c}, {"acc", a}});
    Json j;
    j["protocol"] = r.protocol;
    j["acc_base"] = r.acc_base;
    j["acc_new"] = r.acc_new;
    j["h"] = r.h;
    j["percent"] = {{"base", format_percent(r.acc_base)},
                    {"new", format_percent(r.acc_new)},
                    {"h", format_percent(r.h)}};
    j["per_class"] = per;
    j["gate_stats"] = r.gate_stats;
    j["config_hash"] = r.config_hash;
    return j;
}

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string content_hash(const Json& j) { return content_hash(j.dump()); }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json_file(const std::filesystem::path& p) {
    const std::string text = read_text_file(p);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
    if (!out) throw Error("write failed for " + p.string());
}

std::string training_log_csv(const std::vector<LogRow>& rows) {
    std::string s = "epoch,step,ce,mpd,mps,total,mean_gate_entropy\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.step, r.loss.ce,
                      r.loss.mpd, r.loss.mps, r.loss.total, r.mean_gate_entropy);
        s += buf;
    }
    return s;
}

} // namespace mopd
