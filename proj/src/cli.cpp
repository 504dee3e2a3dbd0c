// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "mopd/evalharness.hpp"
#include "mopd/serialize.hpp"

namespace fs = std::filesystem;

namespace mopd {

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct TaskBundle {
    fs::path dir;
    SyntheticTask task;
    std::string task_hash;
    std::string backbone_hash;
};

struct PoolBundle {
    fs::path path;
    TeacherPool pool;
    std::string hash;
};

fs::path output_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return env;
    return "mopd-out";
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(flag + ": not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void check_collision(const fs::path& p, bool force) {
    if (fs::exists(p) && !force) {
        throw UsageError(p.string() + " already exists (use --force to overwrite)");
    }
}

Json file_entry(const fs::path& p, const std::string& hash) { return {{"path", p.string()}, {"hash", hash}}; }

TaskBundle load_task(const fs::path& arg) {
    const fs::path dir = fs::is_regular_file(arg) ? arg.parent_path() : arg;
    if (!fs::exists(dir / "task.json") || !fs::exists(dir / "backbone.json")) {
        throw UsageError("task directory " + dir.string() + " lacks task.json/backbone.json");
    }
    const Json bj = read_json_file(dir / "backbone.json");
    const Json tj = read_json_file(dir / "task.json");
    TaskBundle b;
    b.dir = dir;
    b.backbone_hash = content_hash(bj);
    b.task_hash = content_hash(tj);
    if (fs::exists(dir / "manifest.json")) {
        const Json m = read_json_file(dir / "manifest.json");
        const auto& outs = m.at("outputs");
        if (outs.contains("task") && outs["task"].at("hash") != b.task_hash) {
            throw Error("hash validation failed for " + (dir / "task.json").string());
        }
        if (outs.contains("backbone") && outs["backbone"].at("hash") != b.backbone_hash) {
            throw Error("hash validation failed for " + (dir / "backbone.json").string());
        }
    }
    b.task = task_from_json(tj, backbone_from_json(bj));
    return b;
}

PoolBundle load_pool(const fs::path& p, const TaskBundle& task) {
    if (!fs::exists(p)) throw UsageError("pool file " + p.string() + " does not exist");
    const Json j = read_json_file(p);
    PoolBundle b;
    b.path = p;
    b.hash = content_hash(j);
    if (j.contains("task_hash") && j["task_hash"] != task.task_hash) throw Error("pool/task mismatch");
    b.pool = pool_from_json(j);
    if (b.pool.tables.front().rows() != task.task.num_classes() ||
        b.pool.tables.front().cols() != task.task.prototypes.cols()) {
        throw Error("pool/task mismatch");
    }
    return b;
}

TrainConfig load_config(const std::string& path, bool& has_h) {
    if (path.empty()) {
        has_h = false;
        return TrainConfig{};
    }
    const Json j = read_json_file(path);
    has_h = j.is_object() && j.contains("H");
    return train_config_from_json(j);
}

void fit_pool_size(TrainConfig& cfg, bool has_h, const TeacherPool* pool) {
    if (pool == nullptr) return;
    if (!has_h) cfg.pool_size = pool->size();
    if (cfg.pool_size > pool->size()) throw UsageError("config H exceeds the pool size");
    cfg.validate();
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const std::string& spec_path, const std::string& out_flag, std::optional<std::uint64_t> seed,
                 const std::string& mixture, bool force, std::ostream& out) {
    TaskSpec ts;
    TeacherSpec tspec;
    Json spec_json = Json::object();
    if (!spec_path.empty()) {
        spec_json = read_json_file(spec_path);
        if (!spec_json.is_object()) throw ConfigError("spec file must hold an object");
        for (auto it = spec_json.begin(); it != spec_json.end(); ++it) {
            if (it.key() != "seed" && it.key() != "task" && it.key() != "teachers") {
                throw ConfigError("spec: unknown field '" + it.key() + "'");
            }
        }
        if (!spec_json.contains("seed")) throw ConfigError("missing required field 'seed'");
        if (!spec_json["seed"].is_number_unsigned()) throw ConfigError("field 'seed': expected a non-negative integer");
        if (spec_json.contains("task")) ts = task_spec_from_json(spec_json["task"]);
        if (spec_json.contains("teachers")) tspec = teacher_spec_from_json(spec_json["teachers"]);
        ts.seed = spec_json["seed"].get<std::uint64_t>();
    }
    if (seed) ts.seed = *seed;
    if (!mixture.empty()) tspec = parse_mixture(mixture, tspec);

    const fs::path dir = out_flag.empty() ? output_root("") / "data" / ("task-s" + std::to_string(ts.seed))
                                          : fs::path(out_flag);
    check_collision(dir / "task.json", force);

    const auto t0 = std::chrono::steady_clock::now();
    const SyntheticTask task = generate_task(ts);
    const TeacherPool pool = generate_teacher_pool(task, tspec);
    const Json bj = to_json(task.backbone);
    const Json tj = to_json(task);
    Json pj = to_json(pool);
    pj["task_hash"] = content_hash(tj);
    pj["spec"] = to_json(tspec);
    pj["mixture"] = mixture_label(tspec);
    const Json resolved = {{"seed", ts.seed}, {"task", to_json(ts)}, {"teachers", to_json(tspec)}};

    write_text_file(dir / "backbone.json", dump(bj));
    write_text_file(dir / "task.json", dump(tj));
    write_text_file(dir / "pool.json", dump(pj));
    write_text_file(dir / "spec.json", dump(resolved));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Json manifest = {{"command", "gen-data"},
                     {"resolved_config", resolved},
                     {"inputs", spec_path.empty() ? Json::object() : Json{{"spec", spec_path}}},
                     {"outputs",
                      {{"backbone", file_entry(dir / "backbone.json", content_hash(bj))},
                       {"task", file_entry(dir / "task.json", content_hash(tj))},
                       {"pool", file_entry(dir / "pool.json", content_hash(pj))}}},
                     {"wall_clock_seconds", secs}};
    write_text_file(dir / "manifest.json", dump(manifest));
    out << "C=" << task.num_classes() << " d=" << task.prototypes.cols() << " H=" << pool.size()
        << " base=" << task.base_ids.size() << " new=" << task.new_ids.size()
        << " train=" << task.train.size() << " test=" << task.test.size() << " -> " << dir.string() << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------- train

std::string default_run_id(const TrainConfig& cfg, const std::string& task_hash) {
    std::string v = to_string(cfg.variant);
    for (auto& ch : v) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const std::string h = content_hash(to_json(cfg).dump() + task_hash);
    return v + "-s" + std::to_string(cfg.seed) + "-" + h.substr(0, 8);
}

int cmd_train(const std::string& config_path, const std::string& task_arg, const std::string& pool_arg,
              const std::string& out_flag, const std::string& run_id_flag, std::optional<std::uint64_t> seed,
              bool force, std::ostream& out, std::ostream& err) {
    bool has_h = false;
    TrainConfig cfg = load_config(config_path, has_h);
    if (seed) cfg.seed = *seed;
    if (task_arg.empty()) throw UsageError("train requires --task");
    if (uses_pool(cfg.variant) && pool_arg.empty()) {
        throw UsageError("variant " + to_string(cfg.variant) + " requires --pool");
    }
    const TaskBundle tb = load_task(task_arg);
    std::optional<PoolBundle> pb;
    if (!pool_arg.empty()) pb = load_pool(pool_arg, tb);
    TeacherPool pool;
    if (pb) {
        fit_pool_size(cfg, has_h, &pb->pool);
        pool = pb->pool.size() == cfg.pool_size ? pb->pool : pb->pool.prefix(cfg.pool_size);
    }

    const std::string run_id = run_id_flag.empty() ? default_run_id(cfg, tb.task_hash) : run_id_flag;
    const fs::path run_dir = output_root(out_flag) / "runs" / run_id;
    check_collision(run_dir / "checkpoint.json", force);

    const auto t0 = std::chrono::steady_clock::now();
    const Json cj = to_json(cfg);
    write_text_file(run_dir / "config.json", dump(cj));
    const std::vector<Instance> data = base_training_split(tb.task);
    TrainState state;
    try {
        state = train(cfg, data, tb.task.backbone.text, tb.task.vocabulary, pb ? &pool : nullptr,
                      training_label_space(cfg, tb.task));
    } catch (const NumericalAbort& e) {
        const fs::path dump_path = run_dir / "abort_dump.json";
        const auto& s = e.state();
        Json d = {{"error", e.what()},
                  {"epoch", s.epoch},
                  {"step", s.step},
                  {"loss", {{"ce", e.loss().ce}, {"mpd", e.loss().mpd}, {"mps", e.loss().mps}, {"total", e.loss().total}}},
                  {"soft_prompt", to_json(s.model.prompt.vectors)},
                  {"gate", to_json(s.gate)},
                  {"config", cj}};
        write_text_file(dump_path, d.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
        write_text_file(run_dir / "train_log.csv", training_log_csv(s.history));
        err << "numerical abort: " << e.what() << "\ndiagnostic dump: " << dump_path.string() << "\n";
        return kExitNumerical;
    }
    Checkpoint ck = make_checkpoint(state, cfg);
    ck.backbone_hash = tb.backbone_hash;
    ck.task_hash = tb.task_hash;
    ck.pool_hash = pb ? pb->hash : "";
    const Json ckj = to_json(ck);
    const std::string log = training_log_csv(state.history);
    write_text_file(run_dir / "checkpoint.json", dump(ckj));
    write_text_file(run_dir / "train_log.csv", log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Json inputs = {{"task", file_entry(tb.dir / "task.json", tb.task_hash)},
                   {"backbone", file_entry(tb.dir / "backbone.json", tb.backbone_hash)}};
    if (pb) inputs["pool"] = file_entry(pb->path, pb->hash);
    if (!config_path.empty()) inputs["config"] = {{"path", config_path}};
    Json manifest = {{"run_id", run_id},
                     {"command", "train"},
                     {"resolved_config", cj},
                     {"inputs", inputs},
                     {"outputs",
                      {{"config", file_entry(run_dir / "config.json", content_hash(cj))},
                       {"checkpoint", file_entry(run_dir / "checkpoint.json", content_hash(ckj))},
                       {"train_log", file_entry(run_dir / "train_log.csv", content_hash(log))}}},
                     {"wall_clock_seconds", secs}};
    write_text_file(run_dir / "manifest.json", dump(manifest));
    out << "run " << run_id << " steps=" << state.step << " final_loss=" << fmt(ck.final_loss) << " -> "
        << run_dir.string() << "\n";
    return kExitOk;
}

// -------------------------------------------------------------------- eval

fs::path resolve_run_dir(const std::string& run_arg) {
    fs::path p(run_arg);
    if (fs::is_regular_file(p)) return p.parent_path();
    return p;
}

void update_manifest(const fs::path& run_dir, const std::string& key, const fs::path& file, const std::string& hash) {
    const fs::path mp = run_dir / "manifest.json";
    if (!fs::exists(mp)) return;
    Json m = read_json_file(mp);
    m["outputs"][key] = file_entry(file, hash);
    write_text_file(mp, dump(m));
}

int cmd_eval(const std::string& run_arg, const std::string& task_arg, const std::string& pool_arg,
             const std::string& protocol, const std::string& shifts_s, const std::string& shots_s,
             const std::string& mixtures_s, std::size_t seeds, std::ostream& out) {
    if (run_arg.empty() || task_arg.empty()) throw UsageError("eval requires --run and --task");
    const fs::path run_dir = resolve_run_dir(run_arg);
    const Checkpoint ck = checkpoint_from_json(read_json_file(run_dir / "checkpoint.json"));
    const TaskBundle tb = load_task(task_arg);
    if (ck.task_hash != tb.task_hash || ck.backbone_hash != tb.backbone_hash) throw Error("checkpoint/task mismatch");
    Json cfg_json = fs::exists(run_dir / "config.json") ? read_json_file(run_dir / "config.json") : to_json(TrainConfig{});
    const std::string cfg_hash = content_hash(cfg_json);

    if (protocol == "base-to-new") {
        EvalReport r = evaluate_base_to_new(ck, tb.task);
        r.config_hash = cfg_hash;
        const Json rj = to_json(r);
        write_text_file(run_dir / "report.json", dump(rj));
        update_manifest(run_dir, "report", run_dir / "report.json", content_hash(rj));
        out << "base " << format_percent(r.acc_base) << " new " << format_percent(r.acc_new) << " H "
            << format_percent(r.h) << "\n";
        return kExitOk;
    }
    if (protocol == "domain-shift") {
        const auto rows = evaluate_domain_shift(ck, tb.task, parse_list(shifts_s, "--shifts"));
        Json rj = {{"protocol", "domain-shift"}, {"config_hash", cfg_hash}, {"rows", Json::array()}};
        std::string csv = "shift,acc\n";
        for (const auto& r : rows) {
            rj["rows"].push_back({{"shift", r.shift}, {"acc", r.acc}, {"percent", format_percent(r.acc)}});
            csv += fmt(r.shift) + "," + fmt(r.acc) + "\n";
            out << "shift " << r.shift << " acc " << format_percent(r.acc) << "\n";
        }
        write_text_file(run_dir / "report_domain_shift.json", dump(rj));
        write_text_file(run_dir / "domain_shift.csv", csv);
        return kExitOk;
    }
    bool has_h = false;
    TrainConfig cfg = train_config_from_json(cfg_json);
    has_h = true;
    if (protocol == "few-shot") {
        std::vector<std::size_t> shots;
        for (double s : parse_list(shots_s, "--shots")) {
            if (s < 1 || s != static_cast<double>(static_cast<std::size_t>(s))) throw UsageError("--shots: positive integers");
            shots.push_back(static_cast<std::size_t>(s));
        }
        std::optional<PoolBundle> pb;
        if (uses_pool(cfg.variant)) {
            if (pool_arg.empty()) throw UsageError("few-shot with variant " + to_string(cfg.variant) + " requires --pool");
            pb = load_pool(pool_arg, tb);
            fit_pool_size(cfg, has_h, &pb->pool);
        }
        const auto rows = evaluate_few_shot(cfg, tb.task, pb ? &pb->pool : nullptr, shots, seeds);
        Json rj = {{"protocol", "few-shot"}, {"config_hash", cfg_hash}, {"seeds", seeds}, {"rows", Json::array()}};
        std::string csv = "shots,acc,std\n";
        for (const auto& r : rows) {
            rj["rows"].push_back({{"shots", r.shots}, {"acc", r.mean_acc}, {"std", r.std_acc},
                                  {"percent", format_percent(r.mean_acc)}});
            csv += std::to_string(r.shots) + "," + fmt(r.mean_acc) + "," + fmt(r.std_acc) + "\n";
            out << "shots " << r.shots << " acc " << format_percent(r.mean_acc) << "\n";
        }
        write_text_file(run_dir / "report_few_shot.json", dump(rj));
        write_text_file(run_dir / "few_shot.csv", csv);
        return kExitOk;
    }
    if (protocol == "robustness") {
        std::vector<TeacherSpec> mixes;
        for (const auto& m : split_words(mixtures_s)) mixes.push_back(parse_mixture(m));
        if (mixes.empty()) throw UsageError("--mixtures: empty list");
        const auto rows = evaluate_robustness(cfg, tb.task, mixes, seeds);
        std::string csv = "mixture,variant,acc_base,acc_new,h,noisy_mass_initial,noisy_mass_final\n";
        for (const auto& mix : mixes) {
            const std::string label = mixture_label(mix);
            Json rj = {{"protocol", "robustness"}, {"mixture", label}, {"config_hash", cfg_hash},
                       {"seeds", seeds}, {"variants", Json::array()}};
            for (const auto& r : rows) {
                if (r.mixture != label) continue;
                rj["variants"].push_back({{"variant", r.variant},
                                          {"acc_base", r.acc_base},
                                          {"acc_new", r.acc_new},
                                          {"h", r.h},
                                          {"percent",
                                           {{"base", format_percent(r.acc_base)},
                                            {"new", format_percent(r.acc_new)},
                                            {"h", format_percent(r.h)}}},
                                          {"noisy_mass_initial", r.noisy_mass_initial},
                                          {"noisy_mass_final", r.noisy_mass_final}});
                csv += r.mixture + "," + r.variant + "," + fmt(r.acc_base) + "," + fmt(r.acc_new) + "," + fmt(r.h) +
                       "," + fmt(r.noisy_mass_initial) + "," + fmt(r.noisy_mass_final) + "\n";
                out << label << " " << r.variant << " base " << format_percent(r.acc_base) << " new "
                    << format_percent(r.acc_new) << " H " << format_percent(r.h) << "\n";
            }
            write_text_file(run_dir / ("report_robustness_" + label + ".json"), dump(rj));
        }
        write_text_file(run_dir / "robustness.csv", csv);
        return kExitOk;
    }
    throw UsageError("unknown protocol: " + protocol);
}

// ------------------------------------------------------------ sweep/ablate

struct ReplicateResult {
    bool ok = true;
    std::string error;
    EvalReport report;
};

ReplicateResult run_replicate(const TrainConfig& cfg, const SyntheticTask& task, const TeacherPool* pool) {
    ReplicateResult r;
    try {
        const TeacherPool* p = uses_pool(cfg.variant) ? pool : nullptr;
        if (uses_pool(cfg.variant) && p == nullptr) throw UsageError("variant requires a pool");
        std::optional<TeacherPool> prefix;
        if (p != nullptr && p->size() != cfg.pool_size) {
            prefix = p->prefix(cfg.pool_size);
            p = &*prefix;
        }
        r.report = run_base_to_new(cfg, task, p).report;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

std::string csv_escape(const std::string& s) {
    std::string o = "\"";
    for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
    return o + "\"";
}

int cmd_sweep(const std::string& axis, const std::string& values_s, const std::string& config_path,
              const std::string& task_arg, const std::string& pool_arg, std::size_t seeds,
              const std::string& out_flag, bool force, std::ostream& out) {
    if (axis != "alpha" && axis != "beta" && axis != "T" && axis != "H_pool") {
        throw UsageError("--axis must be one of alpha, beta, T, H_pool");
    }
    const std::vector<double> values = parse_list(values_s, "--values");
    bool has_h = false;
    TrainConfig base = load_config(config_path, has_h);
    if (task_arg.empty()) throw UsageError("sweep requires --task");
    const TaskBundle tb = load_task(task_arg);
    std::optional<PoolBundle> pb;
    if (!pool_arg.empty()) pb = load_pool(pool_arg, tb);
    if (uses_pool(base.variant) && !pb) throw UsageError("variant " + to_string(base.variant) + " requires --pool");
    if (pb) fit_pool_size(base, has_h, &pb->pool);
    for (double v : values) {
        if (axis == "T" && (v < 1 || v > static_cast<double>(base.pool_size))) {
            throw UsageError("T sweep value " + fmt(v) + " outside [1, H=" + std::to_string(base.pool_size) + "]");
        }
        if (axis == "H_pool" && (v < 1 || !pb || v > static_cast<double>(pb->pool.size()))) {
            throw UsageError("H_pool sweep value " + fmt(v) + " outside the pool");
        }
        if (axis == "alpha" && !(v >= 0.0 && v <= 1.0)) throw UsageError("alpha sweep value outside [0, 1]");
        if (axis == "beta" && !(v >= 0.0)) throw UsageError("beta sweep value must be non-negative");
    }
    const std::string tag = axis + "-" + content_hash(to_json(base).dump() + values_s + tb.task_hash).substr(0, 8);
    const fs::path dir = output_root(out_flag) / "sweeps" / tag;
    check_collision(dir / "summary.csv", force);

    std::string raw = "value,seed,status,acc_base,acc_new,h,error\n";
    std::string summary = "value,acc_base,acc_new,h,h_std,n\n";
    for (double v : values) {
        std::vector<EvalReport> reps;
        for (std::size_t s = 0; s < seeds; ++s) {
            TrainConfig c = base;
            c.seed = base.seed + s;
            if (axis == "alpha") c.alpha = v;
            if (axis == "beta") c.beta = v;
            if (axis == "T") c.top_t = static_cast<std::size_t>(v);
            if (axis == "H_pool") {
                c.pool_size = static_cast<std::size_t>(v);
                c.top_t = std::min(c.top_t, c.pool_size);
                if (c.sipd_teacher >= c.pool_size) c.sipd_teacher = 0;
            }
            const ReplicateResult r = run_replicate(c, tb.task, pb ? &pb->pool : nullptr);
            raw += fmt(v) + "," + std::to_string(c.seed) + "," + (r.ok ? "ok" : "error") + "," +
                   (r.ok ? fmt(r.report.acc_base) + "," + fmt(r.report.acc_new) + "," + fmt(r.report.h) : ",,") + "," +
                   csv_escape(r.error) + "\n";
            if (r.ok) reps.push_back(r.report);
        }
        const SummaryRow s = summarize(fmt(v), reps);
        summary += fmt(v) + "," + fmt(s.acc_base) + "," + fmt(s.acc_new) + "," + fmt(s.h) + "," + fmt(s.h_std) + "," +
                   std::to_string(s.n) + "\n";
        out << axis << "=" << fmt(v) << " base " << format_percent(s.acc_base) << " new "
            << format_percent(s.acc_new) << " H " << format_percent(s.h) << " (n=" << s.n << ")\n";
    }
    write_text_file(dir / "raw.csv", raw);
    write_text_file(dir / "summary.csv", summary);
    write_text_file(dir / "config.json", dump({{"axis", axis}, {"values", values}, {"seeds", seeds},
                                               {"base_config", to_json(base)}, {"task_hash", tb.task_hash}}));
    out << "-> " << dir.string() << "\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& task_arg, const std::string& pool_arg,
               std::size_t seeds, bool transfers, const std::string& out_flag, bool force, std::ostream& out) {
    bool has_h = false;
    TrainConfig base = load_config(config_path, has_h);
    if (task_arg.empty() || pool_arg.empty()) throw UsageError("ablate requires --task and --pool");
    const TaskBundle tb = load_task(task_arg);
    const PoolBundle pb = load_pool(pool_arg, tb);
    fit_pool_size(base, has_h, &pb.pool);
    const std::string tag = content_hash(to_json(base).dump() + tb.task_hash + pb.hash).substr(0, 8);
    const fs::path dir = output_root(out_flag) / "ablations" / tag;
    check_collision(dir / "summary.csv", force);

    struct Arm {
        std::string name;
        Variant variant;
        TransferKind transfer;
    };
    std::vector<Arm> arms = {{"CE_ONLY", Variant::CE_ONLY, TransferKind::KL},
                             {"SIPD", Variant::SIPD, TransferKind::KL},
                             {"MOPD_R", Variant::MOPD_R, TransferKind::KL},
                             {"MOPD_NO_MPS", Variant::MOPD_NO_MPS, TransferKind::KL},
                             {"MOPD", Variant::MOPD, TransferKind::KL}};
    if (transfers) {
        arms.push_back({"MOPD-L1", Variant::MOPD, TransferKind::L1});
        arms.push_back({"MOPD-COSINE", Variant::MOPD, TransferKind::COSINE});
        arms.push_back({"MOPD-MMD", Variant::MOPD, TransferKind::MMD});
    }
    std::string raw = "arm,seed,status,acc_base,acc_new,h,error\n";
    std::string summary = "arm,acc_base,acc_new,h,h_std,n\n";
    Json report = {{"protocol", "ablation"}, {"config_hash", content_hash(to_json(base))}, {"seeds", seeds},
                   {"arms", Json::array()}};
    for (const Arm& arm : arms) {
        std::vector<EvalReport> reps;
        for (std::size_t s = 0; s < seeds; ++s) {
            TrainConfig c = base;
            c.variant = arm.variant;
            c.transfer = arm.transfer;
            c.seed = base.seed + s;
            const ReplicateResult r = run_replicate(c, tb.task, &pb.pool);
            raw += arm.name + "," + std::to_string(c.seed) + "," + (r.ok ? "ok" : "error") + "," +
                   (r.ok ? fmt(r.report.acc_base) + "," + fmt(r.report.acc_new) + "," + fmt(r.report.h) : ",,") + "," +
                   csv_escape(r.error) + "\n";
            if (r.ok) reps.push_back(r.report);
        }
        const SummaryRow s = summarize(arm.name, reps);
        summary += arm.name + "," + fmt(s.acc_base) + "," + fmt(s.acc_new) + "," + fmt(s.h) + "," + fmt(s.h_std) +
                   "," + std::to_string(s.n) + "\n";
        report["arms"].push_back({{"arm", arm.name},
                                  {"acc_base", s.acc_base},
                                  {"acc_new", s.acc_new},
                                  {"h", s.h},
                                  {"h_std", s.h_std},
                                  {"n", s.n},
                                  {"percent",
                                   {{"base", format_percent(s.acc_base)},
                                    {"new", format_percent(s.acc_new)},
                                    {"h", format_percent(s.h)}}}});
        out << arm.name << " base " << format_percent(s.acc_base) << " new " << format_percent(s.acc_new) << " H "
            << format_percent(s.h) << " (n=" << s.n << ")\n";
    }
    write_text_file(dir / "raw.csv", raw);
    write_text_file(dir / "summary.csv", summary);
    write_text_file(dir / "report.json", dump(report));
    out << "-> " << dir.string() << "\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mixture-of-prompts distillation lab", "mopd"};
    app.require_subcommand(1);

    std::string out_dir, spec_path, config_path, task_path, pool_path, run_id, run_path;
    std::string protocol = "base-to-new", axis, values, shifts = "0,0.2,0.4", shots = "1,2,4,8,16";
    std::string mixtures = "12T,12T+12N,24N", mixture;
    std::uint64_t seed = 0;
    std::size_t seeds = 3;
    bool force = false, transfers = false;

    auto add_common = [&](CLI::App* sc, bool with_seeds) {
        sc->add_option("--out", out_dir, "Output directory (default: $" + std::string(kOutputRootEnv) + ")");
        sc->add_option("--seed", seed, "Seed override");
        sc->add_flag("--force", force, "Overwrite existing outputs");
        if (with_seeds) sc->add_option("--seeds", seeds, "Replication count")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic task, backbone and teacher pool");
    gen->add_option("--spec", spec_path, "Spec file (JSON)");
    gen->add_option("--mixture", mixture, "Teacher mixture label, e.g. 12T+12N");
    add_common(gen, false);

    auto* tr = app.add_subcommand("train", "Train a soft prompt on the base split");
    tr->add_option("--config", config_path, "Train config (JSON)");
    tr->add_option("--task", task_path, "Task directory from gen-data")->required();
    tr->add_option("--pool", pool_path, "Teacher pool file");
    tr->add_option("--run-id", run_id, "Run id (default: derived from config)");
    add_common(tr, false);

    auto* ev = app.add_subcommand("eval", "Evaluate a trained run");
    ev->add_option("--run", run_path, "Run directory or checkpoint file")->required();
    ev->add_option("--task", task_path, "Task directory")->required();
    ev->add_option("--pool", pool_path, "Teacher pool file (few-shot with distillation)");
    ev->add_option("--protocol", protocol, "base-to-new | domain-shift | few-shot | robustness");
    ev->add_option("--shifts", shifts, "Domain shifts, comma separated");
    ev->add_option("--shots", shots, "Shot counts, comma separated");
    ev->add_option("--mixtures", mixtures, "Pool mixtures, comma separated");
    add_common(ev, true);

    auto* sw = app.add_subcommand("sweep", "Hyperparameter sweep");
    sw->add_option("--axis", axis, "alpha | beta | T | H_pool")->required();
    sw->add_option("--values", values, "Comma-separated values")->required();
    sw->add_option("--config", config_path, "Base train config");
    sw->add_option("--task", task_path, "Task directory")->required();
    sw->add_option("--pool", pool_path, "Teacher pool file");
    add_common(sw, true);

    auto* ab = app.add_subcommand("ablate", "Run the variant set on one task");
    ab->add_option("--config", config_path, "Base train config");
    ab->add_option("--task", task_path, "Task directory")->required();
    ab->add_option("--pool", pool_path, "Teacher pool file")->required();
    ab->add_flag("--transfer-variants", transfers, "Also run the L1 / cosine / MMD transfer losses");
    add_common(ab, true);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    const bool seed_given = (gen->parsed() && gen->count("--seed")) || (tr->parsed() && tr->count("--seed"));
    std::optional<std::uint64_t> seed_opt;
    if (seed_given) seed_opt.emplace(seed);

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir, seed_opt, mixture, force, out);
        if (tr->parsed()) {
            return cmd_train(config_path, task_path, pool_path, out_dir, run_id, seed_opt, force, out, err);
        }
        if (ev->parsed()) return cmd_eval(run_path, task_path, pool_path, protocol, shifts, shots, mixtures, seeds, out);
        if (sw->parsed()) return cmd_sweep(axis, values, config_path, task_path, pool_path, seeds, out_dir, force, out);
        if (ab->parsed()) return cmd_ablate(config_path, task_path, pool_path, seeds, transfers, out_dir, force, out);
    } catch (const NumericalAbort& e) {
        err << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace mopd
