// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/evalharness.hpp"

#include <cmath>
#include <cstdio>

namespace mopd {

double harmonic_mean(double a, double b, double scale) {
    if (!(a >= 0.0 && a <= scale) || !(b >= 0.0 && b <= scale)) {
        throw Error("accuracy out of range");
    }
    if (a + b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

std::vector<Instance> base_training_split(const SyntheticTask& task, AccessAudit* audit, std::size_t k) {
    std::vector<Instance> out = training_subset(task, task.base_ids, k);
    if (audit != nullptr) {
        for (const Instance& inst : out) {
            if (task.is_base(inst.label)) {
                ++audit->base_train_reads;
            } else {
                ++audit->new_train_reads;
            }
        }
    }
    return out;
}

std::vector<int> training_label_space(const TrainConfig& cfg, const SyntheticTask& task) {
    if (cfg.label_space == LabelSpace::BASE) return task.base_ids;
    return {};
}

namespace {

double split_accuracy(const StudentTable& table, const std::vector<Instance>& test,
                      std::vector<std::pair<int, double>>& per_class) {
    std::vector<std::size_t> hit(table.classes.size(), 0), tot(table.classes.size(), 0);
    std::size_t correct = 0, n = 0;
    for (const Instance& inst : test) {
        std::size_t slot = table.classes.size();
        for (std::size_t i = 0; i < table.classes.size(); ++i) {
            if (table.classes[i] == inst.label) slot = i;
        }
        if (slot == table.classes.size()) continue;
        const bool ok = predict(table, inst.f) == inst.label;
        ++tot[slot];
        ++n;
        if (ok) {
            ++hit[slot];
            ++correct;
        }
    }
    for (std::size_t i = 0; i < table.classes.size(); ++i) {
        per_class.emplace_back(table.classes[i],
                               tot[i] ? static_cast<double>(hit[i]) / static_cast<double>(tot[i]) : 0.0);
    }
    return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

} // namespace

EvalReport evaluate_base_to_new(const Checkpoint& ck, const SyntheticTask& task, AccessAudit* audit) {
    if (task.base_ids.empty() || task.new_ids.empty()) throw Error("label-space mismatch");
    const StudentModel model = student_from_checkpoint(ck, task.backbone.text, task.vocabulary);
    EvalReport r;
    const StudentTable base = build_student_table(model, task.base_ids);
    const StudentTable fresh = build_student_table(model, task.new_ids);
    r.acc_base = split_accuracy(base, test_subset(task, task.base_ids), r.per_class);
    r.acc_new = split_accuracy(fresh, test_subset(task, task.new_ids), r.per_class);
    r.h = harmonic_mean(r.acc_base, r.acc_new);
    if (ck.gate) r.gate_stats = mean_gate_weights(*ck.gate, base_training_split(task, audit));
    return r;
}

std::vector<int> base_to_new_predictions(const Checkpoint& ck, const SyntheticTask& task) {
    const StudentModel model = student_from_checkpoint(ck, task.backbone.text, task.vocabulary);
    const StudentTable base = build_student_table(model, task.base_ids);
    const StudentTable fresh = build_student_table(model, task.new_ids);
    std::vector<int> out;
    out.reserve(task.test.size());
    for (const Instance& inst : task.test) {
        out.push_back(predict(task.is_base(inst.label) ? base : fresh, inst.f));
    }
    return out;
}

RunOutcome run_base_to_new(const TrainConfig& cfg, const SyntheticTask& task, const TeacherPool* pool,
                           AccessAudit* audit) {
    const std::vector<Instance> data = base_training_split(task, audit);
    const std::vector<int> classes = training_label_space(cfg, task);
    RunOutcome out;
    if (uses_gate(cfg.variant)) {
        const TrainState init = init_train_state(cfg, task.backbone.text, task.vocabulary);
        out.initial_gate_stats = mean_gate_weights(init.gate, data);
    }
    out.state = train(cfg, data, task.backbone.text, task.vocabulary, pool, classes);
    out.checkpoint = make_checkpoint(out.state, cfg);
    out.report = evaluate_base_to_new(out.checkpoint, task, audit);
    return out;
}

std::vector<FewShotRow> evaluate_few_shot(const TrainConfig& cfg, const SyntheticTask& task,
                                          const TeacherPool* pool, const std::vector<std::size_t>& shots,
                                          std::size_t seeds) {
    if (seeds == 0) throw Error("seeds must be >= 1");
    std::vector<int> all;
    for (std::size_t c = 0; c < task.num_classes(); ++c) all.push_back(static_cast<int>(c));
    const std::vector<Instance> test = test_subset(task, all);
    std::vector<FewShotRow> rows;
    for (std::size_t k : shots) {
        if (k == 0 || k > task.spec.shots) throw Error("insufficient shots: " + std::to_string(k));
        const std::vector<Instance> data = training_subset(task, all, k);
        std::vector<double> accs;
        for (std::size_t s = 0; s < seeds; ++s) {
            TrainConfig c = cfg;
            c.seed = cfg.seed + s;
            const TrainState st = train(c, data, task.backbone.text, task.vocabulary, pool, {});
            const StudentTable table = build_student_table(st.model, all);
            std::size_t hit = 0;
            for (const Instance& inst : test) hit += predict(table, inst.f) == inst.label ? 1 : 0;
            accs.push_back(static_cast<double>(hit) / static_cast<double>(test.size()));
        }
        FewShotRow row;
        row.shots = k;
        for (double a : accs) row.mean_acc += a;
        row.mean_acc /= static_cast<double>(accs.size());
        for (double a : accs) row.std_acc += (a - row.mean_acc) * (a - row.mean_acc);
        row.std_acc = accs.size() > 1 ? std::sqrt(row.std_acc / static_cast<double>(accs.size() - 1)) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

double noisy_gate_mass(const Vector& gate_stats, const TeacherPool& pool) {
    double m = 0.0;
    for (std::size_t t = 0; t < gate_stats.size() && t < pool.size(); ++t) {
        if (pool.noisy[t]) m += gate_stats[t];
    }
    return m;
}

std::vector<RobustnessRow> evaluate_robustness(const TrainConfig& cfg, const SyntheticTask& task,
                                               const std::vector<TeacherSpec>& mixtures, std::size_t seeds) {
    if (seeds == 0) throw Error("seeds must be >= 1");
    std::vector<RobustnessRow> rows;
    for (const TeacherSpec& mix : mixtures) {
        const TeacherPool pool = generate_teacher_pool(task, mix);
        for (Variant v : {Variant::MOPD, Variant::MOPD_R}) {
            RobustnessRow row;
            row.mixture = mixture_label(mix);
            row.variant = to_string(v);
            for (std::size_t s = 0; s < seeds; ++s) {
                TrainConfig c = cfg;
                c.variant = v;
                c.seed = cfg.seed + s;
                c.pool_size = pool.size();
                c.top_t = std::min(c.top_t, pool.size());
                c.sipd_teacher = 0;
                const RunOutcome o = run_base_to_new(c, task, &pool);
                row.acc_base += o.report.acc_base;
                row.acc_new += o.report.acc_new;
                row.h += o.report.h;
                if (uses_gate(v)) {
                    row.noisy_mass_initial += noisy_gate_mass(o.initial_gate_stats, pool);
                    row.noisy_mass_final += noisy_gate_mass(o.report.gate_stats, pool);
                }
            }
            const double inv = 1.0 / static_cast<double>(seeds);
            row.acc_base *= inv;
            row.acc_new *= inv;
            row.h *= inv;
            row.noisy_mass_initial *= inv;
            row.noisy_mass_final *= inv;
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<DomainShiftRow> evaluate_domain_shift(const Checkpoint& ck, const SyntheticTask& task,
                                                  const std::vector<double>& shifts) {
    std::vector<int> all;
    for (std::size_t c = 0; c < task.num_classes(); ++c) all.push_back(static_cast<int>(c));
    const StudentModel model = student_from_checkpoint(ck, task.backbone.text, task.vocabulary);
    const StudentTable table = build_student_table(model, all);
    std::vector<DomainShiftRow> rows;
    for (double s : shifts) {
        const SyntheticTask shifted = apply_domain_shift(task, s);
        std::size_t hit = 0;
        for (const Instance& inst : shifted.test) hit += predict(table, inst.f) == inst.label ? 1 : 0;
        rows.push_back({s, static_cast<double>(hit) / static_cast<double>(shifted.test.size())});
    }
    return rows;
}

SummaryRow summarize(const std::string& key, const std::vector<EvalReport>& reports) {
    SummaryRow s;
    s.key = key;
    s.n = reports.size();
    if (reports.empty()) return s;
    for (const auto& r : reports) {
        s.acc_base += r.acc_base;
        s.acc_new += r.acc_new;
        s.h += r.h;
    }
    const double n = static_cast<double>(reports.size());
    s.acc_base /= n;
    s.acc_new /= n;
    s.h /= n;
    if (reports.size() > 1) {
        for (const auto& r : reports) s.h_std += (r.h - s.h) * (r.h - s.h);
        s.h_std = std::sqrt(s.h_std / (n - 1.0));
    }
    return s;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

} // namespace mopd
