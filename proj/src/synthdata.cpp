// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/synthdata.hpp"

#include <cmath>
#include <numbers>
#include <regex>

#include "mopd/rng.hpp"

namespace mopd {

namespace {

constexpr std::uint64_t kProtoStream = 0x11;
constexpr std::uint64_t kTokenStream = 0x12;
constexpr std::uint64_t kTrainStream = 0x13;
constexpr std::uint64_t kTestStream = 0x14;
constexpr std::uint64_t kTeacherStream = 0x15;
constexpr std::uint64_t kShiftStream = 0x16;

const char* const kTemplates[] = {
    "a photo of a {}.",        "a bad photo of a {}.",     "a photo of many {}.",
    "a sculpture of a {}.",    "a rendering of a {}.",     "graffiti of a {}.",
    "a cropped photo of a {}.", "a tattoo of a {}.",       "a bright photo of a {}.",
    "a photo of a clean {}.",  "a photo of a dirty {}.",   "a dark photo of a {}.",
};

Vector gaussian(Rng& rng, std::size_t d, double scale) {
    Vector v(d);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

Vector noisy_instance(const Vector& mu, double sigma, Rng& rng) {
    const double s = sigma / std::sqrt(static_cast<double>(mu.size()));
    Vector v(mu.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = mu[j] + s * rng.normal();
    return normalize(v);
}

std::vector<Instance> make_instances(const Matrix& mu, std::size_t per_class, double sigma,
                                     Rng& rng, std::size_t id0) {
    std::vector<Instance> out;
    out.reserve(mu.rows() * per_class);
    for (std::size_t c = 0; c < mu.rows(); ++c) {
        const Vector m = mu.row(c);
        for (std::size_t k = 0; k < per_class; ++k) {
            Instance inst;
            inst.f = sigma == 0.0 ? m : noisy_instance(m, sigma, rng);
            inst.label = static_cast<int>(c);
            inst.id = id0 + out.size();
            out.push_back(std::move(inst));
        }
    }
    return out;
}

void validate(const TaskSpec& s) {
    if (s.num_classes < 4) throw Error("task needs C >= 4 for base/new splitting");
    if (s.d == 0 || s.d_e == 0) throw Error("dimensions must be positive");
    if (!(s.sigma_x >= 0.0)) throw Error("sigma_x must be non-negative");
    if (s.shots == 0 || s.test_per_class == 0) throw Error("shots and test_per_class must be positive");
    if (!(s.base_fraction > 0.0 && s.base_fraction < 1.0)) throw Error("base_fraction must lie in (0, 1)");
    if (s.clusters == 0) throw Error("clusters must be >= 1");
}

} // namespace

int SyntheticTask::cluster_of(int c) const {
    return static_cast<int>(static_cast<std::size_t>(c) % std::max<std::size_t>(spec.clusters, 1));
}

bool SyntheticTask::is_base(int c) const {
    for (int b : base_ids) {
        if (b == c) return true;
    }
    return false;
}

std::string mixture_label(const TeacherSpec& spec) {
    std::string s;
    if (spec.task_related() > 0) s += std::to_string(spec.task_related()) + "T";
    if (spec.noisy > 0) s += (s.empty() ? "" : "+") + std::to_string(spec.noisy) + "N";
    return s;
}

TeacherSpec parse_mixture(const std::string& label, const TeacherSpec& base) {
    static const std::regex re(R"(^(?:(\d+)T)?(?:\+?(\d+)N)?$)");
    std::smatch m;
    if (label.empty() || !std::regex_match(label, m, re) || (!m[1].matched && !m[2].matched)) {
        throw Error("invalid mixture label: " + label);
    }
    TeacherSpec spec = base;
    const std::size_t nt = m[1].matched ? std::stoul(m[1].str()) : 0;
    const std::size_t nn = m[2].matched ? std::stoul(m[2].str()) : 0;
    if (nt + nn == 0) throw Error("mixture needs at least one teacher");
    std::vector<double> sig;
    const std::vector<double> src = base.sigmas.empty() ? TeacherSpec{}.sigmas : base.sigmas;
    for (std::size_t i = 0; i < nt; ++i) sig.push_back(src[i % src.size()]);
    spec.sigmas = sig;
    spec.noisy = nn;
    return spec;
}

Backbone make_task_backbone(const TaskSpec& spec) {
    return make_backbone(spec.d_e, spec.d, spec.seed);
}

SyntheticTask generate_task(const TaskSpec& spec) {
    return generate_task(spec, make_task_backbone(spec));
}

SyntheticTask generate_task(const TaskSpec& spec, const Backbone& backbone) {
    validate(spec);
    if (backbone.text.d() != spec.d || backbone.text.d_e() != spec.d_e) {
        throw Error("backbone dimensions do not match the task spec");
    }
    const std::size_t C = spec.num_classes, d = spec.d;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    SyntheticTask task;
    task.spec = spec;
    task.backbone = backbone;

    Rng prng(derive_seed(spec.seed, kProtoStream));
    const Vector axis = normalize(gaussian(prng, d, 1.0));
    std::vector<Vector> centers;
    for (std::size_t k = 0; k < spec.clusters; ++k) centers.push_back(gaussian(prng, d, inv_sqrt_d));
    task.prototypes = Matrix(C, d);
    std::size_t draws = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (;;) {
            if (++draws > 10000) throw Error("prototype rejection sampling failed (dimension too small for C)");
            Vector v = gaussian(prng, d, inv_sqrt_d);
            const Vector& k = centers[c % spec.clusters];
            for (std::size_t j = 0; j < d; ++j) v[j] += spec.cone * axis[j] + spec.cluster_spread * k[j];
            const Vector u = normalize(v);
            bool ok = true;
            for (std::size_t p = 0; p < c && ok; ++p) {
                ok = dot(u.data(), task.prototypes.row_ptr(p), d) < spec.max_prototype_cos;
            }
            if (ok) {
                task.prototypes.set_row(c, u);
                break;
            }
        }
    }

    Rng trng(derive_seed(spec.seed, kTokenStream));
    Vector gap = gaussian(trng, d, 1.0);
    const double gn = norm(gap);
    for (auto& x : gap) x *= spec.text_gap / gn;
    task.vocabulary.tokens = Matrix(C, spec.d_e);
    for (std::size_t c = 0; c < C; ++c) {
        Vector z(d);
        for (std::size_t j = 0; j < d; ++j) {
            z[j] = task.prototypes(c, j) + gap[j] + spec.token_noise * inv_sqrt_d * trng.normal();
        }
        Vector w = matvec_transposed(backbone.text.projection, z);
        for (auto& x : w) x *= spec.token_scale;
        task.vocabulary.tokens.set_row(c, w);
    }

    Rng rtrain(derive_seed(spec.seed, kTrainStream));
    task.train = make_instances(task.prototypes, spec.shots, spec.sigma_x, rtrain, 0);
    Rng rtest(derive_seed(spec.seed, kTestStream));
    task.test = make_instances(task.prototypes, spec.test_per_class, spec.sigma_x, rtest, task.train.size());

    const auto nb = static_cast<std::size_t>(std::llround(spec.base_fraction * static_cast<double>(C)));
    const std::size_t nbase = std::clamp<std::size_t>(nb, 1, C - 1);
    for (std::size_t c = 0; c < C; ++c) {
        (c < nbase ? task.base_ids : task.new_ids).push_back(static_cast<int>(c));
    }
    return task;
}

TeacherPool generate_teacher_pool(const SyntheticTask& task, const TeacherSpec& spec) {
    if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) throw Error("rho must lie in [0, 1]");
    for (double s : spec.sigmas) {
        if (!(s >= 0.0)) throw Error("teacher sigma must be non-negative");
    }
    if (spec.total() == 0) throw Error("teacher pool must not be empty");
    const std::size_t C = task.num_classes(), d = task.prototypes.cols();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(derive_seed(derive_seed(task.spec.seed, kTeacherStream), spec.seed));
    Matrix shared(C, d);
    for (std::size_t i = 0; i < shared.size(); ++i) shared[i] = inv_sqrt_d * rng.normal();
    const double own = std::sqrt(1.0 - spec.rho * spec.rho);
    const std::size_t k = std::max<std::size_t>(task.spec.clusters, 1);

    TeacherPool pool;
    for (std::size_t t = 0; t < spec.sigmas.size(); ++t) {
        Matrix tab(C, d);
        for (std::size_t c = 0; c < C; ++c) {
            double s = spec.sigmas[t];
            if (k > 1 && c % k == t % k) s *= spec.expert_factor;
            Vector v(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double e = spec.rho * shared(c, j) + own * inv_sqrt_d * rng.normal();
                v[j] = task.prototypes(c, j) + s * e;
            }
            tab.set_row(c, normalize(v));
        }
        pool.tables.push_back(std::move(tab));
        pool.labels.push_back(kTemplates[t % std::size(kTemplates)]);
        pool.noisy.push_back(false);
    }
    for (std::size_t t = 0; t < spec.noisy; ++t) {
        Matrix tab(C, d);
        for (std::size_t c = 0; c < C; ++c) tab.set_row(c, normalize(gaussian(rng, d, 1.0)));
        pool.tables.push_back(std::move(tab));
        pool.labels.push_back("noisy prompt " + std::to_string(t + 1));
        pool.noisy.push_back(true);
    }
    return pool;
}

SyntheticTask apply_domain_shift(const SyntheticTask& task, double shift) {
    if (!(shift >= 0.0)) throw Error("shift must be non-negative");
    if (shift == 0.0) return task;
    SyntheticTask out = task;
    out.shift = task.shift + shift;
    const std::size_t d = task.prototypes.cols();
    Rng rng(derive_seed(task.spec.seed, kShiftStream));
    // rotation in a random plane spanned by orthonormal (a, b)
    const Vector a = normalize(gaussian(rng, d, 1.0));
    Vector b = gaussian(rng, d, 1.0);
    const double ab = dot(a, b);
    for (std::size_t j = 0; j < d; ++j) b[j] -= ab * a[j];
    b = normalize(b);
    const double theta = shift * std::numbers::pi / 2.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    for (std::size_t c = 0; c < task.prototypes.rows(); ++c) {
        Vector p = task.prototypes.row(c);
        const double pa = dot(p, a), pb = dot(p, b);
        const double ra = cs * pa - sn * pb, rb = sn * pa + cs * pb;
        for (std::size_t j = 0; j < d; ++j) p[j] += (ra - pa) * a[j] + (rb - pb) * b[j];
        out.prototypes.set_row(c, normalize(p));
    }
    const std::uint64_t tag = static_cast<std::uint64_t>(std::llround(out.shift * 1e6));
    Rng rtest(derive_seed(derive_seed(task.spec.seed, kTestStream), tag));
    out.test = make_instances(out.prototypes, task.spec.test_per_class, task.spec.sigma_x * (1.0 + shift),
                              rtest, task.train.size());
    return out;
}

std::vector<Instance> training_subset(const SyntheticTask& task, const std::vector<int>& classes,
                                      std::size_t k) {
    std::vector<Instance> out;
    for (int c : classes) {
        std::size_t taken = 0;
        for (const Instance& inst : task.train) {
            if (inst.label != c) continue;
            if (k > 0 && taken >= k) break;
            out.push_back(inst);
            ++taken;
        }
        if (k > 0 && taken < k) throw Error("insufficient shots for class " + std::to_string(c));
    }
    return out;
}

std::vector<Instance> test_subset(const SyntheticTask& task, const std::vector<int>& classes) {
    std::vector<Instance> out;
    for (const Instance& inst : task.test) {
        for (int c : classes) {
            if (inst.label == c) {
                out.push_back(inst);
                break;
            }
        }
    }
    return out;
}

double table_accuracy(const Matrix& table, const std::vector<Instance>& instances,
                      const std::vector<int>& classes) {
    if (instances.empty()) return 0.0;
    std::size_t correct = 0;
    for (const Instance& inst : instances) {
        int best = classes.at(0);
        double best_v = -2.0;
        const double fn = norm(inst.f);
        for (int c : classes) {
            const double* row = table.row_ptr(static_cast<std::size_t>(c));
            const double v = dot(row, inst.f.data(), inst.f.size()) /
                             (fn * std::sqrt(dot(row, row, inst.f.size())));
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        correct += best == inst.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(instances.size());
}

} // namespace mopd
