#include "gwperc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "gwperc/csbp.hpp"
#include "gwperc/errors.hpp"
#include "gwperc/estimators.hpp"
#include "gwperc/iic.hpp"
#include "gwperc/limit_laws.hpp"
#include "gwperc/offspring.hpp"
#include "gwperc/parallel.hpp"
#include "gwperc/percolation.hpp"
#include "gwperc/tree_store.hpp"

namespace gwperc {

using nlohmann::json;

namespace {

struct KindName {
    ExperimentKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {ExperimentKind::Constants, "constants"},
    {ExperimentKind::AnnealedSurvival, "annealed-survival"},
    {ExperimentKind::AnnealedYaglom, "annealed-yaglom"},
    {ExperimentKind::QuenchedSurvival, "quenched-survival"},
    {ExperimentKind::QuenchedYaglom, "quenched-yaglom"},
    {ExperimentKind::CsbpMarginal, "csbp-marginal"},
    {ExperimentKind::CsbpTransition, "csbp-transition"},
    {ExperimentKind::IicMarginal, "iic-marginal"},
    {ExperimentKind::ConnectorDiagnostic, "connector-diagnostic"},
    {ExperimentKind::PropertySuite, "property-suite"},
};

constexpr std::uint64_t kRunChunk = 4096;

json explicit_pmf(std::initializer_list<std::pair<const char*, double>> pmf) {
    json p = json::object();
    for (const auto& [k, v] : pmf) p[k] = v;
    return {{"kind", "explicit"}, {"pmf", p}};
}

std::uint64_t tree_seed(std::uint64_t master, std::uint64_t tree) { return hash_combine(master, domain::tree, tree); }

std::uint64_t stat_seed(std::uint64_t master, std::uint64_t tree, std::uint64_t tag) {
    return hash_combine(master, tree, tag);
}

json points_json(const std::vector<TransformPoint>& points) {
    json out = json::array();
    for (const auto& p : points) out.push_back(p.to_json());
    return out;
}

PlotTable transform_table(const std::string& file, const std::vector<TransformPoint>& points,
                          const std::vector<double>& targets) {
    PlotTable t{file, {"theta", "empirical", "ci_lo", "ci_hi", "target"}, {}};
    for (std::size_t j = 0; j < points.size(); ++j)
        t.rows.push_back({points[j].theta, points[j].estimate, points[j].ci_lo, points[j].ci_hi, targets[j]});
    return t;
}

double max_abs_gap(const std::vector<TransformPoint>& points, const std::vector<double>& targets) {
    double gap = 0.0;
    for (std::size_t j = 0; j < points.size(); ++j) gap = std::max(gap, std::abs(points[j].estimate - targets[j]));
    return gap;
}

template <class F>
std::vector<double> targets_over(const std::vector<double>& theta, F f) {
    std::vector<double> out;
    out.reserve(theta.size());
    for (double t : theta) out.push_back(f(t));
    return out;
}

// Counts trees passing a per-tree check and builds the criterion.
CriterionResult tree_vote(std::string id, std::string description, const std::vector<bool>& passes,
                          std::size_t required, json details) {
    const auto count = static_cast<std::size_t>(std::count(passes.begin(), passes.end(), true));
    details["trees_passing"] = count;
    details["trees_required"] = required;
    details["trees"] = passes.size();
    return {std::move(id), std::move(description), count >= required, std::move(details)};
}

std::size_t vote_threshold(std::size_t trees, std::size_t num, std::size_t den) {
    return (trees * num + den - 1) / den;
}

// --- property suite ----------------------------------------------------------

struct Defect {
    double worst = 0.0;
    void see(double d) { worst = std::max(worst, std::isfinite(d) ? d : std::numeric_limits<double>::infinity()); }
};

json limit_law_defects(const LimitLaw& law) {
    const std::vector<double> grid = {0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0};
    Defect semigroup, identity, transition, branching;
    for (double s : grid)
        for (double t : grid)
            for (double l : grid) semigroup.see(std::abs(law.u(s, law.u(t, l)) - law.u(s + t, l)));
    for (double theta : grid)
        identity.see(std::abs(law.one_minus_phi(theta) - law.u(1.0, theta) / law.constants().c_alpha));
    for (double a : {0.0, 0.1, 1.0, 3.0})
        for (double dt : {0.1, 1.0, 2.5})
            for (double theta : grid) {
                transition.see(std::abs(law.csbp_transition_lt(a, dt, theta) - law.csbp_transition_lt_flow(a, dt, theta)));
                for (double b : {0.2, 1.5})
                    branching.see(std::abs(law.csbp_transition_lt(a + b, dt, theta) -
                                           law.csbp_transition_lt(a, dt, theta) * law.csbp_transition_lt(b, dt, theta)));
            }
    const double theta0 = 1e-6;
    const double inv_c = 1.0 / law.constants().c_alpha;
    const double mean_rel = std::abs(law.one_minus_phi(theta0) / theta0 - inv_c) / inv_c;
    return {{"semigroup", semigroup.worst},
            {"identity", identity.worst},
            {"transition", transition.worst},
            {"branching", branching.worst},
            {"mean_relative", mean_rel}};
}

// A random tree of the given depth with 1-3 children per internal vertex.
std::vector<std::vector<std::size_t>> random_tree(std::mt19937_64& gen, int depth) {
    std::vector<std::vector<std::size_t>> children(1);
    std::vector<std::size_t> level{0};
    for (int d = 0; d < depth; ++d) {
        std::vector<std::size_t> next;
        for (std::size_t v : level) {
            const auto k = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 3)(gen));
            for (std::size_t c = 0; c < k; ++c) {
                children[v].push_back(children.size());
                next.push_back(children.size());
                children.emplace_back();
            }
        }
        level = std::move(next);
    }
    return children;
}

void run_property_suite(const ExperimentConfig& config, ExperimentReport& report) {
    const std::uint64_t seed = *config.seed;
    // A1: the configured law plus a fixed panel covering both regimes.
    std::vector<std::pair<std::string, OffspringSpec>> laws;
    laws.emplace_back("config", make_spec(config.distribution));
    laws.emplace_back("explicit{1:0.8,2:0.2}", OffspringSpec::explicit_law({{1, 0.8}, {2, 0.2}}));
    laws.emplace_back("explicit{2:1}", OffspringSpec::explicit_law({{2, 1.0}}));
    laws.emplace_back("zeta_tail(1.5)", OffspringSpec::zeta_tail(1.5));
    laws.emplace_back("zeta_tail(1.2)", OffspringSpec::zeta_tail(1.2));

    const auto a1_start = std::chrono::steady_clock::now();
    json a1 = json::array();
    bool a1_pass = true;
    for (const auto& [label, spec] : laws) {
        const ModelConstants c = constants(spec);
        json d = limit_law_defects(LimitLaw(c));
        const bool finite_variance = c.regime == Regime::FiniteVariance;
        bool pass = d["semigroup"].get<double>() <= 1e-10 && d["identity"].get<double>() <= 1e-12 &&
                    d["transition"].get<double>() <= 1e-12 && d["branching"].get<double>() <= 1e-12;
        // (1 - phi(theta)) / theta - 1/C is of order theta^{alpha-1}: the
        // 1e-4 bound at theta = 1e-6 is a finite-variance statement.
        if (finite_variance) pass = pass && d["mean_relative"].get<double>() <= 1e-4;
        d["mean_checked"] = finite_variance;
        d["law"] = label;
        d["passed"] = pass;
        a1_pass = a1_pass && pass;
        a1.push_back(d);
    }
    const double a1_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - a1_start).count();
    report.results["limit_laws"] = a1;
    report.criteria.push_back({"A1", "closed-form identities of the limit laws", a1_pass,
                               {{"laws", a1.size()}, {"runtime_under_1s", a1_seconds < 1.0}}});

    // A2: consistency and normalization on random harmonic weightings.
    std::mt19937_64 gen(hash_combine(seed, domain::sampling, 2));
    std::uniform_real_distribution<double> leaf(0.5, 2.0);
    double worst_consistency = 0.0, worst_normalization = 0.0;
    int weightings = 0;
    while (weightings < 20) {
        const auto children = random_tree(gen, 3);
        std::vector<double> leaves(children.size());
        for (double& w : leaves) w = leaf(gen);
        const double p = std::uniform_real_distribution<double>(0.2, 0.8)(gen);
        const auto wt = WeightedFiniteTree::harmonic(children, leaves, p);
        if (count_subtrees(wt, 3) > kEnumerationBudget) continue;
        for (int n = 0; n <= 2; ++n) worst_consistency = std::max(worst_consistency, iic_consistency_check(wt, n));
        for (int n = 0; n <= 3; ++n)
            worst_normalization = std::max(worst_normalization, iic_normalization_defect(wt, n));
        ++weightings;
    }
    report.results["iic_consistency"] = {{"weightings", weightings},
                                         {"max_consistency_defect", worst_consistency},
                                         {"max_normalization_defect", worst_normalization}};
    report.criteria.push_back({"A2", "IIC measures are consistent and normalized",
                               worst_consistency <= 1e-12 && worst_normalization <= 1e-12,
                               report.results["iic_consistency"]});

    // A3: spine sampler against the exact measure on a fixed depth-2 tree.
    const auto wt = WeightedFiniteTree::harmonic(WeightedFiniteTree::children_from_counts({2, 2, 1}),
                                                 {0, 0, 0, 1.0, 2.0, 1.5}, 0.5);
    const int n = 2;
    const auto atoms = enumerate_subtrees(wt, n);
    const std::uint64_t samples = 1'000'000;
    auto chunks = map_chunks(0, samples, 1 << 15, config.effective_threads(), [&](std::uint64_t lo, std::uint64_t hi) {
        std::map<FiniteSubtree, std::uint64_t> counts;
        for (std::uint64_t i = lo; i < hi; ++i) {
            RandomStream rng = RandomStream::derive(seed, domain::sampling, i);
            ++counts[sample_iic_finite(wt, n, rng).cluster];
        }
        return counts;
    });
    std::map<FiniteSubtree, std::uint64_t> counts;
    for (const auto& c : chunks)
        for (const auto& [t, k] : c) counts[t] += k;
    double worst_z = 0.0;
    std::uint64_t seen = 0;
    json atom_rows = json::array();
    for (const auto& t : atoms) {
        double exact = 0.0;  // clusters not reaching level n carry no mass
        try {
            exact = iic_measure_exact(wt, t, n);
        } catch (const HeightMismatch&) {
        }
        const std::uint64_t k = counts.count(t) ? counts.at(t) : 0;
        seen += k;
        const double freq = static_cast<double>(k) / static_cast<double>(samples);
        const double sigma = std::sqrt(exact * (1.0 - exact) / static_cast<double>(samples));
        const double z = sigma > 0.0 ? std::abs(freq - exact) / sigma : (freq == exact ? 0.0 : INFINITY);
        worst_z = std::max(worst_z, z);
        atom_rows.push_back({{"vertices", t.vertices}, {"exact", exact}, {"frequency", freq}, {"z", z}});
    }
    const bool stray = seen != samples;  // draws outside the enumerated atoms
    report.results["spine_sampler"] = {{"samples", samples}, {"atoms", atom_rows}, {"max_z", worst_z},
                                       {"outside_support", samples - seen}};
    report.criteria.push_back({"A3", "spine sampler matches the exact IIC measure per atom (4 sigma)",
                               worst_z <= 4.0 && !stray, {{"max_z", worst_z}, {"samples", samples}}});
}

// --- annealed ----------------------------------------------------------------

struct AnnealedChunk {
    SurvivalCurve curve;
    LaplaceSummary yaglom;
    std::uint64_t aborted = 0;
};

void run_annealed_kind(const ExperimentConfig& config, ExperimentReport& report, bool yaglom) {
    const OffspringSpec spec = make_spec(config.distribution);
    const ModelConstants c = constants(spec);
    const LimitLaw law(c);
    const std::uint64_t seed = *config.seed;
    const int n = config.n;
    const int n_max = config.effective_n_max();
    std::vector<int> levels = config.levels;
    levels.push_back(n);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const double scale = std::pow(static_cast<double>(n), -c.beta);
    RunOptions options;
    options.node_cap = config.node_cap;

    auto chunks = map_chunks(0, config.runs, kRunChunk, config.effective_threads(), [&](std::uint64_t lo, std::uint64_t hi) {
        AnnealedChunk out{SurvivalCurve(levels), LaplaceSummary(config.theta, stat_seed(seed, 0, 1)), 0};
        AnnealedRunner runner(spec, options);
        std::vector<std::uint64_t> counts;
        for (std::uint64_t r = lo; r < hi; ++r) {
            RandomStream rng = annealed_stream(seed, r);
            try {
                runner.run_counts(n_max, rng, counts);
            } catch (const RunAborted&) {
                ++out.aborted;
                continue;
            }
            out.curve.add_counts(counts);
            const std::uint64_t y = counts[static_cast<std::size_t>(n)];
            if (yaglom && y > 0) out.yaglom.add(r, scale * static_cast<double>(y));
        }
        return out;
    });
    AnnealedChunk total{SurvivalCurve(levels), LaplaceSummary(config.theta, stat_seed(seed, 0, 1)), 0};
    for (const auto& ch : chunks) {
        total.curve.merge(ch.curve);
        total.yaglom.merge(ch.yaglom);
        total.aborted += ch.aborted;
    }

    const bool stable = c.regime == Regime::StableTail;
    PlotTable survival_plot{"survival.csv", {"tree", "n", "survival", "ci_lo", "ci_hi", "scaled", "target"}, {}};
    json survival = json::array();
    ProportionEstimate at_n;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto est = total.curve.at(i).estimate();
        const double nb = std::pow(static_cast<double>(levels[i]), c.beta);
        survival.push_back({{"n", levels[i]}, {"estimate", est.to_json()}, {"scaled", nb * est.estimate}});
        survival_plot.rows.push_back({0.0, static_cast<double>(levels[i]), est.estimate, est.ci_lo, est.ci_hi,
                                      nb * est.estimate, c.c_alpha});
        if (levels[i] == n) at_n = est;
    }
    report.plots.push_back(survival_plot);
    const double scaled = std::pow(static_cast<double>(n), c.beta) * at_n.estimate;
    report.results["survival"] = survival;
    report.results["aborted_runs"] = total.aborted;
    report.targets["c_alpha"] = c.c_alpha;
    if (c.c_alpha_signed_gamma) report.targets["c_alpha_signed_gamma"] = *c.c_alpha_signed_gamma;
    else report.targets["c_alpha_signed_gamma"] = nullptr;

    const std::string survival_id = stable ? "A9" : "A4";
    const double survival_tol = stable ? 0.2 : 0.1;
    const double rel = std::abs(scaled / c.c_alpha - 1.0);
    const bool survival_pass = rel <= survival_tol && total.aborted == 0;
    json survival_details = {{"scaled_survival", scaled},
                             {"c_alpha", c.c_alpha},
                             {"relative_error", rel},
                             {"tolerance", survival_tol},
                             {"survivors", at_n.successes},
                             {"runs", at_n.trials},
                             {"aborted", total.aborted}};
    if (stable) {
        survival_details["c_alpha_signed_gamma"] = report.targets["c_alpha_signed_gamma"];
        if (c.c_alpha_signed_gamma)
            survival_details["relative_error_signed_gamma"] = std::abs(scaled / *c.c_alpha_signed_gamma - 1.0);
    }

    if (!yaglom) {
        report.criteria.push_back({survival_id, "n^beta P(Y_n > 0) against C_alpha", survival_pass, survival_details});
        return;
    }

    const auto targets = targets_over(config.theta, [&](double t) { return law.phi(t); });
    // The acceptance batch size fixes the number of survivors; for heavy
    // tails it can fall under the usual minimum, so that minimum is waived
    // here and the shortfall is reported.
    const bool enough = total.yaglom.count() >= kMinSurvivors;
    std::vector<TransformPoint> points;
    if (total.yaglom.count() > 0) points = total.yaglom.estimate(1);
    const double gap = points.empty() ? INFINITY : max_abs_gap(points, targets);
    report.results["yaglom"] = points_json(points);
    report.results["yaglom_survivors"] = total.yaglom.count();
    report.results["yaglom_below_min_survivors"] = !enough;
    report.targets["phi"] = targets;
    report.plots.push_back(transform_table("yaglom.csv", points, targets));
    const double tol = stable ? 0.05 : 0.03;
    const bool lt_pass = gap <= tol;
    json lt_details = {{"max_gap", gap}, {"tolerance", tol}, {"survivors", total.yaglom.count()},
                       {"below_min_survivors", !enough}};
    if (stable) {
        survival_details["laplace"] = lt_details;
        report.criteria.push_back({"A9", "stable annealed survival scaling and Slack transform",
                                   survival_pass && lt_pass, survival_details});
    } else {
        report.criteria.push_back({"A4", "n P(Y_n > 0) against C_alpha", survival_pass, survival_details});
        report.criteria.push_back({"A5", "annealed Yaglom transform against phi", lt_pass, lt_details});
    }
}

// --- quenched ----------------------------------------------------------------

struct QuenchedChunk {
    SurvivalCurve curve;
    LaplaceSummary yaglom;
    LaplaceSummary composition;
    TransitionSample transition;
    std::uint64_t aborted = 0;
};

void run_quenched_kind(const ExperimentConfig& config, ExperimentReport& report, bool yaglom) {
    const OffspringSpec spec = make_spec(config.distribution);
    const ModelConstants c = constants(spec);
    const LimitLaw law(c);
    const std::uint64_t seed = *config.seed;
    const int n = config.n;
    const int n_max = config.effective_n_max();
    const bool transition = yaglom && n_max >= 2 * n;
    std::vector<int> levels = config.levels;
    levels.push_back(n);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const double nb = std::pow(static_cast<double>(n), c.beta);
    const double scale = 1.0 / nb;
    RunOptions options;
    options.node_cap = config.node_cap;

    const auto phi_targets = targets_over(config.theta, [&](double t) { return law.phi(t); });
    const auto comp_targets = targets_over(config.theta, [&](double t) { return law.phi(law.u(1.0, t)); });
    report.targets["c_alpha"] = c.c_alpha;
    if (yaglom) report.targets["phi"] = phi_targets;
    if (transition) report.targets["composition"] = comp_targets;

    std::vector<bool> survival_pass, yaglom_pass, comp_pass, bin_pass;
    json trees = json::array();
    PlotTable survival_plot{"survival.csv", {"tree", "n", "survival", "ci_lo", "ci_hi", "scaled", "target"}, {}};
    for (std::uint64_t k = 0; k < config.trees; ++k) {
        const TreeStore store(spec, tree_seed(seed, k));
        const double w_hat = store.w_value(NodeKey::root(), config.m_W);
        auto make = [&] {
            return QuenchedChunk{SurvivalCurve(levels), LaplaceSummary(config.theta, stat_seed(seed, k, 1)),
                                 LaplaceSummary(config.theta, stat_seed(seed, k, 2)), TransitionSample{}, 0};
        };
        auto chunks = map_chunks(0, config.runs, kRunChunk, config.effective_threads(),
                                 [&](std::uint64_t lo, std::uint64_t hi) {
                                     QuenchedChunk out = make();
                                     QuenchedRunner runner(store, options);
                                     std::vector<std::uint64_t> counts;
                                     for (std::uint64_t r = lo; r < hi; ++r) {
                                         RandomStream rng = run_stream(seed, k, r);
                                         try {
                                             runner.run_counts(n_max, rng, counts);
                                         } catch (const RunAborted&) {
                                             ++out.aborted;
                                             continue;
                                         }
                                         out.curve.add_counts(counts);
                                         const std::uint64_t y = counts[static_cast<std::size_t>(n)];
                                         if (!yaglom || y == 0) continue;
                                         const double x = scale * static_cast<double>(y);
                                         out.yaglom.add(r, x);
                                         if (transition) {
                                             const double y2 = scale * static_cast<double>(counts[2 * static_cast<std::size_t>(n)]);
                                             out.composition.add(r, y2);
                                             out.transition.add(x, y2);
                                         }
                                     }
                                     return out;
                                 });
        QuenchedChunk total = make();
        for (const auto& ch : chunks) {
            total.curve.merge(ch.curve);
            total.yaglom.merge(ch.yaglom);
            total.composition.merge(ch.composition);
            total.transition.merge(ch.transition);
            total.aborted += ch.aborted;
        }

        json tree = {{"tree", k}, {"tree_seed", store.seed()}, {"w_hat", w_hat}, {"m_W", config.m_W},
                     {"runs", config.runs}, {"aborted", total.aborted}};
        json survival = json::array();
        double ratio = 0.0;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const auto est = total.curve.at(i).estimate();
            const double lb = std::pow(static_cast<double>(levels[i]), c.beta);
            const double r = lb * est.estimate / (c.c_alpha * w_hat);
            survival.push_back({{"n", levels[i]}, {"estimate", est.to_json()}, {"ratio", r}});
            survival_plot.rows.push_back({static_cast<double>(k), static_cast<double>(levels[i]), est.estimate,
                                          est.ci_lo, est.ci_hi, lb * est.estimate, c.c_alpha * w_hat});
            if (levels[i] == n) ratio = r;
        }
        tree["survival"] = survival;
        tree["survival_ratio"] = ratio;
        survival_pass.push_back(std::abs(ratio - 1.0) <= 0.15 && total.aborted == 0);

        if (yaglom) {
            const std::string suffix = "_tree" + std::to_string(k) + ".csv";
            tree["survivors"] = total.yaglom.count();
            try {
                const auto points = total.yaglom.estimate();
                tree["yaglom"] = points_json(points);
                const double gap = max_abs_gap(points, phi_targets);
                tree["yaglom_gap"] = gap;
                yaglom_pass.push_back(gap <= 0.05);
                report.plots.push_back(transform_table("yaglom" + suffix, points, phi_targets));
            } catch (const InsufficientSurvivors& e) {
                tree["yaglom_error"] = e.what();
                yaglom_pass.push_back(false);
            }
            if (transition) {
                try {
                    const auto points = total.composition.estimate();
                    tree["composition"] = points_json(points);
                    const double gap = max_abs_gap(points, comp_targets);
                    tree["composition_gap"] = gap;
                    comp_pass.push_back(gap <= 0.05);
                    report.plots.push_back(transform_table("composition" + suffix, points, comp_targets));
                } catch (const InsufficientSurvivors& e) {
                    tree["composition_error"] = e.what();
                    comp_pass.push_back(false);
                }
                json bins = json::array();
                bool median_ok = false;
                if (total.transition.size() > 0) {
                    std::vector<double> centers{total.transition.median_x()};
                    centers.insert(centers.end(), config.bins.begin(), config.bins.end());
                    const auto estimates = binned_transition_estimate(total.transition, config.theta, centers,
                                                                      config.bin_half_width, kMinBinCount,
                                                                      stat_seed(seed, k, 3));
                    for (std::size_t b = 0; b < estimates.size(); ++b) {
                        const auto& bin = estimates[b];
                        json row = bin.to_json();
                        const auto targets =
                            targets_over(config.theta, [&](double t) { return std::exp(-bin.center * law.u(1.0, t)); });
                        row["target"] = targets;
                        if (!bin.dropped) {
                            const double gap = max_abs_gap(bin.transform, targets);
                            row["gap"] = gap;
                            if (b == 0) median_ok = gap <= 0.07;
                            report.plots.push_back(transform_table(
                                "transition_bin" + std::to_string(b) + suffix, bin.transform, targets));
                        }
                        bins.push_back(row);
                    }
                }
                tree["transition_bins"] = bins;
                bin_pass.push_back(median_ok);
            }
        }
        trees.push_back(tree);
        report.records.push_back(tree);
    }
    report.results["trees"] = trees;
    report.plots.insert(report.plots.begin(), survival_plot);

    const std::size_t need = vote_threshold(config.trees, 8, 10);
    report.criteria.push_back(tree_vote("A6", "quenched survival against C_alpha W_hat (15%)", survival_pass, need,
                                        {{"tolerance", 0.15}}));
    if (yaglom) {
        report.criteria.push_back(
            tree_vote("A7", "quenched Yaglom transform against phi", yaglom_pass, need, {{"tolerance", 0.05}}));
    }
    if (transition) {
        report.criteria.push_back(tree_vote("A8(i)", "transform of Y_2n given Y_n > 0 against phi(u_1)", comp_pass,
                                            need, {{"tolerance", 0.05}}));
        report.criteria.push_back(tree_vote("A8(ii)", "median-bin transition against exp(-a u_1)", bin_pass, need,
                                            {{"tolerance", 0.07}, {"half_width_fraction", config.bin_half_width}}));
    }
}

// --- CSBP --------------------------------------------------------------------

json checked_json(const CheckedMean& m) {
    return {{"estimate", m.estimate}, {"std_error", m.std_error}, {"target", m.target}, {"z", m.z()}};
}

void run_csbp_kind(const ExperimentConfig& config, ExperimentReport& report, bool marginal) {
    const ModelConstants c = constants(make_spec(config.distribution));
    const LimitLaw law(c);
    const std::uint64_t seed = *config.seed;
    const auto check = csbp_self_check(c, config.csbp_a, config.csbp_dt, config.runs, config.theta, seed,
                                       config.effective_threads());
    json lt1 = json::array(), lt2 = json::array();
    PlotTable table{marginal ? "csbp_marginal.csv" : "csbp_transition.csv",
                    {"theta", "empirical", "ci_lo", "ci_hi", "target"}, {}};
    const double z = normal_quantile(kConfidence);
    for (std::size_t j = 0; j < config.theta.size(); ++j) {
        lt1.push_back(checked_json(check.lt_one_step[j]));
        lt2.push_back(checked_json(check.lt_two_vs_one[j]));
        const CheckedMean& m = marginal ? check.lt_one_step[j] : check.lt_two_vs_one[j];
        table.rows.push_back({config.theta[j], m.estimate, m.estimate - z * m.std_error, m.estimate + z * m.std_error,
                              m.target});
    }
    report.results = {{"a", check.a},
                      {"dt", check.dt},
                      {"paths", check.paths},
                      {"mean_one_step", checked_json(check.mean_one_step)},
                      {"mean_two_step", checked_json(check.mean_two_step)},
                      {"lt_one_step", lt1},
                      {"lt_two_vs_one", lt2},
                      {"extinction", checked_json(check.extinction)}};
    report.targets = {{"mean", config.csbp_a},
                      {"extinction", law.csbp_extinction(config.csbp_a, 2.0 * config.csbp_dt)}};
    report.plots.push_back(table);

    // one sample path for plotting
    std::vector<double> times;
    for (int i = 1; i <= 50; ++i) times.push_back(0.1 * i * config.csbp_dt);
    RandomStream rng = csbp_stream(seed, std::numeric_limits<std::uint64_t>::max());
    const auto masses = path_alpha2(c, config.csbp_a, times, rng);
    PlotTable path{"csbp_path.csv", {"time", "mass"}, {}};
    for (std::size_t i = 0; i < times.size(); ++i) path.rows.push_back({times[i], masses[i]});
    report.plots.push_back(path);

    double worst = 0.0;
    if (marginal) {
        worst = std::max(check.mean_one_step.z(), check.mean_two_step.z());
        for (const auto& m : check.lt_one_step) worst = std::max(worst, m.z());
    } else {
        worst = check.extinction.z();
        for (const auto& m : check.lt_two_vs_one) worst = std::max(worst, m.z());
    }
    report.criteria.push_back({"A8(iii)",
                               marginal ? "CSBP sampler: mean conservation and one-step transform (4 sigma)"
                                        : "CSBP sampler: two steps against one step, extinction mass (4 sigma)",
                               worst <= 4.0, {{"max_z", worst}, {"paths", config.runs}}});
}

// --- IIC ---------------------------------------------------------------------

void run_iic_kind(const ExperimentConfig& config, ExperimentReport& report) {
    const OffspringSpec spec = make_spec(config.distribution);
    const ModelConstants c = constants(spec);
    const LimitLaw law(c);
    const std::uint64_t seed = *config.seed;
    const auto targets = targets_over(config.theta, [&](double t) { return law.size_biased_lt(t); });
    const bool finite_mean = c.regime == Regime::FiniteVariance;
    const double mean_target = finite_mean ? law.size_biased_mean() : INFINITY;
    report.targets = {{"size_biased_lt", targets}, {"size_biased_mean", finite_mean ? json(mean_target) : json(nullptr)}};

    std::vector<bool> passes;
    json trees = json::array();
    for (std::uint64_t k = 0; k < config.trees; ++k) {
        const TreeStore store(spec, tree_seed(seed, k));
        IICOptions options;
        options.m_W = config.m_W;
        options.node_cap = config.node_cap;
        const std::uint64_t chunk = std::max<std::uint64_t>(1, (config.runs + 3) / 4);
        struct Part {
            LaplaceSummary summary;
            std::uint64_t aborted = 0;
            std::vector<json> samples;
        };
        auto parts = map_chunks(0, config.runs, chunk, config.effective_threads(), [&](std::uint64_t lo, std::uint64_t hi) {
            Part part{LaplaceSummary(config.theta, stat_seed(seed, k, 4)), 0, {}};
            IICSampler sampler(store, config.n, options);
            for (std::uint64_t i = lo; i < hi; ++i) {
                RandomStream rng = iic_stream(seed, k, i);
                try {
                    const IICSample s = sampler.sample(rng);
                    part.summary.add(i, s.z);
                    if (config.write_samples)
                        part.samples.push_back({{"tree", k}, {"sample_index", i}, {"n", s.level},
                                                {"count", s.cluster_level_count}});
                } catch (const RunAborted&) {
                    ++part.aborted;
                }
            }
            return part;
        });
        LaplaceSummary summary(config.theta, stat_seed(seed, k, 4));
        std::uint64_t aborted = 0;
        for (auto& p : parts) {
            summary.merge(p.summary);
            aborted += p.aborted;
            for (auto& s : p.samples) report.records.push_back(std::move(s));
        }
        const auto points = summary.estimate();
        const double gap = max_abs_gap(points, targets);
        const double mean = summary.mean();
        const double mean_rel = finite_mean ? std::abs(mean / mean_target - 1.0) : INFINITY;
        const bool pass = gap <= 0.05 && mean_rel <= 0.10 && aborted == 0;
        passes.push_back(pass);
        json tree = {{"tree", k},          {"tree_seed", store.seed()},
                     {"samples", summary.count()}, {"aborted", aborted},
                     {"transform", points_json(points)}, {"transform_gap", gap},
                     {"mean", mean},        {"mean_std_error", summary.mean_std_error()},
                     {"mean_relative_error", mean_rel}};
        trees.push_back(tree);
        report.records.push_back(tree);
        report.plots.push_back(transform_table("iic_tree" + std::to_string(k) + ".csv", points, targets));
    }
    report.results["trees"] = trees;
    report.criteria.push_back(tree_vote("A10", "IIC level size against the size-biased limit", passes,
                                        vote_threshold(config.trees, 4, 5),
                                        {{"transform_tolerance", 0.05}, {"mean_tolerance", 0.10}}));
}

// --- connector diagnostic ----------------------------------------------------

void run_connector_kind(const ExperimentConfig& config, ExperimentReport& report) {
    const OffspringSpec spec = make_spec(config.distribution);
    const ModelConstants c = constants(spec);
    const std::uint64_t seed = *config.seed;
    const TreeStore store(spec, tree_seed(seed, 0));
    const int m = connector_level(config.n, c);
    ConnectorOptions options;
    options.target_survivors = config.runs;
    options.master_seed = seed;
    options.tree_index = 0;
    options.threads = config.effective_threads();
    options.node_cap = config.node_cap;
    const ConnectorStats stats = connector_diagnostic(store, config.n, m, options);
    report.results = {{"n", stats.n},
                      {"m", stats.m},
                      {"runs", stats.runs},
                      {"survivors", stats.survivors},
                      {"aborted", stats.aborted},
                      {"one", stats.one},
                      {"two_plus", stats.two_plus},
                      {"prob_one", stats.prob_one()},
                      {"prob_two_plus", stats.prob_two_plus()},
                      {"histogram", stats.histogram}};
    PlotTable hist{"connectors.csv", {"connectors", "frequency"}, {}};
    for (std::size_t i = 1; i < stats.histogram.size(); ++i)
        hist.rows.push_back({static_cast<double>(i), stats.survivors ? static_cast<double>(stats.histogram[i]) /
                                                                           static_cast<double>(stats.survivors)
                                                                     : 0.0});
    report.plots.push_back(hist);
    const bool pass = stats.survivors >= config.runs && stats.prob_two_plus() < 0.05;
    report.criteria.push_back({"A11", "two or more connectors is rare among surviving runs", pass,
                               {{"prob_two_plus", stats.prob_two_plus()}, {"threshold", 0.05},
                                {"survivors", stats.survivors}, {"m", m}}});
}

void run_constants_kind(const ExperimentConfig& config, ExperimentReport& report) {
    const ModelConstants c = constants(make_spec(config.distribution));
    const LimitLaw law(c);
    report.results["phi"] = targets_over(config.theta, [&](double t) { return law.phi(t); });
    report.results["size_biased_lt"] = targets_over(config.theta, [&](double t) { return law.size_biased_lt(t); });
    if (c.regime == Regime::FiniteVariance) report.results["size_biased_mean"] = law.size_biased_mean();
    PlotTable table{"constants.csv", {"theta", "phi", "size_biased_lt"}, {}};
    for (double t : config.theta) table.rows.push_back({t, law.phi(t), law.size_biased_lt(t)});
    report.plots.push_back(table);
}

void check(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

template <class T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string to_string(ExperimentKind kind) {
    for (const auto& k : kKindNames)
        if (k.kind == kind) return k.name;
    return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
    for (const auto& k : kKindNames)
        if (name == k.name) return k.kind;
    throw ConfigError("unknown experiment kind '" + name + "'");
}

std::vector<ExperimentKind> all_kinds() {
    std::vector<ExperimentKind> out;
    for (const auto& k : kKindNames) out.push_back(k.kind);
    return out;
}

int ExperimentConfig::effective_n_max() const noexcept {
    if (n_max >= 0) return n_max;
    return kind == ExperimentKind::QuenchedYaglom ? 2 * n : n;
}

unsigned ExperimentConfig::effective_threads() const noexcept {
    return threads > 0 ? threads : std::max(1U, std::thread::hardware_concurrency());
}

void ExperimentConfig::validate() const {
    check(seed.has_value(), "a master seed is required (config 'seed', GWPERC_SEED or --seed)");
    try {
        (void)make_spec(distribution);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid distribution: ") + e.what());
    }
    check(n >= 1 && n <= 1'000'000, "n must be in [1, 10^6]");
    check(n_max == -1 || (n_max >= n && n_max <= 2'000'000), "n_max must be -1 or in [n, 2*10^6]");
    const bool uses_runs = kind != ExperimentKind::Constants && kind != ExperimentKind::PropertySuite;
    check(!uses_runs || runs >= 1, "runs must be >= 1");
    check(runs <= 10'000'000'000ULL, "runs must be <= 10^10");
    check(trees >= 1 && trees <= 10'000, "trees must be in [1, 10^4]");
    check(m_W >= 0 && m_W <= 200, "m_W must be in [0, 200]");
    for (double t : theta) check(std::isfinite(t) && t >= 0.0, "theta values must be finite and >= 0");
    for (int l : levels) check(l >= 0 && l <= effective_n_max(), "levels must lie in [0, n_max]");
    for (double b : bins) check(std::isfinite(b) && b > 0.0, "bin centers must be positive");
    check(bin_half_width > 0.0 && bin_half_width < 1.0, "bin_half_width must be in (0, 1)");
    check(threads <= 4096, "threads must be <= 4096");
    check(node_cap >= 1, "node_cap must be >= 1");
    check(std::isfinite(csbp_a) && csbp_a >= 0.0, "csbp_a must be >= 0");
    check(std::isfinite(csbp_dt) && csbp_dt > 0.0, "csbp_dt must be > 0");
    if (kind == ExperimentKind::CsbpMarginal || kind == ExperimentKind::CsbpTransition) {
        check(runs >= 2, "CSBP checks need at least 2 paths");
        check(constants(make_spec(distribution)).regime == Regime::FiniteVariance,
              "CSBP path sampling needs a finite-variance law");
    }
}

json ExperimentConfig::to_json() const {
    return {{"name", name},
            {"kind", gwperc::to_string(kind)},
            {"distribution", distribution},
            {"n", n},
            {"n_max", n_max},
            {"runs", runs},
            {"trees", trees},
            {"m_W", m_W},
            {"theta", theta},
            {"levels", levels},
            {"bins", bins},
            {"bin_half_width", bin_half_width},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"output", output},
            {"threads", threads},
            {"node_cap", node_cap},
            {"csbp_a", csbp_a},
            {"csbp_dt", csbp_dt},
            {"write_samples", write_samples}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    if (j.contains("kind")) c = default_config(parse_kind(field<std::string>(j, "kind")));
    c.seed.reset();  // a config file names its own seed
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") continue;
        else if (key == "name") c.name = field<std::string>(j, "name");
        else if (key == "distribution") c.distribution = value;
        else if (key == "n") c.n = field<int>(j, "n");
        else if (key == "n_max") c.n_max = field<int>(j, "n_max");
        else if (key == "runs") c.runs = field<std::uint64_t>(j, "runs");
        else if (key == "trees") c.trees = field<std::uint64_t>(j, "trees");
        else if (key == "m_W") c.m_W = field<int>(j, "m_W");
        else if (key == "theta") c.theta = field<std::vector<double>>(j, "theta");
        else if (key == "levels") c.levels = field<std::vector<int>>(j, "levels");
        else if (key == "bins") c.bins = field<std::vector<double>>(j, "bins");
        else if (key == "bin_half_width") c.bin_half_width = field<double>(j, "bin_half_width");
        else if (key == "seed") c.seed = value.is_null() ? std::nullopt : std::optional(field<std::uint64_t>(j, "seed"));
        else if (key == "output") c.output = field<std::string>(j, "output");
        else if (key == "threads") c.threads = field<unsigned>(j, "threads");
        else if (key == "node_cap") c.node_cap = field<std::uint64_t>(j, "node_cap");
        else if (key == "csbp_a") c.csbp_a = field<double>(j, "csbp_a");
        else if (key == "csbp_dt") c.csbp_dt = field<double>(j, "csbp_dt");
        else if (key == "write_samples") c.write_samples = field<bool>(j, "write_samples");
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void ExperimentConfig::apply_environment() {
    const char* env = std::getenv("GWPERC_SEED");
    if (!env || !*env) return;
    try {
        std::size_t used = 0;
        const unsigned long long value = std::stoull(env, &used, 0);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        seed = value;
    } catch (const std::exception&) {
        throw ConfigError(std::string("GWPERC_SEED is not an unsigned integer: ") + env);
    }
}

std::vector<std::string> preset_names() {
    return {"constants",          "property-suite",   "annealed-survival", "annealed-yaglom",
            "annealed-stable",    "quenched-survival", "quenched-yaglom",  "csbp-marginal",
            "csbp-transition",    "iic-marginal",      "connector-diagnostic"};
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.seed = 20240601;
    const json uniform3 = explicit_pmf({{"1", 1.0 / 3}, {"2", 1.0 / 3}, {"3", 1.0 / 3}});
    const json mu12 = explicit_pmf({{"1", 0.8}, {"2", 0.2}});
    if (name == "constants") {
        c.kind = ExperimentKind::Constants;
        c.distribution = mu12;
    } else if (name == "property-suite") {
        c.kind = ExperimentKind::PropertySuite;
        c.distribution = mu12;
    } else if (name == "annealed-survival" || name == "annealed-yaglom") {
        c.kind = name == "annealed-survival" ? ExperimentKind::AnnealedSurvival : ExperimentKind::AnnealedYaglom;
        c.distribution = uniform3;
        c.n = 512;
        c.runs = 2'000'000;
    } else if (name == "annealed-stable") {
        c.kind = ExperimentKind::AnnealedYaglom;
        c.distribution = {{"kind", "zeta_tail"}, {"alpha", 1.5}};
        c.n = 512;
        c.runs = 2'000'000;
        // surviving heavy-tailed clusters hold ~n^{beta+1} vertices
        c.node_cap = 4'000'000'000ULL;
    } else if (name == "quenched-survival" || name == "quenched-yaglom") {
        c.kind = name == "quenched-survival" ? ExperimentKind::QuenchedSurvival : ExperimentKind::QuenchedYaglom;
        c.distribution = mu12;
        c.n = 256;
        c.runs = 1'000'000;
        c.trees = 10;
        c.m_W = 40;
    } else if (name == "csbp-marginal" || name == "csbp-transition") {
        c.kind = name == "csbp-marginal" ? ExperimentKind::CsbpMarginal : ExperimentKind::CsbpTransition;
        c.distribution = mu12;
        c.runs = 1'000'000;
    } else if (name == "iic-marginal") {
        c.kind = ExperimentKind::IicMarginal;
        c.distribution = mu12;
        c.n = 128;
        c.runs = 100'000;
        c.trees = 5;
        c.m_W = 40;
    } else if (name == "connector-diagnostic") {
        c.kind = ExperimentKind::ConnectorDiagnostic;
        c.distribution = mu12;
        c.n = 256;
        c.runs = 100'000;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

ExperimentConfig default_config(ExperimentKind kind) { return preset(to_string(kind)); }

json CriterionResult::to_json() const {
    return {{"id", id}, {"description", description}, {"passed", passed}, {"details", details}};
}

bool ExperimentReport::passed() const noexcept {
    return std::all_of(criteria.begin(), criteria.end(), [](const CriterionResult& c) { return c.passed; });
}

json ExperimentReport::to_json() const {
    json crit = json::array();
    for (const auto& c : criteria) crit.push_back(c.to_json());
    json cfg = config.to_json();
    cfg.erase("threads");  // a throughput knob; results do not depend on it
    cfg.erase("output");
    return {{"format_version", kReportFormatVersion},
            {"config", cfg},
            {"constants", constants},
            {"results", results},
            {"targets", targets},
            {"criteria", crit},
            {"passed", passed()},
            {"rng", {{"generator", "counter-based keyed mix64 stream"},
                     {"master_seed", config.seed ? json(*config.seed) : json(nullptr)}}}};
}

int exit_code(const ExperimentReport& report) noexcept { return report.passed() ? 0 : kExitFailure; }

void emit_plot_data(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& table : report.plots) {
        std::ostringstream out;
        out.precision(17);
        for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
        out << '\n';
        for (const auto& row : table.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
            out << '\n';
        }
        write_text(dir / table.file, out.str());
    }
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "report.json", report.to_json().dump(2) + "\n");
    std::string records;
    for (const auto& r : report.records) records += r.dump() + "\n";
    write_text(dir / "records.ldjson", records);
    write_text(dir / "timing.json", json{{"wall_seconds", report.wall_seconds}}.dump(2) + "\n");
    emit_plot_data(report, dir);
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.config = config;
    report.results = json::object();
    report.targets = json::object();
    report.constants = constants(make_spec(config.distribution)).to_json();

    switch (config.kind) {
        case ExperimentKind::Constants: run_constants_kind(config, report); break;
        case ExperimentKind::PropertySuite: run_property_suite(config, report); break;
        case ExperimentKind::AnnealedSurvival: run_annealed_kind(config, report, false); break;
        case ExperimentKind::AnnealedYaglom: run_annealed_kind(config, report, true); break;
        case ExperimentKind::QuenchedSurvival: run_quenched_kind(config, report, false); break;
        case ExperimentKind::QuenchedYaglom: run_quenched_kind(config, report, true); break;
        case ExperimentKind::CsbpMarginal: run_csbp_kind(config, report, true); break;
        case ExperimentKind::CsbpTransition: run_csbp_kind(config, report, false); break;
        case ExperimentKind::IicMarginal: run_iic_kind(config, report); break;
        case ExperimentKind::ConnectorDiagnostic: run_connector_kind(config, report); break;
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!config.output.empty()) write_report(report, config.output);
    return report;
}

}  // namespace gwperc
