// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>

#include "otground/cli.hpp"
#include "otground/config.hpp"
#include "otground/gradcheck.hpp"
#include "otground/io.hpp"
#include "otground/lp_oracle.hpp"
#include "support.hpp"

using namespace otground;
using otground::testing::bitwise_equal;
using otground::testing::random_instance;

namespace {

constexpr std::uint64_t kInstanceSeed = 2024;
constexpr int kInstances = 50;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* pattern, auto... args)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

double max_excess(const VectorXd& actual, const VectorXd& bound)
{
    return (actual - bound).maxCoeff();
}

Outcome oracle_ot()
{
    const SolverConfig cfg{0.01, 500, 1.0};
    double worst = 0.0;
    int failures = 0;
    for (int k = 0; k < kInstances; ++k) {
        const auto inst = random_instance(kInstanceSeed, static_cast<std::uint64_t>(k));
        const double err =
            std::abs(solve_ot(inst.C, inst.a, inst.b, cfg).distance - exact_lp_oracle(inst.C, inst.a, inst.b));
        worst = std::max(worst, err);
        failures += err >= 1e-3;
    }
    return {failures == 0, fmt("max |D - LP| = %.3g, %d/%d instances over 1e-3", worst, failures, kInstances)};
}

Outcome oracle_pot()
{
    std::string detail;
    bool pass = true;
    for (double s : {0.25, 0.5, 1.0}) {
        const SolverConfig cfg{0.01, 500, s};
        double worst = 0.0;
        int failures = 0;
        for (int k = 0; k < kInstances; ++k) {
            const auto inst = random_instance(kInstanceSeed, static_cast<std::uint64_t>(k));
            const double err = std::abs(solve_pot(inst.C, inst.a, inst.b, cfg).distance -
                                        exact_lp_oracle(inst.C, inst.a, inst.b, s));
            worst = std::max(worst, err);
            failures += err >= 2e-3;
        }
        pass = pass && failures == 0;
        detail += fmt("%ss=%.2f: max %.3g (%d over 2e-3)", detail.empty() ? "" : "; ", s, worst, failures);
    }
    return {pass, detail};
}

Outcome constraints()
{
    double mass_err = 0.0, pot_excess = -1.0, ot_residual = 0.0;
    for (int k = 0; k < kInstances; ++k) {
        const auto inst = random_instance(kInstanceSeed, static_cast<std::uint64_t>(k));
        for (double s : {0.25, 0.5, 1.0}) {
            const auto r = solve_pot(inst.C, inst.a, inst.b, SolverConfig{0.05, 200, s});
            mass_err = std::max(mass_err, std::abs(r.plan.sum() - s));
            pot_excess = std::max({pot_excess, max_excess(r.plan.rowwise().sum(), inst.a),
                                   max_excess(r.plan.colwise().sum().transpose(), inst.b)});
        }
        const auto r = solve_ot(inst.C, inst.a, inst.b, SolverConfig{0.05, 200, 1.0});
        ot_residual = std::max({ot_residual, (r.plan.rowwise().sum() - inst.a).cwiseAbs().maxCoeff(),
                                (r.plan.colwise().sum().transpose() - inst.b).cwiseAbs().maxCoeff()});
    }
    // Summing the rescaled plan rounds; "exact" is read as within a few ulps.
    const bool pass = mass_err <= 1e-14 && pot_excess <= 1e-6 && ot_residual < 1e-6;
    return {pass, fmt("POT |mass - s| %.2g, POT marginal excess %.3g, OT marginal residual %.3g", mass_err,
                      pot_excess, ot_residual)};
}

Outcome pot_reduces_to_ot()
{
    const SolverConfig cfg{};
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto inst = random_instance(kInstanceSeed + 1, static_cast<std::uint64_t>(k), 3, 3, 3, 3);
        worst = std::max(worst, std::abs(solve_pot(inst.C, inst.a, inst.b, cfg).distance -
                                         solve_ot(inst.C, inst.a, inst.b, cfg).distance));
    }
    return {worst < 2e-3, fmt("max |D_pot - D_ot| = %.3g over 20 3x3 instances", worst)};
}

Outcome gradient_gate()
{
    Outcome out;
    for (const GateRow& row : run_gradient_gate(7, 10)) {
        out.pass = out.pass && row.passed();
        out.detail += fmt("%s%s/%s %.2g", out.detail.empty() ? "" : ", ", std::string(to_string(row.strategy)).c_str(),
                          row.resolve_plans ? "resolved" : "frozen", row.max_rel_error);
    }
    return out;
}

Outcome toy_training()
{
    TrainConfig cfg;
    const SyntheticDataset data = generate_synthetic_dataset(cfg.data, cfg.seeds.data);
    const EncodedDataset encoded = encode_dataset(data, cfg);
    Outcome out;
    for (Strategy s : {Strategy::ClsPot, Strategy::ClsOt, Strategy::Cls}) {
        cfg.train.strategy = s;
        const auto start = std::chrono::steady_clock::now();
        const TrainResult r = train(cfg, data, encoded);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const Metrics& m = r.final_metrics;
        const double first = r.history.front().loss;
        bool trend = r.history.back().loss < first;
        for (const EpochRecord& rec : r.history)
            if (rec.epoch >= 50)
                trend = trend && rec.loss < first;
        const bool needs_gap = s != Strategy::Cls;
        const bool ok = m.accuracy >= 0.9 && (!needs_gap || m.gap > 0) && trend && seconds < 120;
        out.pass = out.pass && ok;
        out.detail += fmt("%s%s acc %.3f gap %.3g loss %.4g->%.4g %.1fs", out.detail.empty() ? "" : "; ",
                          std::string(to_string(s)).c_str(), m.accuracy, m.gap, first, r.history.back().loss,
                          seconds);
    }
    return out;
}

Outcome determinism()
{
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / ("otground-accept-" + std::to_string(::getpid()));
    fs::remove_all(root);
    std::string outputs[2];
    for (int i = 0; i < 2; ++i) {
        std::ostringstream out, err;
        const int code =
            cli::dispatch({"otground", "train", "--out-dir", (root / std::to_string(i)).string()}, out, err);
        if (code != 0) {
            fs::remove_all(root);
            return {false, "train exited with " + std::to_string(code) + ": " + err.str()};
        }
        outputs[i] = out.str();
    }
    bool same = outputs[0] == outputs[1];
    for (const char* name : {"checkpoint.json", "metrics.jsonl"})
        same = same && read_file(root / "0" / name) == read_file(root / "1" / name);
    fs::remove_all(root);
    return {same, same ? "checkpoint.json and metrics.jsonl identical" : "artifacts differ"};
}

Outcome invariance_suite()
{
    int failures = 0, checks = 0;
    std::map<std::string, int> by_property;
    auto expect = [&](bool ok, const char* property) {
        ++checks;
        failures += !ok;
        by_property[property] += !ok;
    };
    const SolverConfig base{};
    for (int k = 0; k < kInstances; ++k) {
        const auto inst = random_instance(kInstanceSeed + 2, static_cast<std::uint64_t>(k));
        const auto r = solve_ot(inst.C, inst.a, inst.b, base);

        for (double lambda : {2.0, 0.5, 8.0}) {
            const MatrixXd scaled = lambda * inst.C;
            const auto rs = solve_ot(scaled, inst.a, inst.b, SolverConfig{lambda * base.beta, base.iters, 1.0});
            expect(bitwise_equal(rs.plan, r.plan), "covariance");
            expect(std::abs(rs.distance - lambda * r.distance) <= 1e-15 * std::max(1.0, lambda * r.distance), "covariance");
        }

        std::vector<Eigen::Index> order(static_cast<std::size_t>(inst.C.rows()));
        std::iota(order.begin(), order.end(), 0);
        std::rotate(order.begin(), order.begin() + 1, order.end());
        MatrixXd Cp(inst.C.rows(), inst.C.cols());
        VectorXd ap(inst.a.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            Cp.row(static_cast<Eigen::Index>(i)) = inst.C.row(order[i]);
            ap(static_cast<Eigen::Index>(i)) = inst.a(order[i]);
        }
        const auto rp = solve_ot(Cp, ap, inst.b, base);
        expect(std::abs(rp.distance - r.distance) < 1e-12, "permutation");
        for (std::size_t i = 0; i < order.size(); ++i)
            expect((rp.plan.row(static_cast<Eigen::Index>(i)) - r.plan.row(order[i])).cwiseAbs().maxCoeff() < 1e-12,
                   "permutation");

        const MatrixXd Ct = inst.C.transpose();
        const auto rt = solve_ot(Ct, inst.b, inst.a, base);
        expect(std::abs(rt.distance - r.distance) < 1e-9, "transpose");
        expect((rt.plan - r.plan.transpose()).cwiseAbs().maxCoeff() < 1e-9, "transpose");
    }

    Rng rng = make_rng(kInstanceSeed);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd H = otground::testing::random_matrix(rng, 3, 4);
        const MatrixXd G = otground::testing::random_matrix(rng, 3, 5);
        const MatrixXd T = visual_textual_embed(H, G);
        expect(bitwise_equal(T.leftCols(4), H) && bitwise_equal(T.rightCols(5), G), "concat");

        const MatrixXd E = otground::testing::random_matrix(rng, 3, 4).cast<float>().cast<double>();
        expect(bitwise_equal(decode_embeddings(encode_embeddings(E)), E), "file format");
    }
    const GroundingModel model = init_model(ModelDims{}, kInstanceSeed);
    expect(parse_checkpoint(checkpoint_to_string({TrainConfig{}, model, std::nullopt})).model == model, "file format");

    std::string detail = fmt("%d/%d checks failed", failures, checks);
    for (const auto& [property, count] : by_property)
        detail += fmt(", %s %d", property.c_str(), count);
    return {failures == 0, detail};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"oracle equivalence (OT)", oracle_ot},
        {"oracle equivalence (POT)", oracle_pot},
        {"constraint satisfaction", constraints},
        {"POT reduces to OT", pot_reduces_to_ot},
        {"gradient gate", gradient_gate},
        {"toy training", toy_training},
        {"determinism", determinism},
        {"invariance suite", invariance_suite},
    };
    const double limits[] = {5.0, 10.0, 0.0, 0.0, 30.0, 0.0, 0.0, 0.0};

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (limits[i] > 0 && seconds >= limits[i]) {
            o.pass = false;
            o.detail += fmt("; over the %.0fs budget", limits[i]);
        }
        failed += !o.pass;
        std::printf("criterion %zu %s: %s (%s) [%.2fs]\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str(), seconds);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
