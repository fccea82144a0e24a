#include "otground/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "otground/rng.hpp"

namespace otground {
namespace {

constexpr double kReluMargin = 1e-6;

std::vector<double> flatten(const ParameterTensors& p)
{
    std::vector<double> out;
    for_each_tensor(p, [&](std::string_view, auto span) { out.insert(out.end(), span.begin(), span.end()); });
    return out;
}

MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i, j) = dist(rng);
    return out;
}

// Gauss-Newton on the piecewise-linear projection MLP: finds a patch feature
// vector whose projection is close to `goal`.
VectorXd invert_projection(const MlpParams& prj, const VectorXd& goal, VectorXd x)
{
    for (int step = 0; step < 50; ++step) {
        const VectorXd pre = prj.w1.transpose() * x + prj.b1;
        const VectorXd active = (pre.array() > 0).cast<double>();
        const VectorXd out = prj.w2.transpose() * pre.cwiseMax(0.0) + prj.b2;
        const MatrixXd jac = prj.w2.transpose() * active.asDiagonal() * prj.w1.transpose();
        const VectorXd step_x = jac.completeOrthogonalDecomposition().solve(goal - out);
        if (!step_x.allFinite() || step_x.norm() < 1e-12)
            break;
        x += step_x;
    }
    return x;
}

} // namespace

double assignment_gap(const MatrixXd& C)
{
    if (C.rows() != C.cols() || C.rows() < 2 || C.rows() > 8)
        throw InvalidArgument("assignment_gap: needs a square matrix of size 2..8");
    std::vector<int> perm(static_cast<std::size_t>(C.rows()));
    for (std::size_t i = 0; i < perm.size(); ++i)
        perm[i] = static_cast<int>(i);
    double best = std::numeric_limits<double>::infinity(), second = best;
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i)
            cost += C(static_cast<Eigen::Index>(i), perm[i]);
        if (cost < best) {
            second = best;
            best = cost;
        } else if (cost < second) {
            second = cost;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return second - best;
}

double relative_error(double finite_difference, double analytic)
{
    return std::abs(finite_difference - analytic) /
           std::max(1e-8, std::abs(finite_difference) + std::abs(analytic));
}

GradCheckResult finite_difference_check(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                                        const GradCheckOptions& options)
{
    const BackpropResult reference = backprop(model, batch, cfg);
    const std::vector<double> analytic = flatten(reference.grads);
    const PlanSet* frozen = options.resolve_plans ? nullptr : &reference.plans;

    GroundingModel probe = model;
    GradCheckResult result;
    std::size_t flat = 0;
    for_each_tensor(probe, [&](std::string_view name, auto span) {
        for (std::size_t j = 0; j < span.size(); ++j, ++flat) {
            const double saved = span[j];
            span[j] = saved + options.epsilon;
            const double up = forward_loss(probe, batch, cfg, frozen).total;
            span[j] = saved - options.epsilon;
            const double down = forward_loss(probe, batch, cfg, frozen).total;
            span[j] = saved;

            const double fd = (up - down) / (2.0 * options.epsilon);
            const double err = relative_error(fd, analytic[flat]);
            ++result.checked;
            if (result.checked == 1 || err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_tensor = std::string(name);
                result.worst_index = j;
            }
        }
    });
    return result;
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed)
{
    ModelDims dims;
    dims.d_h = 4;
    dims.d_v = 4;
    dims.d_g = 3;
    dims.layers = 2;
    dims.k = 2;
    constexpr Eigen::Index tokens = 3, patches = 4;

    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng = make_rng(seed, attempt);
        GradCheckInstance inst;
        inst.model = init_model(dims, rng());
        inst.model.head_bias = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        for (auto* b : {&inst.model.vg.b1, &inst.model.vg.b2, &inst.model.prj.b1, &inst.model.prj.b2})
            *b = uniform_matrix(rng, b->size(), 1, -0.2, 0.2);

        for (int c = 0; c < 2; ++c) {
            TextEncoding text;
            for (int l = 0; l < dims.layers; ++l)
                text.layers.push_back(uniform_matrix(rng, tokens, dims.d_h, -1.0, 1.0));
            inst.captions.push_back(std::move(text));
        }
        for (int v = 0; v < 3; ++v) {
            VisionEncoding image;
            image.patches = uniform_matrix(rng, patches, dims.d_v, -1.0, 1.0);
            image.global = uniform_matrix(rng, dims.d_v, 1, -1.0, 1.0);
            inst.images.push_back(std::move(image));
        }
        inst.items = {{0, 0, 1}, {1, 1, 2}};
        if (min_abs_preactivation(inst.model, inst.batch()) >= kReluMargin)
            return inst;
    }
}

GradCheckInstance make_separated_instance(std::uint64_t seed, double min_gap)
{
    ModelDims dims;
    dims.d_h = 4;
    dims.d_v = 4;
    dims.d_g = 3;
    dims.layers = 2;
    dims.k = 2;
    constexpr Eigen::Index tokens = 3;

    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng = make_rng(seed, 1000003 + attempt);
        GradCheckInstance inst;
        inst.model = init_model(dims, rng());
        for (auto* b : {&inst.model.vg.b1, &inst.model.prj.b1})
            *b = uniform_matrix(rng, b->size(), 1, -0.2, 0.2);

        bool ok = true;
        for (int c = 0; c < 2 && ok; ++c) {
            TextEncoding text;
            for (int l = 0; l < dims.layers; ++l)
                text.layers.push_back(uniform_matrix(rng, tokens, dims.d_h, -1.0, 1.0));
            const MatrixXd ground = ground_embed(inst.model, text);
            inst.captions.push_back(std::move(text));

            // A matching image sends patch j near ground row j; the paired
            // non-matching image uses a cyclic shift of the rows.
            for (int shift = 0; shift < 2 && ok; ++shift) {
                VisionEncoding image;
                image.patches.resize(tokens, dims.d_v);
                for (Eigen::Index j = 0; j < tokens; ++j) {
                    const VectorXd goal = ground.row((j + shift) % tokens).transpose() +
                                          uniform_matrix(rng, dims.d_g, 1, -0.05, 0.05);
                    image.patches.row(j) =
                        invert_projection(inst.model.prj, goal, uniform_matrix(rng, dims.d_v, 1, -1.0, 1.0))
                            .transpose();
                }
                image.global = uniform_matrix(rng, dims.d_v, 1, -1.0, 1.0);
                if (!image.patches.allFinite() || image.patches.cwiseAbs().maxCoeff() > 10.0)
                    ok = false;
                inst.images.push_back(std::move(image));
            }
        }
        if (!ok)
            continue;
        inst.items = {{0, 0, 1}, {1, 2, 3}};
        for (const PairTriple& t : inst.items) {
            const MatrixXd ground = ground_embed(inst.model, inst.captions[t.caption]);
            for (std::size_t img : {t.positive, t.negative}) {
                try {
                    const MatrixXd C =
                        cosine_cost_matrix(project_image(inst.model, inst.images[img]).patches, ground);
                    ok = ok && assignment_gap(C) >= min_gap;
                } catch (const DegenerateInput&) {
                    ok = false;
                }
            }
        }
        if (ok && min_abs_preactivation(inst.model, inst.batch()) >= kReluMargin)
            return inst;
    }
}

std::vector<GateRow> run_gradient_gate(std::uint64_t seed, int instances)
{
    struct Case {
        Strategy strategy;
        bool resolve;
    };
    const Case cases[] = {{Strategy::Cls, false},
                          {Strategy::ClsOt, false},
                          {Strategy::ClsPot, false},
                          {Strategy::ClsOt, true},
                          {Strategy::ClsPot, true}};

    std::vector<GateRow> rows;
    for (const Case& c : cases) {
        GateRow row{c.strategy, c.resolve, 0.0, c.resolve ? kResolvedPlanTolerance : kFrozenPlanTolerance};
        for (int i = 0; i < instances; ++i) {
            const std::uint64_t instance_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
            const GradCheckInstance inst = c.resolve ? make_separated_instance(instance_seed)
                                                     : make_gradcheck_instance(instance_seed);
            LossConfig cfg;
            cfg.strategy = c.strategy;
            cfg.solver.beta = 0.05;
            cfg.solver.iters = 200;
            cfg.solver.mass = 1.0;
            GradCheckOptions opts;
            opts.resolve_plans = c.resolve;
            row.max_rel_error =
                std::max(row.max_rel_error, finite_difference_check(inst.model, inst.batch(), cfg, opts).max_rel_error);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace otground
