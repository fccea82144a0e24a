#include "otground/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace otground {
namespace {

void require_finite(const MatrixXd& x, const char* node, std::size_t item)
{
    if (!x.allFinite())
        throw NumericFailure(std::string("non-finite value at node '") + node + "' (item " + std::to_string(item) + ")");
}

struct MlpTrace {
    MatrixXd input;
    MatrixXd pre;
    MatrixXd act;
    MatrixXd out;
};

MlpTrace trace_mlp(const MlpParams& p, MatrixXd input, const char* hidden_node, const char* out_node,
                   std::size_t item)
{
    if (input.cols() != p.in_dim())
        throw InvalidArgument(std::string(hidden_node) + ": input width " + std::to_string(input.cols()) +
                              " != " + std::to_string(p.in_dim()));
    MlpTrace t;
    t.input = std::move(input);
    // Same row-by-row arithmetic as mlp_forward_rows.
    t.pre.resize(t.input.rows(), p.hidden_dim());
    for (Eigen::Index i = 0; i < t.input.rows(); ++i)
        t.pre.row(i) = (p.w1.transpose() * t.input.row(i).transpose() + p.b1).transpose();
    require_finite(t.pre, hidden_node, item);
    t.act = t.pre.cwiseMax(0.0);
    t.out.resize(t.input.rows(), p.out_dim());
    for (Eigen::Index i = 0; i < t.input.rows(); ++i)
        t.out.row(i) = (p.w2.transpose() * t.act.row(i).transpose() + p.b2).transpose();
    require_finite(t.out, out_node, item);
    return t;
}

// Accumulates parameter gradients; relu'(0) = 0.
void backward_mlp(const MlpParams& p, const MlpTrace& t, const MatrixXd& d_out, MlpParams& g)
{
    g.w2.noalias() += t.act.transpose() * d_out;
    g.b2 += d_out.colwise().sum().transpose();
    const MatrixXd d_pre = (d_out * p.w2.transpose()).cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
    g.w1.noalias() += t.input.transpose() * d_pre;
    g.b1 += d_pre.colwise().sum().transpose();
}

struct TextTrace {
    MlpTrace vg;
    const MatrixXd* hidden_final = nullptr;

    const MatrixXd& ground() const { return vg.out; }
    VectorXd cls() const
    {
        VectorXd t(hidden_final->cols() + vg.out.cols());
        t << hidden_final->row(0).transpose(), vg.out.row(0).transpose();
        return t;
    }
};

TextTrace trace_text(const GroundingModel& model, const TextEncoding& text, std::size_t item)
{
    if (text.width() != model.dims.d_h)
        throw InvalidArgument("caption hidden width " + std::to_string(text.width()) + " != d_h " +
                              std::to_string(model.dims.d_h));
    TextTrace t;
    t.vg = trace_mlp(model.vg, stack_final_layers(text, model.dims.k), "vg.hidden", "vg.out", item);
    t.hidden_final = &text.final_layer();
    return t;
}

struct ImageTrace {
    MlpTrace prj;
    Eigen::Index patches = 0;

    VectorXd cls() const { return prj.out.row(0).transpose(); }
    auto patch_rows() const { return prj.out.bottomRows(patches); }
};

ImageTrace trace_image(const GroundingModel& model, const VisionEncoding& vision, std::size_t item)
{
    if (vision.patches.rows() < 1)
        throw InvalidArgument("image has no patches (item " + std::to_string(item) + ")");
    if (vision.global.size() != model.dims.d_v || vision.patches.cols() != model.dims.d_v)
        throw InvalidArgument("image feature width != d_v " + std::to_string(model.dims.d_v));
    MatrixXd stacked(vision.patches.rows() + 1, vision.patches.cols());
    stacked << vision.global.transpose(), vision.patches;
    ImageTrace t;
    t.patches = vision.patches.rows();
    t.prj = trace_mlp(model.prj, std::move(stacked), "prj.hidden", "prj.out", item);
    return t;
}

// Operands of the cosine cost: rows of `source` are image patches, rows of
// `target` caption tokens.
struct AlignOperands {
    MatrixXd source;
    MatrixXd target;
};

AlignOperands align_operands(const TextTrace& text, const ImageTrace& image, AlignTarget mode)
{
    AlignOperands ops;
    if (mode == AlignTarget::Ground) {
        ops.source = image.patch_rows();
        ops.target = text.ground();
    } else {
        const Eigen::Index d_h = text.hidden_final->cols();
        ops.source = MatrixXd::Zero(image.patches, d_h + image.prj.out.cols());
        ops.source.rightCols(image.prj.out.cols()) = image.patch_rows();
        ops.target = visual_textual_embed(*text.hidden_final, text.ground());
    }
    return ops;
}

// Gradient of sum(d_cost .* (1 - S_hat T_hat^T)) with respect to S and T.
void backward_cosine(const AlignOperands& ops, const MatrixXd& d_cost, MatrixXd& d_source, MatrixXd& d_target)
{
    const VectorXd s_norm = ops.source.rowwise().norm();
    const VectorXd t_norm = ops.target.rowwise().norm();
    const MatrixXd s_unit = s_norm.cwiseInverse().asDiagonal() * ops.source;
    const MatrixXd t_unit = t_norm.cwiseInverse().asDiagonal() * ops.target;

    const MatrixXd d_s_unit = -d_cost * t_unit;
    const MatrixXd d_t_unit = -d_cost.transpose() * s_unit;

    auto through_normalize = [](const MatrixXd& unit, const VectorXd& norm, const MatrixXd& d_unit) {
        const VectorXd radial = d_unit.cwiseProduct(unit).rowwise().sum();
        return MatrixXd(norm.cwiseInverse().asDiagonal() * (d_unit - radial.asDiagonal() * unit));
    };
    d_source = through_normalize(s_unit, s_norm, d_s_unit);
    d_target = through_normalize(t_unit, t_norm, d_t_unit);
}

struct Evaluation {
    LossReport report;
    PlanSet plans;
};

// One batch through the graph. `grads` may be null for forward-only use.
Evaluation evaluate(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                    const PlanSet* frozen, GradientSet* grads)
{
    if (batch.items.empty())
        throw InvalidArgument("empty batch");
    if (cfg.w_cls < 0 || cfg.w_align < 0)
        throw InvalidArgument("loss weights must be >= 0");
    const Eigen::Index head_len = 2 * model.dims.d_g + model.dims.d_h;
    if (model.head_weight.size() != head_len)
        throw InvalidArgument("head length " + std::to_string(model.head_weight.size()) + " != " +
                              std::to_string(head_len));

    const std::size_t count = batch.items.size();
    if (frozen && (frozen->positive.size() != count || frozen->negative.size() != count))
        throw InvalidArgument("frozen plan set does not match batch size");

    const bool with_cls = uses_classifier(cfg.strategy);
    const std::optional<TransportMode> mode = alignment_mode(cfg.strategy);
    const double scale = 1.0 / static_cast<double>(count);

    Evaluation ev;
    ev.plans.positive.resize(count);
    ev.plans.negative.resize(count);
    double cls_sum = 0.0, align_sum = 0.0, total_sum = 0.0;

    for (std::size_t i = 0; i < count; ++i) {
        const PairTriple& triple = batch.items[i];
        if (triple.caption >= batch.captions.size() || triple.positive >= batch.images.size() ||
            triple.negative >= batch.images.size())
            throw InvalidArgument("batch item " + std::to_string(i) + " references a missing encoding");

        const TextTrace text = trace_text(model, batch.captions[triple.caption], i);
        const ImageTrace pos = trace_image(model, batch.images[triple.positive], i);
        const ImageTrace neg = trace_image(model, batch.images[triple.negative], i);

        MatrixXd d_ground = MatrixXd::Zero(text.ground().rows(), text.ground().cols());
        MatrixXd d_pos = MatrixXd::Zero(pos.prj.out.rows(), pos.prj.out.cols());
        MatrixXd d_neg = MatrixXd::Zero(neg.prj.out.rows(), neg.prj.out.cols());
        double item_total = 0.0;

        if (with_cls) {
            const VectorXd t_cls = text.cls();
            double cls_item = 0.0;
            auto classify = [&](const ImageTrace& image, int label, MatrixXd& d_image) {
                const VectorXd v_cls = image.cls();
                const double logit = model.head_weight.head(v_cls.size()).dot(v_cls) +
                                     model.head_weight.tail(t_cls.size()).dot(t_cls) + model.head_bias;
                if (!std::isfinite(logit))
                    throw NumericFailure("non-finite value at node 'head.logit' (item " + std::to_string(i) + ")");
                const double p = sigmoid(logit);
                cls_item += 0.5 * bce_loss(p, label);
                if (!grads)
                    return;
                const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
                const double d_logit = clamped ? 0.0 : scale * cfg.w_cls * 0.5 * (p - label);
                grads->head_weight.head(v_cls.size()) += d_logit * v_cls;
                grads->head_weight.tail(t_cls.size()) += d_logit * t_cls;
                grads->head_bias += d_logit;
                d_image.row(0) += d_logit * model.head_weight.head(v_cls.size()).transpose();
                d_ground.row(0) += d_logit * model.head_weight.tail(d_ground.cols()).transpose();
            };
            classify(pos, 1, d_pos);
            classify(neg, 0, d_neg);
            cls_sum += cls_item;
            item_total += cfg.w_cls * cls_item;
        }

        if (mode) {
            auto distance = [&](const ImageTrace& image, const MatrixXd* fixed_plan, MatrixXd& plan_out,
                                AlignOperands& ops, MatrixXd& cost) {
                ops = align_operands(text, image, cfg.align_target);
                cost = cosine_cost_matrix(ops.source, ops.target);
                require_finite(cost, "cost", i);
                if (fixed_plan) {
                    if (fixed_plan->rows() != cost.rows() || fixed_plan->cols() != cost.cols())
                        throw InvalidArgument("frozen plan shape mismatch at item " + std::to_string(i));
                    plan_out = *fixed_plan;
                } else {
                    try {
                        plan_out = solve_transport(*mode, cost, uniform_weights(cost.rows()),
                                                   uniform_weights(cost.cols()), cfg.solver)
                                       .plan;
                    } catch (const NumericFailure& e) {
                        throw NumericFailure("item " + std::to_string(i) + ": " + e.what());
                    }
                }
                return cost.cwiseProduct(plan_out).sum();
            };

            AlignOperands ops_pos, ops_neg;
            MatrixXd cost_pos, cost_neg;
            const double dp = distance(pos, frozen ? &frozen->positive[i] : nullptr, ev.plans.positive[i],
                                       ops_pos, cost_pos);
            const double dn = distance(neg, frozen ? &frozen->negative[i] : nullptr, ev.plans.negative[i],
                                       ops_neg, cost_neg);
            ev.report.d_pos.push_back(dp);
            ev.report.d_neg.push_back(dn);

            double align_item = dp - dn;
            bool active = true;
            if (cfg.hinge_margin) {
                align_item = *cfg.hinge_margin + dp - dn;
                active = align_item > 0.0;
                align_item = std::max(align_item, 0.0);
            }
            align_sum += align_item;
            item_total += cfg.w_align * align_item;

            if (grads && active) {
                const double coef = scale * cfg.w_align;
                auto push_back_cost = [&](const AlignOperands& ops, const MatrixXd& plan, double sign,
                                          MatrixXd& d_image) {
                    MatrixXd d_source, d_target;
                    backward_cosine(ops, sign * coef * plan, d_source, d_target);
                    d_image.bottomRows(d_source.rows()) += d_source.rightCols(d_image.cols());
                    d_ground += d_target.rightCols(d_ground.cols());
                };
                push_back_cost(ops_pos, ev.plans.positive[i], 1.0, d_pos);
                push_back_cost(ops_neg, ev.plans.negative[i], -1.0, d_neg);
            }
        }
        total_sum += item_total;

        if (grads) {
            backward_mlp(model.vg, text.vg, d_ground, grads->vg);
            backward_mlp(model.prj, pos.prj, d_pos, grads->prj);
            backward_mlp(model.prj, neg.prj, d_neg, grads->prj);
        }
    }

    ev.report.cls_loss = cls_sum * scale;
    ev.report.align_loss = align_sum * scale;
    ev.report.total = total_sum * scale;
    if (grads) {
        for_each_tensor(*grads, [](std::string_view name, auto span) {
            for (double v : span)
                if (!std::isfinite(v))
                    throw NumericFailure("non-finite gradient in '" + std::string(name) + "'");
        });
    }
    return ev;
}

} // namespace

BackpropResult backprop(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                        const PlanSet* frozen)
{
    BackpropResult result;
    result.grads = zero_gradients(model);
    Evaluation ev = evaluate(model, batch, cfg, frozen, &result.grads);
    result.report = std::move(ev.report);
    result.plans = std::move(ev.plans);
    return result;
}

LossReport forward_loss(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                        const PlanSet* frozen)
{
    return evaluate(model, batch, cfg, frozen, nullptr).report;
}

double min_abs_preactivation(const GroundingModel& model, const PairBatch& batch)
{
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
        const PairTriple& t = batch.items[i];
        smallest = std::min(smallest, trace_text(model, batch.captions[t.caption], i).vg.pre.cwiseAbs().minCoeff());
        for (std::size_t img : {t.positive, t.negative})
            smallest = std::min(smallest, trace_image(model, batch.images[img], i).prj.pre.cwiseAbs().minCoeff());
    }
    return smallest;
}

double transport_distance(const GroundingModel& model, const TextEncoding& caption, const VisionEncoding& image,
                          const SolverConfig& solver, TransportMode mode, AlignTarget target)
{
    const TextTrace text = trace_text(model, caption, 0);
    const ImageTrace img = trace_image(model, image, 0);
    const AlignOperands ops = align_operands(text, img, target);
    const MatrixXd cost = cosine_cost_matrix(ops.source, ops.target);
    return solve_transport(mode, cost, uniform_weights(cost.rows()), uniform_weights(cost.cols()), solver).distance;
}

double match_probability(const GroundingModel& model, const TextEncoding& caption, const VisionEncoding& image)
{
    const TextTrace text = trace_text(model, caption, 0);
    const ImageTrace img = trace_image(model, image, 0);
    return match_predict(img.cls(), text.cls(), model.head_weight, model.head_bias);
}

} // namespace otground
