#include "otground/training.hpp"

#include <numeric>
#include <string>

#include "otground/backprop.hpp"
#include "otground/rng.hpp"

namespace otground {
namespace {

constexpr std::uint64_t kEvalSalt = 0xe7a1;
constexpr std::uint64_t kTextEncoderSalt = 0x7e;
constexpr std::uint64_t kVisualEncoderSalt = 0x71;

void fisher_yates(std::vector<std::size_t>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(v[i - 1], v[pick(rng)]);
    }
}

} // namespace

LossConfig TrainConfig::loss_config() const
{
    LossConfig cfg;
    cfg.strategy = train.strategy;
    cfg.w_cls = train.w_cls;
    cfg.w_align = train.w_align;
    cfg.hinge_margin = train.hinge_margin;
    cfg.solver = solver;
    cfg.align_target = align_target;
    return cfg;
}

AdamWHyper TrainConfig::adamw() const
{
    return {train.lr, train.beta1, train.beta2, train.eps, train.weight_decay};
}

void validate(const TrainConfig& cfg)
{
    detail::require_config(cfg.solver);
    if (!(cfg.solver.mass > 0))
        throw InvalidArgument("solver.mass_fraction must be > 0");
    validate_dims(cfg.model);
    validate(cfg.data);
    const TrainSettings& t = cfg.train;
    if (!(t.lr >= 0) || !(t.weight_decay >= 0))
        throw InvalidArgument("train.lr and train.weight_decay must be >= 0");
    if (!(t.beta1 >= 0 && t.beta1 < 1) || !(t.beta2 >= 0 && t.beta2 < 1) || !(t.eps > 0))
        throw InvalidArgument("train adam moments must satisfy 0 <= beta < 1, eps > 0");
    if (t.epochs < 0 || t.batch_size < 1)
        throw InvalidArgument("train.epochs must be >= 0 and train.batch_size >= 1");
    if (!(t.w_cls >= 0) || !(t.w_align >= 0))
        throw InvalidArgument("train loss weights must be >= 0");
}

EncodedDataset encode_dataset(const SyntheticDataset& data, const TrainConfig& cfg)
{
    const StubTextEncoder text(cfg.model.layers, cfg.model.d_h, mix_seed(cfg.seeds.data, kTextEncoderSalt));
    const StubVisualEncoder vision(static_cast<int>(data.concept_vectors.cols()), cfg.model.d_v,
                                   mix_seed(cfg.seeds.data, kVisualEncoderSalt));
    EncodedDataset out;
    for (const Caption& c : data.captions)
        out.captions.push_back(text.encode(c.tokens));
    for (const Scene& s : data.scenes)
        out.images.push_back(vision.encode(s.patch_latents));
    return out;
}

Metrics evaluate(const GroundingModel& model, std::span<const TextEncoding> captions,
                 std::span<const VisionEncoding> images, const EvalOptions& options)
{
    const std::size_t n = captions.size();
    if (n < 2 || images.size() != n)
        throw InvalidArgument("evaluate: need >= 2 caption/image pairs with matching counts");

    auto distance = [&](std::size_t c, std::size_t v) {
        return transport_distance(model, captions[c], images[v], options.solver, options.mode, options.align_target);
    };

    Rng rng = make_rng(options.seed, kEvalSalt);
    Metrics m;
    std::size_t correct = 0, hits = 0;
    double d_pos = 0.0, d_neg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t neg = sample_negative(i, n, rng);
        correct += match_probability(model, captions[i], images[i]) >= 0.5 ? 1 : 0;
        correct += match_probability(model, captions[i], images[neg]) < 0.5 ? 1 : 0;

        const double own = distance(i, i);
        d_pos += own;
        d_neg += distance(i, neg);

        if (options.with_recall) {
            std::size_t best = 0;
            double best_d = i == 0 ? own : distance(i, 0);
            for (std::size_t j = 1; j < n; ++j) {
                const double d = j == i ? own : distance(i, j);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            hits += best == i ? 1 : 0;
        }
    }
    const double count = static_cast<double>(n);
    m.pairs = 2 * n;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.pairs);
    m.recall_at_1 = static_cast<double>(hits) / count;
    m.mean_d_pos = d_pos / count;
    m.mean_d_neg = d_neg / count;
    m.gap = m.mean_d_neg - m.mean_d_pos;
    return m;
}

EvalOptions eval_options(const TrainConfig& cfg)
{
    EvalOptions o;
    o.solver = cfg.solver;
    o.mode = cfg.eval_mode;
    o.align_target = cfg.align_target;
    o.seed = cfg.seeds.train;
    return o;
}

TrainResult train(const TrainConfig& cfg, const SyntheticDataset& data, const EpochCallback& on_epoch)
{
    validate(cfg);
    return train(cfg, data, encode_dataset(data, cfg), on_epoch);
}

TrainResult train(const TrainConfig& cfg, const SyntheticDataset& data, const EncodedDataset& encoded,
                  const EpochCallback& on_epoch)
{
    validate(cfg);
    if (encoded.captions.size() != data.size() || encoded.images.size() != data.size())
        throw InvalidArgument("train: encoder cache does not match the dataset");

    const std::size_t n_train = data.train_count;
    const bool holdout = data.eval_count() >= 2;
    const std::size_t eval_first = holdout ? n_train : 0;
    const std::size_t eval_count = holdout ? data.eval_count() : n_train;
    const std::span<const TextEncoding> eval_captions(encoded.captions.data() + eval_first, eval_count);
    const std::span<const VisionEncoding> eval_images(encoded.images.data() + eval_first, eval_count);

    TrainResult result;
    result.model = init_model(cfg.model, cfg.seeds.init);
    result.optimizer = init_optimizer(result.model);
    const LossConfig loss_cfg = cfg.loss_config();
    const AdamWHyper hyper = cfg.adamw();
    const EvalOptions eval = eval_options(cfg);

    Rng rng = make_rng(cfg.seeds.train);
    std::vector<std::size_t> order(n_train);
    const auto batch_size = static_cast<std::size_t>(cfg.train.batch_size);

    for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        fisher_yates(order, rng);

        EpochRecord record;
        record.epoch = epoch;
        for (std::size_t start = 0; start < n_train; start += batch_size) {
            PairBatch batch{encoded.captions, encoded.images, {}};
            for (std::size_t j = start; j < std::min(n_train, start + batch_size); ++j)
                batch.items.push_back({order[j], order[j], sample_negative(order[j], n_train, rng)});

            BackpropResult step;
            try {
                step = backprop(result.model, batch, loss_cfg);
                adamw_step(result.model, step.grads, result.optimizer, hyper);
            } catch (const NumericFailure& e) {
                throw NumericFailure("epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / batch_size) + ": " + e.what());
            }
            const double weight = static_cast<double>(batch.items.size()) / static_cast<double>(n_train);
            record.loss += weight * step.report.total;
            record.cls_loss += weight * step.report.cls_loss;
            record.align_loss += weight * step.report.align_loss;
        }
        record.metrics = evaluate(result.model, eval_captions, eval_images, eval);
        result.history.push_back(record);
        if (on_epoch)
            on_epoch(record, result.model, result.optimizer);
    }

    result.final_metrics = result.history.empty() ? evaluate(result.model, eval_captions, eval_images, eval)
                                                  : result.history.back().metrics;
    return result;
}

std::vector<GridRow> strategy_grid(const TrainConfig& base, const SyntheticDataset& data)
{
    validate(base);
    const EncodedDataset encoded = encode_dataset(data, base);
    std::vector<GridRow> rows;
    for (Strategy s : kAllStrategies) {
        TrainConfig cfg = base;
        cfg.train.strategy = s;
        const TrainResult r = train(cfg, data, encoded);
        rows.push_back({s, r.final_metrics, r.history.empty() ? 0.0 : r.history.back().loss});
    }
    return rows;
}

} // namespace otground
