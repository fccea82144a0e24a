#include "otground/config.hpp"

#include <set>

#include "otground/io.hpp"

namespace otground {
namespace {

using nlohmann::json;

// Reads keys of one JSON object, tracking which were consumed.
class Section {
public:
    Section(const json& doc, std::string path) : path_(std::move(path))
    {
        if (doc.contains(path_)) {
            node_ = &doc.at(path_);
            if (!node_->is_object())
                fail(path_, "must be an object");
        }
    }

    template <typename T, typename Check>
    void read(const char* key, T& out, Check&& check, const char* constraint)
    {
        if (!node_ || !node_->contains(key))
            return;
        const std::string field = path_ + "." + key;
        seen_.insert(key);
        const json& v = node_->at(key);
        T value{};
        try {
            if constexpr (std::is_same_v<T, int>) {
                if (!v.is_number_integer())
                    fail(field, "must be an integer");
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
                    fail(field, "must be a non-negative integer");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number())
                    fail(field, "must be a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string())
                    fail(field, "must be a string");
            }
            value = v.get<T>();
        } catch (const json::exception&) {
            fail(field, "has the wrong type");
        }
        if (!check(value))
            fail(field, constraint);
        out = value;
    }

    template <typename T>
    void read(const char* key, T& out)
    {
        read(key, out, [](const T&) { return true; }, "");
    }

    bool has(const char* key) const { return node_ && node_->contains(key); }
    const json& raw(const char* key)
    {
        seen_.insert(key);
        return node_->at(key);
    }
    std::string field(const char* key) const { return path_ + "." + key; }

    void finish() const
    {
        if (!node_)
            return;
        for (const auto& [key, _] : node_->items())
            if (!seen_.count(key))
                fail(path_ + "." + key, "unknown key");
    }

    [[noreturn]] static void fail(const std::string& field, const std::string& what)
    {
        throw ConfigError(field + ": " + what);
    }

private:
    std::string path_;
    const json* node_ = nullptr;
    std::set<std::string> seen_;
};

constexpr auto positive = [](auto x) { return x > 0; };
constexpr auto non_negative = [](auto x) { return x >= 0; };
constexpr auto unit_open = [](double x) { return x >= 0 && x < 1; };

template <typename Parse>
auto parse_enum(Section& s, const char* key, Parse&& parse, decltype(parse(std::string_view{})) fallback)
{
    std::string name;
    s.read(key, name);
    if (name.empty())
        return fallback;
    try {
        return parse(name);
    } catch (const InvalidArgument& e) {
        Section::fail(s.field(key), e.what());
    }
}

template <typename T>
std::vector<T> flat_values(const auto& tensor)
{
    return std::vector<T>(tensor.data(), tensor.data() + tensor.size());
}

json tensors_to_json(const ParameterTensors& p)
{
    json out = json::array();
    for_each_tensor(p, [&](std::string_view name, std::span<const double> span) {
        out.push_back({{"name", name}, {"data", std::vector<double>(span.begin(), span.end())}});
    });
    return out;
}

// Fills `p` (already shaped) from a tensor list, checking names and sizes.
void tensors_from_json(const json& list, ParameterTensors& p, const std::string& where)
{
    if (!list.is_array())
        throw FormatError(where + ": tensors must be an array");
    std::size_t index = 0;
    for_each_tensor(p, [&](std::string_view name, std::span<double> span) {
        if (index >= list.size())
            throw FormatError(where + ": missing tensor " + std::string(name));
        const json& t = list.at(index++);
        if (t.value("name", std::string()) != name)
            throw FormatError(where + ": expected tensor " + std::string(name));
        const auto& data = t.at("data");
        if (!data.is_array() || data.size() != span.size())
            throw FormatError(where + ": tensor " + std::string(name) + " has " + std::to_string(data.size()) +
                              " values, expected " + std::to_string(span.size()));
        for (std::size_t j = 0; j < span.size(); ++j)
            span[j] = data.at(j).get<double>();
    });
    if (index != list.size())
        throw FormatError(where + ": unexpected extra tensors");
}

} // namespace

TrainConfig config_from_json(const json& doc)
{
    if (!doc.is_object())
        throw ConfigError("config: top level must be an object");
    static const std::set<std::string> sections = {"solver", "model", "train", "data", "seeds"};
    for (const auto& [key, _] : doc.items())
        if (!sections.count(key))
            Section::fail(key, "unknown section");

    TrainConfig cfg;

    Section solver(doc, "solver");
    solver.read("beta", cfg.solver.beta, positive, "must be > 0");
    solver.read("iters", cfg.solver.iters, positive, "must be >= 1");
    solver.read("mass_fraction", cfg.solver.mass, [](double s) { return s > 0 && s <= 1; }, "must be in (0, 1]");
    cfg.eval_mode = parse_enum(solver, "mode", parse_transport_mode, cfg.eval_mode);
    solver.finish();

    Section model(doc, "model");
    model.read("d_h", cfg.model.d_h, positive, "must be >= 1");
    model.read("d_v", cfg.model.d_v, positive, "must be >= 1");
    model.read("d_g", cfg.model.d_g, positive, "must be >= 1");
    model.read("L", cfg.model.layers, positive, "must be >= 1");
    model.read("k", cfg.model.k, positive, "must be >= 1");
    if (cfg.model.k > cfg.model.layers)
        Section::fail("model.k", "must be <= model.L");
    model.read("hidden_scale", cfg.model.hidden_scale, positive, "must be > 0");
    cfg.align_target = parse_enum(model, "align_target", parse_align_target, cfg.align_target);
    model.finish();

    Section train(doc, "train");
    TrainSettings& t = cfg.train;
    train.read("lr", t.lr, non_negative, "must be >= 0");
    train.read("weight_decay", t.weight_decay, non_negative, "must be >= 0");
    train.read("beta1", t.beta1, unit_open, "must be in [0, 1)");
    train.read("beta2", t.beta2, unit_open, "must be in [0, 1)");
    train.read("eps", t.eps, positive, "must be > 0");
    train.read("epochs", t.epochs, non_negative, "must be >= 0");
    train.read("batch_size", t.batch_size, positive, "must be >= 1");
    t.strategy = parse_enum(train, "strategy", parse_strategy, t.strategy);
    train.read("w_cls", t.w_cls, non_negative, "must be >= 0");
    train.read("w_align", t.w_align, non_negative, "must be >= 0");
    if (train.has("hinge_margin")) {
        const json& v = train.raw("hinge_margin");
        if (v.is_null())
            t.hinge_margin.reset();
        else if (v.is_number() && v.get<double>() >= 0)
            t.hinge_margin = v.get<double>();
        else
            Section::fail(train.field("hinge_margin"), "must be null or a number >= 0");
    }
    train.read("save_every", t.save_every, non_negative, "must be >= 0");
    train.finish();

    Section data(doc, "data");
    DataConfig& d = cfg.data;
    data.read("concepts", d.concepts, [](int x) { return x >= 4; }, "must be >= 4");
    data.read("scenes", d.scenes, [](int x) { return x >= 8; }, "must be >= 8");
    data.read("patches", d.patches, [](int x) { return x >= 2; }, "must be >= 2");
    data.read("coverage_ratio", d.coverage_ratio, [](double x) { return x > 0 && x <= 1; }, "must be in (0, 1]");
    data.read("latent_dim", d.latent_dim, positive, "must be >= 1");
    data.read("noise", d.noise, non_negative, "must be >= 0");
    data.read("holdout_fraction", d.holdout_fraction, unit_open, "must be in [0, 1)");
    data.finish();

    Section seeds(doc, "seeds");
    seeds.read("data", cfg.seeds.data);
    seeds.read("init", cfg.seeds.init);
    seeds.read("train", cfg.seeds.train);
    seeds.finish();

    try {
        validate(cfg);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

json config_to_json(const TrainConfig& cfg)
{
    const TrainSettings& t = cfg.train;
    return {
        {"solver",
         {{"beta", cfg.solver.beta},
          {"iters", cfg.solver.iters},
          {"mass_fraction", cfg.solver.mass},
          {"mode", to_string(cfg.eval_mode)}}},
        {"model",
         {{"d_h", cfg.model.d_h},
          {"d_v", cfg.model.d_v},
          {"d_g", cfg.model.d_g},
          {"k", cfg.model.k},
          {"L", cfg.model.layers},
          {"hidden_scale", cfg.model.hidden_scale},
          {"align_target", to_string(cfg.align_target)}}},
        {"train",
         {{"lr", t.lr},
          {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"eps", t.eps},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"strategy", to_string(t.strategy)},
          {"w_cls", t.w_cls},
          {"w_align", t.w_align},
          {"hinge_margin", t.hinge_margin ? json(*t.hinge_margin) : json(nullptr)},
          {"save_every", t.save_every}}},
        {"data",
         {{"concepts", cfg.data.concepts},
          {"scenes", cfg.data.scenes},
          {"patches", cfg.data.patches},
          {"coverage_ratio", cfg.data.coverage_ratio},
          {"latent_dim", cfg.data.latent_dim},
          {"noise", cfg.data.noise},
          {"holdout_fraction", cfg.data.holdout_fraction}}},
        {"seeds", {{"data", cfg.seeds.data}, {"init", cfg.seeds.init}, {"train", cfg.seeds.train}}},
    };
}

TrainConfig parse_config(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config: malformed JSON: ") + e.what());
    }
    return config_from_json(doc);
}

TrainConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_file(path));
}

std::string checkpoint_to_string(const Checkpoint& ckpt)
{
    json doc = {
        {"format_version", kCheckpointVersion},
        {"config", config_to_json(ckpt.config)},
        {"tensors", tensors_to_json(ckpt.model)},
    };
    if (ckpt.optimizer) {
        doc["optimizer"] = {{"step", ckpt.optimizer->step},
                            {"first_moment", tensors_to_json(ckpt.optimizer->first_moment)},
                            {"second_moment", tensors_to_json(ckpt.optimizer->second_moment)}};
    }
    // Shapes are implied by the config echo; recorded for readers of the file.
    const ParameterTensors& p = ckpt.model;
    const std::vector<std::pair<long long, long long>> dims = {{p.vg.w1.rows(), p.vg.w1.cols()},   {p.vg.b1.size(), 1},  {p.vg.w2.rows(), p.vg.w2.cols()},
            {p.vg.b2.size(), 1},                {p.prj.w1.rows(), p.prj.w1.cols()}, {p.prj.b1.size(), 1},
            {p.prj.w2.rows(), p.prj.w2.cols()}, {p.prj.b2.size(), 1}, {p.head_weight.size(), 1},
            {1, 1}};
    for (std::size_t i = 0; i < dims.size(); ++i)
        doc["tensors"][i]["shape"] = {dims[i].first, dims[i].second};
    return doc.dump(1) + "\n";
}

Checkpoint parse_checkpoint(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format_version", -1) != kCheckpointVersion)
        throw FormatError("checkpoint: missing or unsupported format_version");
    try {
        Checkpoint ckpt;
        ckpt.config = config_from_json(doc.at("config"));
        ckpt.model = init_model(ckpt.config.model, 0);
        tensors_from_json(doc.at("tensors"), ckpt.model, "checkpoint");
        if (doc.contains("optimizer")) {
            OptimizerState opt = init_optimizer(ckpt.model);
            const json& o = doc.at("optimizer");
            opt.step = o.at("step").get<std::int64_t>();
            tensors_from_json(o.at("first_moment"), opt.first_moment, "checkpoint optimizer");
            tensors_from_json(o.at("second_moment"), opt.second_moment, "checkpoint optimizer");
            ckpt.optimizer = std::move(opt);
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    write_file_atomic(path, checkpoint_to_string(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    return parse_checkpoint(read_file(path));
}

json metrics_to_json(const Metrics& m)
{
    return {{"accuracy", m.accuracy}, {"recall_at_1", m.recall_at_1}, {"mean_d_pos", m.mean_d_pos},
            {"mean_d_neg", m.mean_d_neg}, {"gap", m.gap}, {"pairs", m.pairs}};
}

std::string metrics_json_line(const EpochRecord& record)
{
    json line = {{"epoch", record.epoch},
                 {"loss", record.loss},
                 {"cls_loss", record.cls_loss},
                 {"align_loss", record.align_loss}};
    line.update(metrics_to_json(record.metrics));
    return line.dump() + "\n";
}

json dataset_to_json(const SyntheticDataset& data)
{
    json scenes = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Scene& s = data.scenes[i];
        json patches = json::array();
        for (Eigen::Index p = 0; p < s.patch_latents.rows(); ++p)
            patches.push_back(flat_values<double>(VectorXd(s.patch_latents.row(p).transpose())));
        scenes.push_back({{"concepts", s.concepts},
                          {"patch_latents", patches},
                          {"caption_tokens", data.captions[i].tokens},
                          {"caption_concepts", data.captions[i].concepts},
                          {"split", i < data.train_count ? "train" : "eval"}});
    }
    json concepts = json::array();
    for (Eigen::Index c = 0; c < data.concept_vectors.rows(); ++c)
        concepts.push_back(flat_values<double>(VectorXd(data.concept_vectors.row(c).transpose())));
    return {{"coverage_ratio", data.coverage_ratio},
            {"train_count", data.train_count},
            {"concept_vectors", concepts},
            {"scenes", scenes}};
}

} // namespace otground
