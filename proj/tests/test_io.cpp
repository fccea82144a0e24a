#include <doctest.h>

#include <filesystem>
#include <string>
#include <unistd.h>

#include "otground/config.hpp"
#include "otground/io.hpp"
#include "support.hpp"

using namespace otground;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("otground-io-" + tag + "-" + std::to_string(::getpid())))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string message_of(auto&& fn)
{
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("embedding file layout")
{
    const std::string bytes = encode_embeddings(MatrixXd::Ones(1, 1));
    REQUIRE(bytes.size() == 18u);
    CHECK(bytes.substr(0, 4) == "OTEB");
    CHECK(static_cast<unsigned char>(bytes[14]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[15]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[16]) == 0x80);
    CHECK(static_cast<unsigned char>(bytes[17]) == 0x3f);

    CHECK_THROWS_AS(decode_embeddings(std::string(12, '\0')), FormatError);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_embeddings(bad), FormatError);

    bad = bytes;
    bad[4] = 2;
    CHECK(message_of([&] { decode_embeddings(bad); }).find("version 2") != std::string::npos);

    const std::string truncated = encode_embeddings(MatrixXd::Zero(3, 4)).substr(0, 40);
    const std::string msg = message_of([&] { decode_embeddings(truncated); });
    CHECK(msg.find("expected 62") != std::string::npos);
    CHECK(msg.find("got 40") != std::string::npos);

    CHECK(decode_embeddings(encode_embeddings(MatrixXd(0, 5))).cols() == 5);
}

TEST_CASE("embedding round trip is exact for float values")
{
    Rng rng = make_rng(3);
    const MatrixXd m = otground::testing::random_matrix(rng, 3, 4, -2.0, 2.0).cast<float>().cast<double>();
    const MatrixXd back = decode_embeddings(encode_embeddings(m));
    CHECK(otground::testing::bitwise_equal(back, m));
    // Row-major payload: the second value is row 0, column 1.
    const std::string bytes = encode_embeddings(m);
    CHECK(decode_embeddings(bytes).row(0)(1) == m(0, 1));

    TempDir dir("emb");
    write_embeddings(dir.path / "m.oteb", m);
    CHECK(otground::testing::bitwise_equal(read_embeddings(dir.path / "m.oteb"), m));
    CHECK_THROWS_AS(read_embeddings(dir.path / "missing.oteb"), InvalidArgument);
}

TEST_CASE("atomic writes replace the file and leave nothing behind")
{
    TempDir dir("atomic");
    const fs::path target = dir.path / "out.txt";
    write_file_atomic(target, "first");
    write_file_atomic(target, "second");
    CHECK(read_file(target) == "second");
    int entries = 0;
    for (const auto& e : fs::directory_iterator(dir.path)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);
}

TEST_CASE("config parsing")
{
    const TrainConfig defaults = parse_config("{}");
    CHECK(defaults == TrainConfig{});

    const TrainConfig cfg = parse_config(R"({"train": {"lr": 0.01, "strategy": "cls+pot", "hinge_margin": 0.2},
                                            "solver": {"beta": 0.1, "mode": "pot"},
                                            "model": {"k": 2},
                                            "seeds": {"data": 9}})");
    CHECK(cfg.train.lr == 0.01);
    CHECK(cfg.train.strategy == Strategy::ClsPot);
    CHECK(cfg.train.hinge_margin == 0.2);
    CHECK(cfg.solver.beta == 0.1);
    CHECK(cfg.eval_mode == TransportMode::Partial);
    CHECK(cfg.model.k == 2);
    CHECK(cfg.seeds.data == 9);
    CHECK(cfg.seeds.init == defaults.seeds.init);

    CHECK(config_from_json(config_to_json(cfg)) == cfg);

    auto error_of = [](const char* text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(error_of(R"({"train": {"lr": -1}})").rfind("train.lr:", 0) == 0);
    CHECK(error_of(R"({"train": {"learning_rate": 1}})").rfind("train.learning_rate: unknown key", 0) == 0);
    CHECK(error_of(R"({"optim": {}})").rfind("optim: unknown section", 0) == 0);
    CHECK(error_of(R"({"model": {"k": 9}})").rfind("model.k:", 0) == 0);
    CHECK(error_of(R"({"data": {"scenes": "many"}})").rfind("data.scenes:", 0) == 0);
    CHECK(error_of(R"({"train": {"strategy": "sinkhorn"}})").rfind("train.strategy:", 0) == 0);
    CHECK(error_of(R"({"solver": {"mass_fraction": 1.5}})").rfind("solver.mass_fraction:", 0) == 0);
    CHECK_THROWS_AS(parse_config("{not json"), FormatError);
}

TEST_CASE("checkpoint round trip")
{
    TrainConfig cfg;
    cfg.model.d_h = 6;
    cfg.model.d_v = 5;
    cfg.model.d_g = 3;
    const GroundingModel model = init_model(cfg.model, 17);
    OptimizerState opt = init_optimizer(model);
    opt.step = 12;
    opt.first_moment.head_bias = 0.1;
    opt.second_moment.vg.w1(1, 2) = 1.0 / 3.0;

    const Checkpoint back = parse_checkpoint(checkpoint_to_string({cfg, model, opt}));
    CHECK(back.config == cfg);
    CHECK(back.model == model);
    REQUIRE(back.optimizer.has_value());
    CHECK(*back.optimizer == opt);

    const Checkpoint bare = parse_checkpoint(checkpoint_to_string({cfg, model, std::nullopt}));
    CHECK_FALSE(bare.optimizer.has_value());

    TempDir dir("ckpt");
    write_checkpoint(dir.path / "c.json", {cfg, model, opt});
    CHECK(read_checkpoint(dir.path / "c.json").model == model);

    CHECK_THROWS_AS(parse_checkpoint("[]"), FormatError);
    CHECK_THROWS_AS(parse_checkpoint(R"({"format_version": 99})"), FormatError);
    nlohmann::json doc = nlohmann::json::parse(checkpoint_to_string({cfg, model, opt}));
    doc["tensors"][0]["data"].erase(0);
    CHECK_THROWS_AS(parse_checkpoint(doc.dump()), FormatError);
}

TEST_CASE("metrics lines")
{
    EpochRecord rec;
    rec.epoch = 3;
    rec.loss = 0.25;
    rec.metrics.accuracy = 0.75;
    rec.metrics.pairs = 40;
    const std::string line = metrics_json_line(rec);
    CHECK(line.back() == '\n');
    CHECK(line.find('\n') == line.size() - 1);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == 3);
    CHECK(j.at("loss") == 0.25);
    CHECK(j.at("accuracy") == 0.75);
    CHECK(j.at("pairs") == 40);
}
