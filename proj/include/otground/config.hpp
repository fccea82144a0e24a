#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "otground/errors.hpp"
#include "otground/training.hpp"

namespace otground {

// A run config value that violates its constraint; the message starts with the
// field path, e.g. "train.lr: must be >= 0".
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// Sections solver, model, train, data, seeds. Every key is optional and falls
// back to the TrainConfig default; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const TrainConfig& cfg);

// Malformed JSON raises FormatError, constraint violations ConfigError.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    GroundingModel model;
    std::optional<OptimizerState> optimizer;
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// One JSON object per line for the metrics log.
std::string metrics_json_line(const EpochRecord& record);
nlohmann::json metrics_to_json(const Metrics& m);

nlohmann::json dataset_to_json(const SyntheticDataset& data);

} // namespace otground
