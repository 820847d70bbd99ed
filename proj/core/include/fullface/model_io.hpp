#pragma once

#include <filesystem>
#include <string>

#include "fullface/network.hpp"

namespace fullface {

/// Model file layout (all integers little-endian):
///   8 bytes   magic "FFGZMODL"
///   u32       format version (1)
///   u32       length of the config block in bytes
///   bytes     config block: JSON with the model config and target scaling
///   u64       number of parameters
///   f64 * n   parameters in Network::parameters() order
///   u32       CRC-32 of every preceding byte
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

/// CSV with header epoch,train_loss,val_loss.
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace fullface
