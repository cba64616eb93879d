#pragma once

namespace heng {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;

}  // namespace heng
