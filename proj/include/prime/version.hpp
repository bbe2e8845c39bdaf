#pragma once

namespace prime {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kModelFormatVersion = 1;

}  // namespace prime
