#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gemmgan::data {

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  double fraction = 0.2;
};

inline constexpr double kDefaultTestFraction = 0.2;

// Case-level shuffle split; |test| = round(fraction * n). Needs >= 5 cases.
DatasetSplit make_split(const std::vector<std::string>& case_ids, double test_fraction, std::uint64_t seed);

// JSON {train, test, seed, fraction}.
void write_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& path);

}  // namespace gemmgan::data
