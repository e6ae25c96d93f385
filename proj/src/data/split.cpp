#include "gemmgan/data/split.hpp"

#include "gemmgan/core/error.hpp"
#include "gemmgan/core/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace gemmgan::data {

DatasetSplit make_split(const std::vector<std::string>& case_ids, double test_fraction, std::uint64_t seed) {
  if (case_ids.size() < 5) {
    throw Error(ErrorCode::kTooFewCases, "need at least 5 cases, got " + std::to_string(case_ids.size()));
  }
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(case_ids.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, {0x5911u});
  // Explicit Fisher-Yates so the permutation does not depend on the library's shuffle.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(case_ids.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());

  DatasetSplit split;
  split.seed = seed;
  split.fraction = test_fraction;
  for (auto i : train) split.train_ids.push_back(case_ids[i]);
  for (auto i : test) split.test_ids.push_back(case_ids[i]);
  return split;
}

void write_split(const std::filesystem::path& path, const DatasetSplit& split) {
  nlohmann::ordered_json j;
  j["train"] = split.train_ids;
  j["test"] = split.test_ids;
  j["seed"] = split.seed;
  j["fraction"] = split.fraction;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DatasetSplit read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read split file " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    DatasetSplit s;
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.fraction = j.at("fraction").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIoError, "malformed split file " + path.string() + ": " + e.what());
  }
}

}  // namespace gemmgan::data
