#include "gemmgan/data/clinical.hpp"

#include "gemmgan/core/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace gemmgan::data {
namespace {

constexpr std::size_t kMaxWords = 300;

std::map<std::string, std::string> flatten(const nlohmann::json& j) {
  std::map<std::string, std::string> out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw Error(ErrorCode::kIoError, "expected a JSON object of fields");
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) continue;
    out[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_identifier_field(const std::string& key, const std::string& value) {
  const std::string k = lower(key);
  if (k == "id" || ends_with(k, "_id") || ends_with(k, "uuid") || k.find("barcode") != std::string::npos ||
      k.find("file") != std::string::npos || k.find("path") != std::string::npos) {
    return true;
  }
  if (value.find('/') != std::string::npos || value.find('\\') != std::string::npos) return true;
  const std::string v = lower(value);
  for (const char* ext : {".svs", ".png", ".tif", ".tiff", ".tsv", ".csv", ".json", ".txt"}) {
    if (ends_with(v, ext)) return true;
  }
  return false;
}

std::string humanize(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

}  // namespace

std::vector<ClinicalRecord> read_clinical_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read clinical metadata " + path.string());
  std::vector<ClinicalRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ClinicalRecord r;
      r.case_id = j.at("case_id").get<std::string>();
      r.disease_type = j.value("disease_type", "");
      r.primary_site = j.value("primary_site", "");
      if (j.contains("demographics")) r.demographics = flatten(j["demographics"]);
      if (j.contains("free_fields")) r.free_fields = flatten(j["free_fields"]);
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIoError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_clinical_jsonl(const std::filesystem::path& path, const std::vector<ClinicalRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["case_id"] = r.case_id;
    j["disease_type"] = r.disease_type;
    j["primary_site"] = r.primary_site;
    j["demographics"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.demographics) j["demographics"][k] = v;
    j["free_fields"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.free_fields) j["free_fields"][k] = v;
    out << j.dump() << '\n';
  }
}

std::size_t word_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

std::string serialize_clinical_summary(const ClinicalRecord& record) {
  const std::string disease = record.disease_type.empty() ? "an unspecified tumor type" : record.disease_type;
  const std::string site = record.primary_site.empty() ? "an unspecified site" : record.primary_site;

  std::vector<std::string> sentences;
  sentences.push_back("Clinical case summary for a cancer patient.");
  sentences.push_back("The patient was diagnosed with " + disease + ", and the primary tumor site is recorded as " +
                      site + ".");

  std::vector<std::string> demo;
  for (const auto& [k, v] : record.demographics) {
    if (is_identifier_field(k, v) || v.empty()) continue;
    demo.push_back(humanize(k) + " " + v);
  }
  if (demo.empty()) {
    sentences.push_back("No demographic information was reported for this patient.");
  } else {
    std::string s = "Reported demographics: ";
    for (std::size_t i = 0; i < demo.size(); ++i) s += (i ? "; " : "") + demo[i];
    sentences.push_back(s + ".");
  }

  sentences.push_back("The tissue specimen was obtained from the " + site +
                      " and processed for whole slide imaging and RNA sequencing.");
  sentences.push_back("Histopathology slides from the same case accompany this description.");

  const std::string closing =
      "The expression profile reflects the " + disease + " disease context at the " + site + " site.";

  std::size_t words = 0;
  for (const auto& s : sentences) words += word_count(s);
  words += word_count(closing);
  for (const auto& [k, v] : record.free_fields) {
    if (is_identifier_field(k, v) || v.empty()) continue;
    std::string s = "The " + humanize(k) + " is recorded as " + v + ".";
    const auto w = word_count(s);
    if (words + w > kMaxWords) break;
    words += w;
    sentences.push_back(std::move(s));
  }
  sentences.push_back(closing);

  std::string text;
  for (const auto& s : sentences) {
    if (!text.empty()) text += ' ';
    text += s;
  }
  return text;
}

}  // namespace gemmgan::data
