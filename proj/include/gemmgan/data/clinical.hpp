#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gemmgan::data {

struct ClinicalRecord {
  std::string case_id;
  std::string disease_type;
  std::string primary_site;
  std::map<std::string, std::string> demographics;
  std::map<std::string, std::string> free_fields;
};

// One JSON object per line: {case_id, disease_type, primary_site, demographics, free_fields}.
std::vector<ClinicalRecord> read_clinical_jsonl(const std::filesystem::path& path);
void write_clinical_jsonl(const std::filesystem::path& path, const std::vector<ClinicalRecord>& records);

// Deterministic prose summary (50-300 words) of disease site, demographics
// and recorded conditions. Identifier and file-path fields are left out.
std::string serialize_clinical_summary(const ClinicalRecord& record);

std::size_t word_count(const std::string& text);

}  // namespace gemmgan::data
