#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/preprocess.hpp"
#include "healthprism/dataio/records.hpp"

namespace healthprism::dataio {

using CsvRow = std::vector<std::string>;

// Minimal RFC 4180 reader. `source` names the file in parse errors.
std::vector<CsvRow> parse_csv(std::string_view text, const std::string& source);
std::string format_number(double value);
double parse_number(std::string_view cell, const std::string& source, std::size_t line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Parses the four on-disk inputs without preprocessing; missing answers stay
// missing.
RawDataset load_dataset(const std::filesystem::path& context_file,
                        const std::filesystem::path& motion_dir,
                        const std::filesystem::path& labels_file,
                        const std::filesystem::path& schema_file);

// In-memory variants used by load_dataset and the snapshot reader.
Schema parse_schema(std::string_view text, const std::string& source);
std::vector<RawContextRecord> parse_context(const Schema& schema, std::string_view text,
                                            const std::string& source);
RawMotionRecord parse_motion(const std::string& participant_id, std::string_view text,
                             const std::string& source);
std::vector<std::pair<std::string, HealthLabels>> parse_labels(std::string_view text,
                                                              const std::string& source);

std::string format_context(const Schema& schema, const std::vector<RawContextRecord>& records);
std::string format_motion(const RawMotionRecord& record);
std::string format_labels(const std::vector<std::string>& ids, const std::vector<HealthLabels>& labels);

// Plain ustar archives with zeroed timestamps and owners, so equal contents
// give equal bytes.
using ArchiveEntries = std::vector<std::pair<std::string, std::string>>;
std::string write_tar(const ArchiveEntries& entries);
ArchiveEntries read_tar(std::string_view bytes);

// Raw snapshot: schema.json, context.csv, labels.csv, motion/<id>.csv,
// normalization_stats.json and manifest.json.
std::string write_raw_snapshot(const RawDataset& raw, const nlohmann::json& metadata);
RawDataset read_raw_snapshot(std::string_view bytes);

// Processed snapshot: encoded patterns plus the completed answers and
// imputation flags.
std::string write_processed_snapshot(const Dataset& dataset, const PreprocessReport& report,
                                     const nlohmann::json& metadata);
Dataset read_processed_snapshot(std::string_view bytes);

nlohmann::json snapshot_manifest(std::string_view bytes);

}  // namespace healthprism::dataio
