#include "healthprism/dataio/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace healthprism::dataio {

static_assert(std::endian::native == std::endian::little,
              "binary snapshot sections are written in host order");

namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

const std::vector<std::string>& label_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h{"participant_id"};
    for (Indicator ind : kIndicators) h.emplace_back(to_string(ind));
    return h;
  }();
  return header;
}

std::string join_row(const CsvRow& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out.push_back(',');
    const auto& cell = row[i];
    if (cell.find_first_of(",\"\n") != std::string::npos) {
      out.push_back('"');
      for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
      }
      out.push_back('"');
    } else {
      out += cell;
    }
  }
  out.push_back('\n');
  return out;
}

template <typename T>
void append_pod(std::string& out, std::span<const T> values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

template <typename T>
void read_pod(std::string_view& in, std::span<T> values, const std::string& what) {
  if (in.size() < values.size_bytes()) fail(ErrorCode::parse, what + " is truncated");
  std::memcpy(values.data(), in.data(), values.size_bytes());
  in.remove_prefix(values.size_bytes());
}

const std::string& entry(const ArchiveEntries& entries, const std::string& name) {
  for (const auto& [n, body] : entries) {
    if (n == name) return body;
  }
  fail(ErrorCode::parse, "snapshot has no entry '" + name + "'");
}

}  // namespace

std::vector<CsvRow> parse_csv(std::string_view text, const std::string& source) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string cell;
  bool quoted = false;
  bool cell_started = false;
  std::size_t line = 1;
  auto end_row = [&] {
    row.push_back(std::move(cell));
    cell.clear();
    if (!(row.size() == 1 && row[0].empty() && !cell_started)) rows.push_back(std::move(row));
    row.clear();
    cell_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!cell.empty()) fail(ErrorCode::parse, where(source, line) + ": stray quote");
      quoted = true;
      cell_started = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      cell_started = true;
    } else if (c == '\n') {
      end_row();
      ++line;
    } else if (c != '\r') {
      cell.push_back(c);
      cell_started = true;
    }
  }
  if (quoted) fail(ErrorCode::parse, where(source, line) + ": unterminated quote");
  if (cell_started || !cell.empty() || !row.empty()) end_row();
  return rows;
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view cell, const std::string& source, std::size_t line) {
  double value = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    fail(ErrorCode::parse, where(source, line) + ": '" + std::string(cell) + "' is not a number");
  }
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "short write to '" + path.string() + "'");
}

Schema parse_schema(std::string_view text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, source + ": " + e.what());
  }
  return Schema::from_json(j);
}

std::vector<RawContextRecord> parse_context(const Schema& schema, std::string_view text,
                                            const std::string& source) {
  const auto rows = parse_csv(text, source);
  if (rows.empty()) fail(ErrorCode::parse, where(source, 1) + ": missing header");
  const auto& header = rows[0];
  if (header.empty() || header[0] != "participant_id") {
    fail(ErrorCode::parse, where(source, 1) + ": first column must be participant_id");
  }
  std::vector<std::size_t> column_feature;
  std::set<std::string> seen_columns;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto idx = schema.find(header[c]);
    if (!idx) fail(ErrorCode::schema, where(source, 1) + ": unknown feature id '" + header[c] + "'");
    if (!seen_columns.insert(header[c]).second) {
      fail(ErrorCode::parse, where(source, 1) + ": duplicate column '" + header[c] + "'");
    }
    column_feature.push_back(*idx);
  }
  std::vector<RawContextRecord> records;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t line = r + 1;
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      fail(ErrorCode::parse, where(source, line) + ": expected " + std::to_string(header.size()) +
                                 " cells, found " + std::to_string(row.size()));
    }
    if (row[0].empty()) fail(ErrorCode::parse, where(source, line) + ": empty participant_id");
    if (!ids.insert(row[0]).second) {
      fail(ErrorCode::integrity, where(source, line) + ": duplicate participant id '" + row[0] + "'");
    }
    RawContextRecord rec{row[0], std::vector<ContextValue>(schema.size())};
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c].empty()) continue;
      const auto& feature = schema[column_feature[c - 1]];
      if (feature.kind == FeatureKind::numeric) {
        rec.values[column_feature[c - 1]] = parse_number(row[c], source, line);
      } else {
        if (std::find(feature.categories.begin(), feature.categories.end(), row[c]) ==
            feature.categories.end()) {
          fail(ErrorCode::parse, where(source, line) + ": '" + row[c] +
                                     "' is not a category of '" + feature.id + "'");
        }
        rec.values[column_feature[c - 1]] = row[c];
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

RawMotionRecord parse_motion(const std::string& participant_id, std::string_view text,
                             const std::string& source) {
  const auto rows = parse_csv(text, source);
  const CsvRow expected{"timestamp", "ax", "ay", "az"};
  if (rows.empty() || rows[0] != expected) {
    fail(ErrorCode::parse, where(source, 1) + ": header must be timestamp,ax,ay,az");
  }
  RawMotionRecord rec{participant_id, {}};
  rec.samples.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t line = r + 1;
    const auto& row = rows[r];
    if (row.size() != 4) fail(ErrorCode::parse, where(source, line) + ": expected 4 cells");
    std::int64_t ts = 0;
    const auto res = std::from_chars(row[0].data(), row[0].data() + row[0].size(), ts);
    if (res.ec != std::errc() || res.ptr != row[0].data() + row[0].size()) {
      fail(ErrorCode::parse, where(source, line) + ": timestamp must be integer epoch seconds");
    }
    if (!rec.samples.empty() && ts <= rec.samples.back().timestamp) {
      fail(ErrorCode::parse, where(source, line) + ": timestamps must be strictly increasing");
    }
    rec.samples.push_back({ts, parse_number(row[1], source, line), parse_number(row[2], source, line),
                           parse_number(row[3], source, line)});
  }
  return rec;
}

std::vector<std::pair<std::string, HealthLabels>> parse_labels(std::string_view text,
                                                              const std::string& source) {
  const auto rows = parse_csv(text, source);
  if (rows.empty() || rows[0] != label_header()) {
    fail(ErrorCode::parse, where(source, 1) + ": header must be participant_id,MVPA,PHYF,VVAS,PSYF,RESI,CONN");
  }
  std::vector<std::pair<std::string, HealthLabels>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != label_header().size()) {
      fail(ErrorCode::parse, where(source, r + 1) + ": expected 7 cells");
    }
    HealthLabels labels{};
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
      if (row[k + 1] != "0" && row[k + 1] != "1") {
        fail(ErrorCode::parse, where(source, r + 1) + ": labels must be 0 or 1");
      }
      labels[k] = row[k + 1] == "1" ? 1 : 0;
    }
    out.emplace_back(row[0], labels);
  }
  return out;
}

namespace {

RawDataset assemble(Schema schema, std::vector<RawContextRecord> context,
                    const std::vector<std::pair<std::string, HealthLabels>>& labels,
                    const std::function<RawMotionRecord(const std::string&)>& motion_for,
                    const std::string& labels_source) {
  RawDataset raw;
  raw.schema = std::move(schema);
  std::map<std::string, HealthLabels> by_id;
  for (const auto& [id, l] : labels) {
    if (!by_id.emplace(id, l).second) {
      fail(ErrorCode::integrity, labels_source + ": duplicate participant id '" + id + "'");
    }
  }
  for (auto& rec : context) {
    const auto it = by_id.find(rec.participant_id);
    if (it == by_id.end()) {
      fail(ErrorCode::integrity, labels_source + ": no labels for '" + rec.participant_id + "'");
    }
    raw.labels.push_back(it->second);
    raw.motion.push_back(motion_for(rec.participant_id));
    raw.context.push_back(std::move(rec));
  }
  return raw;
}

}  // namespace

RawDataset load_dataset(const std::filesystem::path& context_file,
                        const std::filesystem::path& motion_dir,
                        const std::filesystem::path& labels_file,
                        const std::filesystem::path& schema_file) {
  Schema schema = parse_schema(read_file(schema_file), schema_file.string());
  auto context = parse_context(schema, read_file(context_file), context_file.string());
  const auto labels = parse_labels(read_file(labels_file), labels_file.string());
  return assemble(std::move(schema), std::move(context), labels,
                  [&](const std::string& id) {
                    const auto path = motion_dir / (id + ".csv");
                    return parse_motion(id, read_file(path), path.string());
                  },
                  labels_file.string());
}

std::string format_context(const Schema& schema, const std::vector<RawContextRecord>& records) {
  CsvRow header{"participant_id"};
  for (const auto& f : schema.features()) header.push_back(f.id);
  std::string out = join_row(header);
  for (const auto& rec : records) {
    CsvRow row{rec.participant_id};
    for (const auto& v : rec.values) {
      if (!v) {
        row.emplace_back();
      } else if (const double* d = std::get_if<double>(&*v)) {
        row.push_back(format_number(*d));
      } else {
        row.push_back(std::get<std::string>(*v));
      }
    }
    out += join_row(row);
  }
  return out;
}

std::string format_motion(const RawMotionRecord& record) {
  std::string out = "timestamp,ax,ay,az\n";
  out.reserve(record.samples.size() * 48);
  for (const auto& s : record.samples) {
    out += std::to_string(s.timestamp);
    out.push_back(',');
    out += format_number(s.ax);
    out.push_back(',');
    out += format_number(s.ay);
    out.push_back(',');
    out += format_number(s.az);
    out.push_back('\n');
  }
  return out;
}

std::string format_labels(const std::vector<std::string>& ids, const std::vector<HealthLabels>& labels) {
  std::string out = join_row(label_header());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CsvRow row{ids[i]};
    for (auto v : labels[i]) row.push_back(v ? "1" : "0");
    out += join_row(row);
  }
  return out;
}

std::string write_tar(const ArchiveEntries& entries) {
  std::string out;
  for (const auto& [name, body] : entries) {
    if (name.size() >= 100) fail(ErrorCode::argument, "archive entry name too long: " + name);
    char header[512] = {};
    std::memcpy(header, name.data(), name.size());
    std::snprintf(header + 100, 8, "%07o", 0644);
    std::snprintf(header + 108, 8, "%07o", 0);
    std::snprintf(header + 116, 8, "%07o", 0);
    std::snprintf(header + 124, 12, "%011llo", static_cast<unsigned long long>(body.size()));
    std::snprintf(header + 136, 12, "%011o", 0);
    header[156] = '0';
    std::memcpy(header + 257, "ustar", 6);
    std::memcpy(header + 263, "00", 2);
    std::memset(header + 148, ' ', 8);
    unsigned sum = 0;
    for (unsigned char c : header) sum += c;
    std::snprintf(header + 148, 8, "%06o", sum);
    header[155] = ' ';
    out.append(header, sizeof(header));
    out += body;
    out.append((512 - body.size() % 512) % 512, '\0');
  }
  out.append(1024, '\0');
  return out;
}

ArchiveEntries read_tar(std::string_view bytes) {
  ArchiveEntries entries;
  std::size_t pos = 0;
  while (pos + 512 <= bytes.size()) {
    const char* header = bytes.data() + pos;
    if (std::all_of(header, header + 512, [](char c) { return c == '\0'; })) break;
    std::string name(header, strnlen(header, 100));
    const std::string size_field(header + 124, strnlen(header + 124, 12));
    std::size_t size = 0;
    try {
      size = std::stoull(size_field, nullptr, 8);
    } catch (const std::exception&) {
      fail(ErrorCode::parse, "archive entry '" + name + "' has a corrupt size field");
    }
    pos += 512;
    if (pos + size > bytes.size()) fail(ErrorCode::parse, "archive entry '" + name + "' is truncated");
    if (header[156] == '0' || header[156] == '\0') {
      entries.emplace_back(std::move(name), std::string(bytes.substr(pos, size)));
    }
    pos += (size + 511) / 512 * 512;
  }
  return entries;
}

std::string write_raw_snapshot(const RawDataset& raw, const nlohmann::json& metadata) {
  std::vector<std::string> ids;
  for (const auto& r : raw.context) ids.push_back(r.participant_id);
  nlohmann::json manifest{{"v", 1}, {"kind", "raw"}, {"participants", ids.size()},
                          {"metadata", metadata}};
  ArchiveEntries entries{
      {"manifest.json", manifest.dump(2)},
      {"schema.json", raw.schema.to_json().dump(2)},
      {"context.csv", format_context(raw.schema, raw.context)},
      {"labels.csv", format_labels(ids, raw.labels)},
      {"normalization_stats.json",
       stats_to_json(compute_normalization_stats(raw.schema, raw.context)).dump(2)},
  };
  for (const auto& m : raw.motion) {
    entries.emplace_back("motion/" + m.participant_id + ".csv", format_motion(m));
  }
  return write_tar(entries);
}

nlohmann::json snapshot_manifest(std::string_view bytes) {
  const auto entries = read_tar(bytes);
  try {
    return nlohmann::json::parse(entry(entries, "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("manifest.json: ") + e.what());
  }
}

RawDataset read_raw_snapshot(std::string_view bytes) {
  const auto entries = read_tar(bytes);
  Schema schema = parse_schema(entry(entries, "schema.json"), "schema.json");
  auto context = parse_context(schema, entry(entries, "context.csv"), "context.csv");
  const auto labels = parse_labels(entry(entries, "labels.csv"), "labels.csv");
  return assemble(std::move(schema), std::move(context), labels,
                  [&](const std::string& id) {
                    const std::string name = "motion/" + id + ".csv";
                    return parse_motion(id, entry(entries, name), name);
                  },
                  "labels.csv");
}

std::string write_processed_snapshot(const Dataset& dataset, const PreprocessReport& report,
                                     const nlohmann::json& metadata) {
  const Schema& schema = dataset.schema;
  std::vector<std::string> ids;
  std::vector<HealthLabels> labels;
  std::vector<RawContextRecord> completed;
  CsvRow mask_header{"participant_id"};
  for (const auto& f : schema.features()) mask_header.push_back(f.id);
  std::string mask_csv = join_row(mask_header);
  std::string people_csv = join_row({"participant_id", "gender", "age", "age_group", "learning_mode"});
  std::string patterns;
  for (const auto& p : dataset.participants) {
    ids.push_back(p.id);
    labels.push_back(p.labels);
    RawContextRecord rec{p.id, {}};
    for (const auto& v : p.completed) rec.values.emplace_back(v);
    completed.push_back(std::move(rec));
    CsvRow mask_row{p.id};
    for (auto m : p.imputed_mask) mask_row.push_back(m ? "1" : "0");
    mask_csv += join_row(mask_row);
    people_csv += join_row({p.id, std::string(to_string(p.gender)), std::to_string(p.age),
                            std::string(to_string(p.age_group)),
                            std::string(to_string(p.learning_mode))});
    append_pod(patterns, std::span<const double>(p.context.values));
    append_pod(patterns, std::span<const float>(p.motion.values));
    append_pod(patterns, std::span<const std::uint8_t>(p.motion.coverage));
  }
  nlohmann::json manifest{{"v", 1},
                          {"kind", "processed"},
                          {"participants", ids.size()},
                          {"context_width", schema.encoded_width()},
                          {"metadata", metadata}};
  return write_tar({
      {"manifest.json", manifest.dump(2)},
      {"schema.json", schema.to_json().dump(2)},
      {"normalization_stats.json", stats_to_json(dataset.normalization_stats).dump(2)},
      {"preprocess_report.json", report.to_json().dump(2)},
      {"participants.csv", people_csv},
      {"labels.csv", format_labels(ids, labels)},
      {"context_completed.csv", format_context(schema, completed)},
      {"imputed_mask.csv", mask_csv},
      {"patterns.bin", patterns},
  });
}

Dataset read_processed_snapshot(std::string_view bytes) {
  const auto entries = read_tar(bytes);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(entry(entries, "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("manifest.json: ") + e.what());
  }
  if (manifest.value("kind", "") != "processed") {
    fail(ErrorCode::parse, "snapshot is not a processed snapshot (kind '" +
                               manifest.value("kind", "") + "')");
  }
  Dataset ds;
  ds.schema = parse_schema(entry(entries, "schema.json"), "schema.json");
  try {
    ds.normalization_stats = stats_from_json(nlohmann::json::parse(entry(entries, "normalization_stats.json")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("normalization_stats.json: ") + e.what());
  }
  const auto people = parse_csv(entry(entries, "participants.csv"), "participants.csv");
  const auto labels = parse_labels(entry(entries, "labels.csv"), "labels.csv");
  const auto completed = parse_context(ds.schema, entry(entries, "context_completed.csv"),
                                       "context_completed.csv");
  const auto masks = parse_csv(entry(entries, "imputed_mask.csv"), "imputed_mask.csv");
  const std::size_t n = people.empty() ? 0 : people.size() - 1;
  if (labels.size() != n || completed.size() != n || masks.size() != n + 1) {
    fail(ErrorCode::integrity, "processed snapshot sections disagree on participant count");
  }
  std::string_view blob = entry(entries, "patterns.bin");
  const std::size_t width = ds.schema.encoded_width();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = people[i + 1];
    if (row.size() != 5 || labels[i].first != row[0] || completed[i].participant_id != row[0] ||
        masks[i + 1].size() != ds.schema.size() + 1 || masks[i + 1][0] != row[0]) {
      fail(ErrorCode::integrity, "processed snapshot row " + std::to_string(i + 2) + " is inconsistent");
    }
    Participant p;
    p.id = row[0];
    const auto gender = parse_gender(row[1]);
    const auto group = parse_age_group(row[3]);
    const auto mode = parse_learning_mode(row[4]);
    if (!gender || !group || !mode) fail(ErrorCode::parse, "participants.csv: bad category on row " + std::to_string(i + 2));
    p.gender = *gender;
    p.age = static_cast<int>(parse_number(row[2], "participants.csv", i + 2));
    p.age_group = *group;
    p.learning_mode = *mode;
    p.labels = labels[i].second;
    for (std::size_t j = 0; j < ds.schema.size(); ++j) {
      p.imputed_mask.push_back(masks[i + 1][j + 1] == "1" ? 1 : 0);
      if (!completed[i].values[j]) fail(ErrorCode::integrity, "completed answers contain a gap for '" + p.id + "'");
      p.completed.push_back(*completed[i].values[j]);
    }
    p.context.values.resize(width);
    p.motion.values.resize(kMotionAxes * kWeekMinutes);
    p.motion.coverage.resize(kWeekMinutes);
    read_pod(blob, std::span<double>(p.context.values), "patterns.bin");
    read_pod(blob, std::span<float>(p.motion.values), "patterns.bin");
    read_pod(blob, std::span<std::uint8_t>(p.motion.coverage), "patterns.bin");
    ds.participants.push_back(std::move(p));
  }
  if (!blob.empty()) fail(ErrorCode::integrity, "patterns.bin has trailing bytes");
  return ds;
}

}  // namespace healthprism::dataio
