#include "voxmed/dataset_icbhi.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "voxmed/binary_io.hpp"
#include "voxmed/error.hpp"

namespace voxmed {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RecordingMeta parse_recording_filename(std::string_view name) {
  const std::string_view base = name.substr(name.find_last_of("/\\") == std::string_view::npos
                                                ? 0
                                                : name.find_last_of("/\\") + 1);
  if (base.size() < 4 || base.substr(base.size() - 4) != ".wav") {
    fail(ErrorCode::BadFilename, "'" + std::string(base) + "' is not a .wav file name");
  }
  const auto fields = split(base.substr(0, base.size() - 4), '_');
  if (fields.size() != 5 || std::any_of(fields.begin(), fields.end(), [](auto f) { return f.empty(); })) {
    fail(ErrorCode::BadFilename, "'" + std::string(base) + "' does not have 5 non-empty underscore-separated fields");
  }
  const auto patient = parse_int(fields[0]);
  if (!patient || *patient <= 0) fail(ErrorCode::BadPatientId, "'" + std::string(fields[0]) + "' is not a patient id");
  RecordingMeta m;
  m.patient_id = *patient;
  m.recording_index = fields[1];
  m.chest_location = fields[2];
  m.acquisition_mode = fields[3];
  m.equipment = fields[4];
  m.file_path = std::string(name);
  return m;
}

std::map<int, std::string> parse_diagnoses(std::string_view text) {
  std::map<int, std::string> out;
  std::size_t line_no = 0;
  for (const auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto sep = line.find_first_of("\t,");
    if (sep == std::string_view::npos) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected '<patient>\\t<diagnosis>'");
    }
    const auto id = parse_int(trim(line.substr(0, sep)));
    const auto diagnosis = trim(line.substr(sep + 1));
    if (!id || *id <= 0 || diagnosis.empty()) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": malformed row '" + std::string(line) + "'");
    }
    if (!out.emplace(*id, std::string(diagnosis)).second) {
      fail(ErrorCode::DuplicatePatient, "patient " + std::to_string(*id) + " listed twice (line " +
                                            std::to_string(line_no) + ")");
    }
  }
  return out;
}

std::map<int, std::string> load_diagnoses(const fs::path& path) { return parse_diagnoses(read_text(path)); }

std::vector<RespiratoryCycle> parse_cycle_annotations(std::string_view text) {
  std::vector<RespiratoryCycle> cycles;
  std::size_t line_no = 0;
  for (const auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    std::istringstream in{std::string(line)};
    RespiratoryCycle c;
    int crackles = 0, wheezes = 0;
    if (!(in >> c.start_s >> c.end_s >> crackles >> wheezes)) {
      fail(ErrorCode::ParseError, "annotation line " + std::to_string(line_no) + " is malformed");
    }
    c.crackles = crackles != 0;
    c.wheezes = wheezes != 0;
    cycles.push_back(c);
  }
  return cycles;
}

void LabelScheme::validate() const {
  auto bad = [&](const std::string& what) { fail(ErrorCode::InvalidConfig, "label scheme '" + id + "': " + what); };
  if (id.empty() || name.empty()) bad("id and name are required");
  if (classes.size() < 2) bad("needs at least two classes");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (c.empty() || !seen.insert(c).second) bad("class names must be distinct and non-empty");
  }
  if (catch_all && !seen.count(*catch_all)) bad("catch_all '" + *catch_all + "' is not a class");
  for (const auto& [diag, cls] : diagnosis_map) {
    if (!seen.count(cls)) bad("diagnosis '" + diag + "' maps to unknown class '" + cls + "'");
  }
}

std::optional<std::size_t> LabelScheme::class_index(std::string_view class_name) const {
  const auto it = std::find(classes.begin(), classes.end(), class_name);
  if (it == classes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

LabelScheme parse_label_scheme(std::string_view json_text) {
  LabelScheme s;
  try {
    const auto j = nlohmann::json::parse(json_text);
    s.id = j.at("id").get<std::string>();
    s.name = j.at("name").get<std::string>();
    s.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("map")) s.diagnosis_map = j.at("map").get<std::map<std::string, std::string>>();
    if (j.contains("catch_all") && !j.at("catch_all").is_null()) s.catch_all = j.at("catch_all").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("label scheme: ") + e.what());
  }
  s.validate();
  return s;
}

LabelScheme load_label_scheme(const fs::path& path) { return parse_label_scheme(read_text(path)); }

fs::path default_schemes_dir() {
#ifdef VOXMED_SCHEMES_DIR
  return VOXMED_SCHEMES_DIR;
#else
  return "schemes";
#endif
}

std::vector<std::string> standard_scheme_ids() {
  return {"healthy-copd-others", "healthy-copd-urti-others", "healthy-copd-urti-lrti-bronchitis"};
}

LabelScheme resolve_label_scheme(std::string_view id_or_path, const fs::path& schemes_dir) {
  const fs::path direct{std::string(id_or_path)};
  std::error_code ec;
  if (direct.extension() == ".json" || fs::is_regular_file(direct, ec)) return load_label_scheme(direct);
  const auto candidate = schemes_dir / (std::string(id_or_path) + ".json");
  if (!fs::is_regular_file(candidate, ec)) {
    fail(ErrorCode::InvalidConfig, "unknown label scheme '" + std::string(id_or_path) + "' (looked in " +
                                       schemes_dir.string() + ")");
  }
  return load_label_scheme(candidate);
}

std::optional<std::size_t> apply_label_scheme(std::string_view diagnosis, const LabelScheme& scheme) {
  const auto it = scheme.diagnosis_map.find(std::string(diagnosis));
  if (it != scheme.diagnosis_map.end()) return scheme.class_index(it->second);
  if (scheme.catch_all) return scheme.class_index(*scheme.catch_all);
  return std::nullopt;
}

LabeledDataset build_dataset(const fs::path& audio_dir, const fs::path& diagnosis_path, const LabelScheme& scheme) {
  scheme.validate();
  std::error_code ec;
  if (!fs::is_directory(audio_dir, ec)) fail(ErrorCode::IoError, "not a directory: " + audio_dir.string());
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(audio_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  }
  if (wavs.empty()) fail(ErrorCode::EmptyDataset, "no .wav files in " + audio_dir.string());
  std::sort(wavs.begin(), wavs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  const auto diagnoses = load_diagnoses(diagnosis_path);
  LabeledDataset ds;
  ds.scheme = scheme;
  ds.class_counts.assign(scheme.classes.size(), 0);
  for (const auto& path : wavs) {
    RecordingMeta meta = parse_recording_filename(path.string());
    const auto it = diagnoses.find(meta.patient_id);
    if (it == diagnoses.end()) {
      fail(ErrorCode::MissingDiagnosis, "patient " + std::to_string(meta.patient_id) + " of " +
                                            path.filename().string() + " is not in " + diagnosis_path.string());
    }
    const auto label = apply_label_scheme(it->second, scheme);
    if (!label) continue;
    auto annotation = path;
    annotation.replace_extension(".txt");
    if (fs::is_regular_file(annotation, ec)) meta.cycles = parse_cycle_annotations(read_text(annotation));
    ds.class_counts[*label] += 1;
    ds.items.push_back(LabeledItem{std::move(meta), it->second, *label});
  }
  if (ds.items.empty()) fail(ErrorCode::EmptyDataset, "every recording was excluded by scheme '" + scheme.id + "'");
  return ds;
}

}  // namespace voxmed
