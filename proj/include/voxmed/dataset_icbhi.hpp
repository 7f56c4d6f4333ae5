#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace voxmed {

// One annotated inhale-exhale period. Kept as metadata only.
struct RespiratoryCycle {
  double start_s = 0.0;
  double end_s = 0.0;
  bool crackles = false;
  bool wheezes = false;
};

// Fields of an ICBHI file name: <patient>_<index>_<location>_<mode>_<equipment>.wav
struct RecordingMeta {
  int patient_id = 0;
  std::string recording_index;
  std::string chest_location;
  std::string acquisition_mode;
  std::string equipment;
  std::filesystem::path file_path;
  std::vector<RespiratoryCycle> cycles;
};

// Throws BadFilename, BadPatientId.
RecordingMeta parse_recording_filename(std::string_view name);

// Rows of "<patient_id><TAB or comma><diagnosis>". Throws ParseError,
// DuplicatePatient, IoError.
std::map<int, std::string> load_diagnoses(const std::filesystem::path& path);
std::map<int, std::string> parse_diagnoses(std::string_view text);

// Rows of "<start> <end> <crackles 0/1> <wheezes 0/1>", extra fields ignored.
std::vector<RespiratoryCycle> parse_cycle_annotations(std::string_view text);

// Named grouping of raw diagnoses into task classes. Diagnoses missing from
// diagnosis_map fall into catch_all, or are excluded when there is none.
struct LabelScheme {
  std::string id;    // short identifier, e.g. "healthy-copd-others"
  std::string name;  // display name, e.g. "Healthy/COPD/others"
  std::vector<std::string> classes;
  std::map<std::string, std::string> diagnosis_map;
  std::optional<std::string> catch_all;

  void validate() const;  // InvalidConfig
  std::optional<std::size_t> class_index(std::string_view class_name) const;
};

// JSON: {"id", "name", "classes": [...], "map": {diagnosis: class}, "catch_all"?}.
LabelScheme parse_label_scheme(std::string_view json_text);
LabelScheme load_label_scheme(const std::filesystem::path& path);
// Resolves a path, or an id looked up as <schemes_dir>/<id>.json.
LabelScheme resolve_label_scheme(std::string_view id_or_path, const std::filesystem::path& schemes_dir);
std::filesystem::path default_schemes_dir();
// The three groupings shipped in the repo, in table order.
std::vector<std::string> standard_scheme_ids();

// Class index, or nullopt when the diagnosis is excluded by the scheme.
std::optional<std::size_t> apply_label_scheme(std::string_view diagnosis, const LabelScheme& scheme);

struct LabeledItem {
  RecordingMeta meta;
  std::string diagnosis;
  std::size_t label = 0;
};

struct LabeledDataset {
  std::vector<LabeledItem> items;  // sorted by file name
  LabelScheme scheme;
  std::vector<std::size_t> class_counts;
};

// Throws EmptyDataset, MissingDiagnosis, BadFilename, BadPatientId.
LabeledDataset build_dataset(const std::filesystem::path& audio_dir, const std::filesystem::path& diagnosis_path,
                             const LabelScheme& scheme);

}  // namespace voxmed
