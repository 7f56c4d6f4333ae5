#include "voxmed/disease_info.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>

#include <httplib.h>
#include <json.hpp>

#include "voxmed/error.hpp"

namespace voxmed {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct Entry {
  const char* key;
  const char* name;
  const char* summary;
  std::vector<std::string> symptoms;
};

const std::vector<Entry>& bundle() {
  static const std::vector<Entry> entries = {
      {"healthy", "Healthy",
       "No adventitious respiratory sounds suggestive of disease were detected in the recording.",
       {"No respiratory symptoms expected"}},
      {"copd", "Chronic obstructive pulmonary disease (COPD)",
       "A chronic inflammatory lung disease that obstructs airflow from the lungs, usually caused by long-term "
       "exposure to irritants such as cigarette smoke.",
       {"Shortness of breath, especially during physical activity", "Chronic cough, often with mucus",
        "Wheezing", "Chest tightness", "Frequent respiratory infections"}},
      {"urti", "Upper respiratory tract infection (URTI)",
       "An infection of the nose, sinuses, pharynx or larynx, most often viral, such as the common cold.",
       {"Runny or blocked nose", "Sore throat", "Cough", "Sneezing", "Mild fever"}},
      {"lrti", "Lower respiratory tract infection (LRTI)",
       "An infection of the airways and lungs below the larynx, including bronchitis and pneumonia.",
       {"Productive cough", "Fever", "Shortness of breath", "Chest pain when breathing", "Fatigue"}},
      {"bronchitis", "Bronchitis",
       "Inflammation of the bronchial tubes. This class also covers bronchiectasis and bronchiolitis.",
       {"Persistent cough with mucus", "Wheezing", "Chest discomfort", "Shortness of breath", "Fatigue"}},
      {"bronchiectasis", "Bronchiectasis",
       "Permanent widening of the bronchi that leads to mucus build-up and repeated infections.",
       {"Daily cough with large amounts of sputum", "Recurrent chest infections", "Shortness of breath"}},
      {"bronchiolitis", "Bronchiolitis",
       "A viral infection of the small airways, most common in infants and young children.",
       {"Runny nose and cough", "Rapid or laboured breathing", "Wheezing", "Feeding difficulty in infants"}},
      {"pneumonia", "Pneumonia",
       "An infection that inflames the air sacs in one or both lungs, which may fill with fluid.",
       {"Cough with phlegm", "Fever and chills", "Shortness of breath", "Chest pain when breathing"}},
      {"asthma", "Asthma",
       "A chronic condition in which the airways narrow, swell and produce extra mucus.",
       {"Wheezing", "Shortness of breath", "Chest tightness", "Coughing attacks, often at night"}},
      {"others", "Other respiratory condition",
       "The recording matches a respiratory condition outside the specific classes of the selected scheme. A "
       "clinician should review it.",
       {"Symptoms vary with the underlying condition", "Consult a clinician for a specific diagnosis"}},
  };
  return entries;
}

}  // namespace

std::string_view to_string(DiseaseInfo::Source source) {
  return source == DiseaseInfo::Source::ExternalApi ? "external_api" : "bundled";
}

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<DiseaseInfo> BundledDiseaseInfo::lookup(const std::string& label) const {
  const auto key = lower(label);
  for (const auto& e : bundle()) {
    if (key == e.key) {
      return DiseaseInfo{e.name, e.summary, e.symptoms, DiseaseInfo::Source::Bundled,
                         iso8601_utc(std::chrono::system_clock::now())};
    }
  }
  return std::nullopt;
}

HttpDiseaseInfo::HttpDiseaseInfo(std::string base_url, std::chrono::milliseconds timeout) : timeout_(timeout) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  const auto scheme_end = base_url.find("://");
  const auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = base_url;
  } else {
    scheme_host_port_ = base_url.substr(0, path_start);
    path_prefix_ = base_url.substr(path_start);
  }
}

std::optional<DiseaseInfo> HttpDiseaseInfo::lookup(const std::string& label) const {
  try {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const auto res = client.Get(path_prefix_ + "/" + httplib::detail::encode_url(label));
    if (!res || res->status != 200) return std::nullopt;
    const auto body = nlohmann::json::parse(res->body);
    DiseaseInfo info;
    info.name = body.at("name").get<std::string>();
    if (info.name.empty()) return std::nullopt;
    info.summary = body.value("summary", std::string{});
    if (body.contains("symptoms")) info.symptoms = body.at("symptoms").get<std::vector<std::string>>();
    info.source = DiseaseInfo::Source::ExternalApi;
    info.retrieved_at = iso8601_utc(std::chrono::system_clock::now());
    return info;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

DiseaseInfoService::DiseaseInfoService(std::shared_ptr<const DiseaseInfoProvider> external)
    : external_(std::move(external)) {}

DiseaseInfo DiseaseInfoService::get(const std::string& label) const {
  if (external_) {
    {
      std::lock_guard lock(mutex_);
      if (const auto it = cache_.find(label); it != cache_.end()) return it->second;
    }
    if (auto info = external_->lookup(label)) {
      std::lock_guard lock(mutex_);
      cache_[label] = *info;
      return *info;
    }
  }
  if (auto info = bundled_.lookup(label)) return *info;
  fail(ErrorCode::UnknownDisease, "no information for '" + label + "'");
}

}  // namespace voxmed
