#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace voxmed {

struct DiseaseInfo {
  enum class Source { ExternalApi, Bundled };

  std::string name;  // never empty
  std::string summary;
  std::vector<std::string> symptoms;
  Source source = Source::Bundled;
  std::string retrieved_at;  // ISO 8601 UTC
};

std::string_view to_string(DiseaseInfo::Source source);  // "external_api" | "bundled"
std::string iso8601_utc(std::chrono::system_clock::time_point t);

class DiseaseInfoProvider {
 public:
  virtual ~DiseaseInfoProvider() = default;
  // nullopt when the provider has nothing for the label.
  virtual std::optional<DiseaseInfo> lookup(const std::string& label) const = 0;
};

// Offline dictionary. Matching is case-insensitive.
class BundledDiseaseInfo : public DiseaseInfoProvider {
 public:
  std::optional<DiseaseInfo> lookup(const std::string& label) const override;
};

// GET <base_url>/<label> expecting {"name", "summary", "symptoms": [...]}.
// Any transport error, non-200 status or malformed body yields nullopt.
class HttpDiseaseInfo : public DiseaseInfoProvider {
 public:
  explicit HttpDiseaseInfo(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(2));
  std::optional<DiseaseInfo> lookup(const std::string& label) const override;

 private:
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::chrono::milliseconds timeout_;
};

// External provider first, then the bundle. Successful external answers are
// cached per label (last writer wins); bundled fallbacks are not, so a
// provider that recovers is used again.
class DiseaseInfoService {
 public:
  explicit DiseaseInfoService(std::shared_ptr<const DiseaseInfoProvider> external = nullptr);

  DiseaseInfo get(const std::string& label) const;  // throws UnknownDisease

 private:
  std::shared_ptr<const DiseaseInfoProvider> external_;
  BundledDiseaseInfo bundled_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, DiseaseInfo> cache_;
};

}  // namespace voxmed
