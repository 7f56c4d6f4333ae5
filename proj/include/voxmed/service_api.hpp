#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxmed/classifier.hpp"
#include "voxmed/dataset_icbhi.hpp"
#include "voxmed/disease_info.hpp"
#include "voxmed/embedding.hpp"
#include "voxmed/pipeline.hpp"

namespace httplib {
class Server;
}

namespace voxmed {

inline constexpr std::size_t kMaxUploadBytes = 25u * 1024u * 1024u;

struct ServiceConfig {
  std::filesystem::path model_path;
  // embedding_dim is taken from the model unless set explicitly here.
  BackendConfig backend;
  bool embedding_dim_explicit = false;
  FrontEndConfig front_end;
  LabelScheme scheme;
  std::optional<std::string> info_url;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::size_t max_upload_bytes = kMaxUploadBytes;
};

struct PredictionResult {
  std::string scheme;
  std::string label;
  std::vector<std::string> classes;
  std::vector<double> probabilities;  // parallel to classes
  std::string model_version;
  double processing_ms = 0.0;
  DiseaseInfo disease_info;

  // {scheme, label, probabilities: {class: p}, model_version, processing_ms,
  //  disease_info: {name, summary, symptoms, source, retrieved_at}}
  std::string to_json() const;
};

std::string disease_info_json(const DiseaseInfo& info);

// Maps a library error to the HTTP status returned for it.
int http_status_for(ErrorCode code);

class Service {
 public:
  enum class State { Loading, Ready, Failed };

  explicit Service(ServiceConfig cfg);
  ~Service();

  // Loads model and backend. Never throws; a failure leaves the service in
  // State::Failed with the error kept for health().
  void boot();

  State state() const { return state_.load(); }
  const std::string& model_version() const { return model_version_; }
  // Set when boot() failed.
  ErrorCode boot_error_code() const { return boot_error_code_; }
  const std::string& boot_error() const { return boot_error_; }

  // Requires State::Ready. Throws Error.
  PredictionResult predict(std::span<const std::uint8_t> wav_bytes) const;
  DiseaseInfo disease_info(const std::string& label) const { return info_.get(label); }

  // Status document and its HTTP status (200 ready, 503 otherwise).
  std::pair<int, std::string> health() const;

  void register_routes(httplib::Server& server) const;

  // Blocks until the server stops.
  void listen();
  void stop();

 private:
  ServiceConfig cfg_;
  std::atomic<State> state_{State::Loading};
  std::chrono::steady_clock::time_point started_;
  std::optional<ModelParams> params_;
  std::unique_ptr<RecordingEmbedder> embedder_;
  std::string model_version_;
  ErrorCode boot_error_code_ = ErrorCode::InvalidConfig;
  std::string boot_error_;
  DiseaseInfoService info_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace voxmed
