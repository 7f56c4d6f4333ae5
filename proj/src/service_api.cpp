#include "voxmed/service_api.hpp"

#include <cstdio>

#include <httplib.h>
#include <json.hpp>

#include "voxmed/error.hpp"
#include "voxmed/hash.hpp"

namespace voxmed {

namespace {

using ojson = nlohmann::ordered_json;

// Messages can carry bytes from the upload; invalid UTF-8 is replaced, never thrown.
std::string dump(const ojson& doc) { return doc.dump(-1, ' ', false, ojson::error_handler_t::replace); }

ojson info_to_json(const DiseaseInfo& info) {
  return ojson{{"name", info.name},
               {"summary", info.summary},
               {"symptoms", info.symptoms},
               {"source", std::string(to_string(info.source))},
               {"retrieved_at", info.retrieved_at}};
}

std::string error_json(std::string_view code, std::string_view message) {
  return dump(ojson{{"error", code}, {"message", message}});
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  res.status = status;
  res.set_content(error_json(code, message), "application/json");
}

}  // namespace

std::string PredictionResult::to_json() const {
  ojson probs = ojson::object();
  for (std::size_t i = 0; i < classes.size(); ++i) probs[classes[i]] = probabilities[i];
  return dump(ojson{{"scheme", scheme},
                    {"label", label},
                    {"probabilities", probs},
                    {"model_version", model_version},
                    {"processing_ms", processing_ms},
                    {"disease_info", info_to_json(disease_info)}});
}

std::string disease_info_json(const DiseaseInfo& info) { return dump(info_to_json(info)); }

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader:
    case ErrorCode::UnsupportedEncoding:
    case ErrorCode::TruncatedData:
    case ErrorCode::InvalidSample:
    case ErrorCode::InvalidRate:
    case ErrorCode::DurationExceeded:
    case ErrorCode::RateMismatch:
    case ErrorCode::ChannelMismatch:
    case ErrorCode::EmptyInput:
      return 400;
    case ErrorCode::UnknownDisease:
      return 404;
    case ErrorCode::CacheMiss:
      return 422;
    case ErrorCode::ModelFileMissing:
    case ErrorCode::BackendFailure:
      return 503;
    default:
      return 500;
  }
}

Service::Service(ServiceConfig cfg)
    : cfg_(std::move(cfg)),
      started_(std::chrono::steady_clock::now()),
      info_(cfg_.info_url ? std::make_shared<HttpDiseaseInfo>(*cfg_.info_url) : nullptr) {}

Service::~Service() = default;

void Service::boot() {
  try {
    cfg_.scheme.validate();
    cfg_.front_end.validate();
    if (!std::filesystem::is_regular_file(cfg_.model_path)) {
      fail(ErrorCode::ModelFileMissing, "model file not found: " + cfg_.model_path.string());
    }
    const Bytes model_bytes = read_file(cfg_.model_path);
    ModelParams params = decode_params(model_bytes);
    if (params.arch.num_classes != cfg_.scheme.classes.size()) {
      fail(ErrorCode::InvalidConfig, "model predicts " + std::to_string(params.arch.num_classes) +
                                         " classes but scheme '" + cfg_.scheme.id + "' has " +
                                         std::to_string(cfg_.scheme.classes.size()));
    }
    BackendConfig bc = cfg_.backend;
    if (!cfg_.embedding_dim_explicit) bc.embedding_dim = params.arch.input_dim;
    bind_front_end(bc, cfg_.front_end);
    auto backend = load_backend(bc);
    if (backend->dim() != params.arch.input_dim) {
      fail(ErrorCode::DimMismatch, "backend produces " + std::to_string(backend->dim()) +
                                       "-dim embeddings, model expects " + std::to_string(params.arch.input_dim));
    }
    embedder_ = std::make_unique<RecordingEmbedder>(cfg_.front_end, std::move(backend));
    model_version_ = "vxmd-v1:" + to_hex(sha256(model_bytes)).substr(0, 12);
    params_ = std::move(params);
    state_ = State::Ready;
  } catch (const Error& e) {
    boot_error_code_ = e.code();
    boot_error_ = e.what();
    state_ = State::Failed;
  } catch (const std::exception& e) {
    boot_error_code_ = ErrorCode::BackendFailure;
    boot_error_ = e.what();
    state_ = State::Failed;
  }
}

PredictionResult Service::predict(std::span<const std::uint8_t> wav_bytes) const {
  if (state_ != State::Ready) fail(ErrorCode::BackendFailure, "service is not ready");
  const auto t0 = std::chrono::steady_clock::now();
  const Embedding e = embedder_->embed_bytes(wav_bytes);
  const std::vector<Embedding> one{e};
  const ClassProbabilities p = predict_recording(*params_, one);

  PredictionResult r;
  r.scheme = cfg_.scheme.name;
  r.classes = cfg_.scheme.classes;
  r.probabilities = p.probs;
  r.label = cfg_.scheme.classes.at(p.label_index);
  r.model_version = model_version_;
  r.disease_info = info_.get(r.label);
  r.processing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::pair<int, std::string> Service::health() const {
  const State s = state_.load();
  ojson doc;
  doc["status"] = s == State::Ready ? "ready" : s == State::Loading ? "loading" : "failed";
  doc["model_version"] = model_version_;
  doc["backend"] = std::string(to_string(cfg_.backend.kind));
  if (s == State::Ready) doc["backend_id"] = embedder_->backend().id();
  doc["scheme"] = cfg_.scheme.name;
  doc["uptime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  if (s == State::Failed) {
    doc["error"] = std::string(to_string(boot_error_code_));
    doc["message"] = boot_error_;
  }
  return {s == State::Ready ? 200 : 503, dump(doc)};
}

void Service::register_routes(httplib::Server& server) const {
  server.set_payload_max_length(cfg_.max_upload_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  // Fills in a JSON body for statuses produced by the HTTP layer itself
  // (413, 404 on unknown paths, 400 on unparsable requests).
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (res.status == 413) {
      send_error(res, 413, "PayloadTooLarge", "upload exceeds the size limit");
    } else if (res.status == 404) {
      send_error(res, 404, "NotFound", "no such endpoint");
    } else {
      send_error(res, res.status, "BadRequest", httplib::status_message(res.status));
    }
    return httplib::Server::HandlerResponse::Handled;
  });

  server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto [status, body] = health();
    res.status = status;
    res.set_content(body, "application/json");
  });

  server.Get(R"(/api/v1/diseases/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(disease_info_json(disease_info(req.matches[1].str())), "application/json");
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), e.code_name(), e.what());
    }
  });

  server.Post("/api/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
    if (state_ != State::Ready) {
      const bool failed = state_ == State::Failed;
      send_error(res, 503, failed ? to_string(boot_error_code_) : "NotReady",
                 failed ? boot_error_ : "model is loading");
      return;
    }
    if (!req.has_file("audio")) {
      send_error(res, 400, "MissingAudio", "expected a multipart field named 'audio'");
      return;
    }
    const auto& content = req.get_file_value("audio").content;
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(content.data()), content.size());
    try {
      res.set_content(predict(bytes).to_json(), "application/json");
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), e.code_name(), e.what());
    } catch (const std::bad_alloc&) {
      send_error(res, 413, "PayloadTooLarge", "recording too large to process");
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  });
}

void Service::listen() {
  server_ = std::make_unique<httplib::Server>();
  register_routes(*server_);
  if (!server_->listen(cfg_.host, cfg_.port)) {
    fail(ErrorCode::IoError, "cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port));
  }
}

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace voxmed
