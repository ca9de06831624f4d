#include <httplib.h>
#include <json.hpp>

#include <cmath>

#include "evoattack/oracle.hpp"

namespace evoattack {
namespace {

using json = nlohmann::json;
using Kind = OracleError::Kind;

httplib::Client make_client(const RemoteOptions& options) {
  httplib::Client cli(options.endpoint);
  const auto secs = static_cast<time_t>(options.timeout_seconds);
  const auto usecs = static_cast<time_t>((options.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  return cli;
}

// Runs `request` until it yields an HTTP response, up to 1 + max_retries attempts.
template <class Request>
httplib::Result with_retries(const RemoteOptions& options, const char* what, Request&& request) {
  std::string last_error;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    auto cli = make_client(options);
    auto res = request(cli);
    if (res) return res;
    last_error = httplib::to_string(res.error());
  }
  throw OracleError(Kind::Transport, std::string(what) + " " + options.endpoint + " failed after " +
                                         std::to_string(options.max_retries + 1) +
                                         " attempts: " + last_error);
}

json parse_body(const httplib::Result& res, const char* what) {
  if (res->status != 200)
    throw OracleError(Kind::Malformed,
                      std::string(what) + " returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw OracleError(Kind::Malformed, std::string(what) + ": invalid JSON: " + e.what());
  }
}

}  // namespace

RemoteInfo fetch_remote_info(const RemoteOptions& options) {
  auto res = with_retries(options, "GET /info",
                          [](httplib::Client& cli) { return cli.Get("/info"); });
  const json body = parse_body(res, "GET /info");
  RemoteInfo info;
  try {
    info.classes = body.at("classes").get<std::size_t>();
    const auto shape = body.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw OracleError(Kind::Malformed, "GET /info: shape must have 3 entries");
    info.shape = {shape[0], shape[1], shape[2]};
    info.binary_only = body.value("binary_only", false);
  } catch (const json::exception& e) {
    throw OracleError(Kind::Malformed, std::string("GET /info: ") + e.what());
  }
  if (info.classes < 2) throw OracleError(Kind::Malformed, "GET /info: fewer than 2 classes");
  return info;
}

ConfidenceVector parse_probs(std::span<const double> probs, std::size_t classes, bool binary_only) {
  if (probs.size() != classes)
    throw OracleError(Kind::ClassCount, "response has " + std::to_string(probs.size()) +
                                            " probabilities, expected " + std::to_string(classes));
  double sum = 0.0;
  std::size_t ones = 0;
  std::size_t zeros = 0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0)
      throw OracleError(Kind::Malformed, "response contains invalid probability " + std::to_string(p));
    sum += p;
    ones += p == 1.0 ? 1 : 0;
    zeros += p == 0.0 ? 1 : 0;
  }
  if (binary_only) {
    if (ones != 1 || zeros != probs.size() - 1)
      throw OracleError(Kind::Malformed, "binary-only response is not one-hot");
  } else if (std::abs(sum - 1.0) > 1e-4) {
    throw OracleError(Kind::Malformed, "response probabilities sum to " + std::to_string(sum));
  }
  std::vector<double> out(probs.begin(), probs.end());
  for (double& p : out) p /= sum;
  return ConfidenceVector(std::move(out));
}

RemoteOracle::RemoteOracle(RemoteOptions options) : options_(std::move(options)) {
  if (options_.max_retries < 0) throw std::invalid_argument("RemoteOracle: max_retries must be >= 0");
  info_ = fetch_remote_info(options_);
  if (options_.expected_classes && *options_.expected_classes != info_.classes)
    throw OracleError(Kind::ClassCount, "remote oracle reports " + std::to_string(info_.classes) +
                                            " classes, configuration expects " +
                                            std::to_string(*options_.expected_classes));
  if (options_.expected_shape && *options_.expected_shape != info_.shape)
    throw OracleError(Kind::Shape, "remote oracle expects " + to_string(info_.shape) +
                                       ", configuration has " + to_string(*options_.expected_shape));
}

ConfidenceVector RemoteOracle::evaluate(const ImageTensor& image) {
  const auto& s = image.shape();
  json req = {{"shape", {s.height, s.width, s.channels}}, {"data", std::vector<float>(image.data().begin(), image.data().end())}};
  const std::string body = req.dump();
  auto res = with_retries(options_, "POST /predict", [&body](httplib::Client& cli) {
    return cli.Post("/predict", body, "application/json");
  });
  const json reply = parse_body(res, "POST /predict");
  std::vector<double> probs;
  try {
    probs = reply.at("probs").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw OracleError(Kind::Malformed, std::string("POST /predict: ") + e.what());
  }
  return parse_probs(probs, info_.classes, info_.binary_only);
}

}  // namespace evoattack
