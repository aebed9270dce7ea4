#include "http_clients.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "prx/json_io.hpp"

namespace prx::detail {

using nlohmann::json;

Url parse_url(const std::string& url) {
  const std::string scheme = "http://";
  if (url.compare(0, scheme.size(), scheme) != 0 || url.size() == scheme.size()) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must be an http:// URL: '" + url + "'",
                "endpoint");
  }
  const std::size_t slash = url.find('/', scheme.size());
  Url u;
  u.origin = url.substr(0, slash);
  u.base = slash == std::string::npos ? "" : url.substr(slash);
  while (!u.base.empty() && u.base.back() == '/') u.base.pop_back();
  return u;
}

namespace {

// Bounds concurrent requests from one client.
class Gate {
 public:
  explicit Gate(int limit) : free_(limit) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
};

struct GateHold {
  Gate& g;
  explicit GateHold(Gate& gate) : g(gate) { g.acquire(); }
  ~GateHold() { g.release(); }
};

// POSTs JSON with retries on transport errors, 429 and 5xx. Returns the
// parsed body of a 2xx response; anything else raises `code`.
json post_json(const Url& url, const std::string& path, const json& body,
               const embedding::HttpClientOptions& opt, Gate& gate, ErrorCode code) {
  GateHold hold(gate);
  const std::string payload = json_io::dump(body);
  std::string last_error;
  int delay = opt.backoff_ms;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::milliseconds(opt.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(url.base + path, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(code, url.origin + url.base + path + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error&) {
      throw Error(code, url.origin + url.base + path + " returned a non-JSON body");
    }
  }
  throw Error(code, url.origin + url.base + path + " failed after " +
                        std::to_string(opt.max_retries + 1) + " attempts: " + last_error);
}

class HttpEncoder final : public embedding::Encoder {
 public:
  explicit HttpEncoder(embedding::EmbedderSpec spec)
      : spec_(std::move(spec)), url_(parse_url(spec_.endpoint)), gate_(spec_.http.max_in_flight) {}

  std::size_t dim() const override { return spec_.dim; }

  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += spec_.http.batch_size) {
      const std::size_t end = std::min(texts.size(), start + spec_.http.batch_size);
      std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                     texts.begin() + static_cast<std::ptrdiff_t>(end));
      json res = post_json(url_, "/embed", {{"model", spec_.model_name}, {"texts", batch}},
                           spec_.http, gate_, ErrorCode::EmbedServiceError);
      auto it = res.find("vectors");
      if (it == res.end() || !it->is_array() || it->size() != batch.size()) {
        throw Error(ErrorCode::EmbedServiceError,
                    "embed response must carry one vector per input text");
      }
      for (const auto& v : *it) {
        if (!v.is_array()) throw Error(ErrorCode::EmbedServiceError, "vector must be an array");
        if (v.size() != spec_.dim) {
          throw Error(ErrorCode::DimensionMismatch,
                      "embed service returned dim " + std::to_string(v.size()) + ", expected " +
                          std::to_string(spec_.dim));
        }
        std::vector<double> values;
        values.reserve(v.size());
        for (const auto& x : v) {
          if (!x.is_number() || !std::isfinite(x.get<double>())) {
            throw Error(ErrorCode::EmbedServiceError, "vector entries must be finite numbers");
          }
          values.push_back(x.get<double>());
        }
        try {
          out.push_back(embedding::normalize(values));
        } catch (const Error&) {
          throw Error(ErrorCode::EmbedServiceError, "embed service returned a zero vector");
        }
      }
    }
    return out;
  }

 private:
  embedding::EmbedderSpec spec_;
  Url url_;
  mutable Gate gate_;
};

class HttpGenerator final : public rag::Generator {
 public:
  explicit HttpGenerator(rag::GeneratorSpec spec)
      : spec_(std::move(spec)), url_(parse_url(spec_.endpoint)), gate_(spec_.http.max_in_flight) {}

  rag::GeneratorKind kind() const override { return rag::GeneratorKind::external_http; }

  Recommendation generate(const rag::Prompt& prompt, const RetrievalSet& retrieved) const override {
    json res = post_json(url_, "/generate",
                         {{"model", spec_.model_name},
                          {"prompt", prompt.rendered},
                          {"max_tokens", spec_.max_output_tokens}},
                         spec_.http, gate_, ErrorCode::GeneratorServiceError);
    auto it = res.find("text");
    if (it == res.end() || !it->is_string()) {
      throw Error(ErrorCode::GeneratorServiceError, "generate response must carry a text field");
    }
    return rag::parse_generator_output(it->get<std::string>(), retrieved, prompt.hash());
  }

 private:
  rag::GeneratorSpec spec_;
  Url url_;
  mutable Gate gate_;
};

}  // namespace

std::unique_ptr<embedding::Encoder> make_http_encoder(const embedding::EmbedderSpec& spec) {
  return std::make_unique<HttpEncoder>(spec);
}

std::unique_ptr<rag::Generator> make_http_generator(const rag::GeneratorSpec& spec) {
  return std::make_unique<HttpGenerator>(spec);
}

}  // namespace prx::detail
