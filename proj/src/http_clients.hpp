#pragma once

#include <memory>
#include <string>

#include "prx/embedding.hpp"
#include "prx/rag.hpp"

namespace prx::detail {

struct Url {
  std::string origin;  // scheme://host:port
  std::string base;    // path prefix without trailing slash
};

// Accepts http://host[:port][/prefix]. Throws InvalidArgument otherwise.
Url parse_url(const std::string& url);

std::unique_ptr<embedding::Encoder> make_http_encoder(const embedding::EmbedderSpec& spec);
std::unique_ptr<rag::Generator> make_http_generator(const rag::GeneratorSpec& spec);

}  // namespace prx::detail
