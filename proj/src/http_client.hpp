#pragma once

#include <chrono>
#include <optional>
#include <string>

// Thin wrapper so only one translation unit pulls in cpp-httplib.
namespace bic::http {

struct Reply {
    int status = 0;
    std::string body;
    std::string content_type;
};

/// nullopt on a connection-level failure.
std::optional<Reply> get(const std::string& url, std::chrono::seconds timeout);
std::optional<Reply> post_json(const std::string& base_url, const std::string& path, const std::string& body,
                               std::chrono::seconds timeout);

}  // namespace bic::http
