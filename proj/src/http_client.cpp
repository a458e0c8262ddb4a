#include "http_client.hpp"

#include <httplib.h>

namespace bic::http {

namespace {

// Splits "scheme://host[:port]/path?query" into the client base and the rest.
std::pair<std::string, std::string> split_url(const std::string& url)
{
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

template <class Client>
void configure(Client& client, std::chrono::seconds timeout)
{
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_follow_location(true);
}

std::optional<Reply> to_reply(const httplib::Result& res)
{
    if (!res) return std::nullopt;
    return Reply{res->status, res->body, res->get_header_value("Content-Type")};
}

}  // namespace

std::optional<Reply> get(const std::string& url, std::chrono::seconds timeout)
{
    auto [base, path] = split_url(url);
    httplib::Client client(base);
    configure(client, timeout);
    return to_reply(client.Get(path));
}

std::optional<Reply> post_json(const std::string& base_url, const std::string& path, const std::string& body,
                               std::chrono::seconds timeout)
{
    httplib::Client client(base_url);
    configure(client, timeout);
    return to_reply(client.Post(path, body, "application/json"));
}

}  // namespace bic::http
