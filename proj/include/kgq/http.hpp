// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace kgq
{

/// Thrown when a request's deadline expires.
struct TimeoutError
{
    std::string message;
};

struct HttpRequest
{
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::string content_type;
    std::chrono::milliseconds timeout { 60'000 };
};

struct HttpResponse
{
    int status = 0;
    std::string body;
};

/// POSTs `request`. The whole exchange is bounded by `request.timeout`: a
/// watchdog shuts the socket down at the deadline. Throws TimeoutError on
/// expiry and Error{Transport} when the host cannot be reached.
HttpResponse http_post(const HttpRequest& request);

} // namespace kgq
