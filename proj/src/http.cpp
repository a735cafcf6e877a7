// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/http.hpp>

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace kgq
{

namespace
{

// Stops `client` once the deadline passes and keeps re-issuing the stop until
// the request returns, so a connect in progress cannot outlive the deadline.
class Watchdog
{
  public:
    Watchdog(httplib::Client& client, std::chrono::milliseconds timeout):
        _thread([this, &client, timeout] {
            std::unique_lock lock(_mutex);
            if (_cv.wait_for(lock, timeout, [this] { return _done; }))
                return;
            _fired = true;
            while (!_done)
            {
                client.stop();
                _cv.wait_for(lock, std::chrono::milliseconds(50), [this] { return _done; });
            }
        })
    {
    }

    Watchdog(const Watchdog&) = delete;
    Watchdog& operator=(const Watchdog&) = delete;
    ~Watchdog() { finish(); }

    void finish()
    {
        {
            std::lock_guard lock(_mutex);
            _done = true;
        }
        _cv.notify_all();
        if (_thread.joinable())
            _thread.join();
    }

    [[nodiscard]] bool fired() const noexcept { return _fired; }

  private:
    std::mutex _mutex;
    std::condition_variable _cv;
    bool _done = false;
    std::atomic<bool> _fired { false };
    std::thread _thread;
};

std::string format_seconds(std::chrono::milliseconds ms)
{
    auto const tenths = ms.count() / 100;
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + " s";
}

} // namespace

HttpResponse http_post(const HttpRequest& request)
{
    auto const scheme_end = request.url.find("://");
    auto const path_start = request.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    auto const host = path_start == std::string::npos ? request.url : request.url.substr(0, path_start);
    auto const path = path_start == std::string::npos ? std::string("/") : request.url.substr(path_start);

    httplib::Client client(host);
    if (!client.is_valid())
        fail(ErrorKind::Transport, "unsupported URL '" + request.url + "'");
    client.set_connection_timeout(request.timeout);
    client.set_read_timeout(request.timeout);
    client.set_write_timeout(request.timeout);
    client.set_keep_alive(false);

    httplib::Headers headers;
    for (const auto& [name, value]: request.headers)
        headers.emplace(name, value);

    auto const start = std::chrono::steady_clock::now();
    Watchdog watchdog(client, request.timeout);
    auto res = client.Post(path, headers, request.body, request.content_type);
    watchdog.finish();
    if (!res)
    {
        auto const elapsed = std::chrono::steady_clock::now() - start;
        if (watchdog.fired() || elapsed >= request.timeout || res.error() == httplib::Error::ConnectionTimeout)
            throw TimeoutError { "request timed out after " + format_seconds(request.timeout) };
        fail(ErrorKind::Transport, "cannot reach " + request.url + ": " + httplib::to_string(res.error()));
    }
    return HttpResponse { res->status, std::move(res->body) };
}

} // namespace kgq
