#ifndef DVSUPPORT_LOG_HPP
#define DVSUPPORT_LOG_HPP

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace dvsupport::log {

enum class Level { Info, Warning };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
inline std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s = [](Level level, std::string_view msg) {
        std::clog << (level == Level::Warning ? "[warn] " : "[info] ") << msg << '\n';
    };
    return s;
}
} // namespace detail

/// Replace the process-wide sink; returns the previous one.
inline Sink set_sink(Sink next) {
    std::lock_guard lock(detail::sink_mutex());
    std::swap(detail::sink(), next);
    return next;
}

inline void write(Level level, std::string_view msg) {
    std::lock_guard lock(detail::sink_mutex());
    if (detail::sink()) detail::sink()(level, msg);
}

inline void info(std::string_view msg) { write(Level::Info, msg); }
inline void warn(std::string_view msg) { write(Level::Warning, msg); }

/// Installs a sink for the lifetime of the guard.
class ScopedSink {
public:
    explicit ScopedSink(Sink s) : previous_(set_sink(std::move(s))) {}
    ~ScopedSink() { set_sink(std::move(previous_)); }
    ScopedSink(const ScopedSink&) = delete;
    ScopedSink& operator=(const ScopedSink&) = delete;

private:
    Sink previous_;
};

} // namespace dvsupport::log

#endif // DVSUPPORT_LOG_HPP
