#include "skicl/log.hpp"

#include <iostream>
#include <mutex>

namespace skicl {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink() {
    static LogSink s = [](const std::string& message) { std::cerr << "warning: " << message << '\n'; };
    return s;
}

}  // namespace

LogSink set_warning_sink(LogSink next) {
    std::lock_guard lock(sink_mutex());
    LogSink previous = std::move(sink());
    sink() = std::move(next);
    return previous;
}

void log_warning(const std::string& message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) sink()(message);
}

}  // namespace skicl
