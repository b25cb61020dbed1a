#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace alf {

enum class LogLevel : int { Error = 0, Info = 1, Debug = 2 };

// Level comes from ALF_LOG={error,info,debug}; unset means info.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("ALF_LOG");
        if (env == nullptr) return LogLevel::Info;
        std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

namespace detail {

inline void vlog_line(const char* level_tag, const char* topic, const char* fmt, va_list ap) {
    char buf[1024];
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[alf:" << level_tag << "] " << topic << ": " << buf << "\n";
}

}  // namespace detail

__attribute__((format(printf, 2, 3))) inline void log_error(const char* topic, const char* fmt,
                                                            ...) {
    va_list ap;
    va_start(ap, fmt);
    detail::vlog_line("error", topic, fmt, ap);
    va_end(ap);
}

__attribute__((format(printf, 2, 3))) inline void log_info(const char* topic, const char* fmt,
                                                           ...) {
    if (log_level() < LogLevel::Info) return;
    va_list ap;
    va_start(ap, fmt);
    detail::vlog_line("info", topic, fmt, ap);
    va_end(ap);
}

__attribute__((format(printf, 2, 3))) inline void log_debug(const char* topic, const char* fmt,
                                                            ...) {
    if (log_level() < LogLevel::Debug) return;
    va_list ap;
    va_start(ap, fmt);
    detail::vlog_line("debug", topic, fmt, ap);
    va_end(ap);
}

}  // namespace alf
