#include "seedlab/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace seedlab::log {

namespace {

std::optional<Level>& override_level() {
    static std::optional<Level> l;
    return l;
}

Level from_env() {
    const char* v = std::getenv("SEEDLAB_LOG");
    if (!v) return Level::info;
    const std::string s(v);
    if (s == "quiet") return Level::quiet;
    if (s == "debug") return Level::debug;
    return Level::info;
}

void emit(const char* tag, std::string_view msg) { std::cerr << "[seedlab " << tag << "] " << msg << '\n'; }

}  // namespace

Level level() {
    static const Level env = from_env();
    return override_level().value_or(env);
}

void set_level(Level l) { override_level() = l; }

void warn(std::string_view msg) {
    if (level() >= Level::info) emit("warn", msg);
}
void info(std::string_view msg) {
    if (level() >= Level::info) emit("info", msg);
}
void debug(std::string_view msg) {
    if (level() >= Level::debug) emit("debug", msg);
}

}  // namespace seedlab::log
