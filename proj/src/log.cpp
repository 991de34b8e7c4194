#include "titleforge/log.hpp"

#include <iostream>
#include <mutex>

namespace titleforge::log {
namespace {

const char* level_name(Level level) {
    switch (level) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
    }
    return "?";
}

struct State {
    std::mutex mutex;
    Level min_level = Level::info;
    Sink sink = [](Level level, std::string_view message) {
        std::cerr << "[" << level_name(level) << "] " << message << '\n';
    };
};

State& state() {
    static State s;
    return s;
}

}  // namespace

Sink set_sink(Sink sink) {
    std::lock_guard lock(state().mutex);
    std::swap(state().sink, sink);
    return sink;
}

void set_min_level(Level level) {
    std::lock_guard lock(state().mutex);
    state().min_level = level;
}

void write(Level level, std::string_view message) {
    std::lock_guard lock(state().mutex);
    if (level < state().min_level || !state().sink) {
        return;
    }
    state().sink(level, message);
}

}  // namespace titleforge::log
