#include "platehbm/error.hpp"

#include <atomic>
#include <cstdio>

namespace phbm {

namespace {

void stderr_sink(const std::string& message) { std::fprintf(stderr, "warning: %s\n", message.c_str()); }

std::atomic<WarningSink> g_sink{&stderr_sink};

}  // namespace

void set_warning_sink(WarningSink sink) { g_sink.store(sink ? sink : &stderr_sink); }

void warn(const std::string& message) { g_sink.load()(message); }

}  // namespace phbm
