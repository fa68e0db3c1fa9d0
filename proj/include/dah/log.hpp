#pragma once

#include <functional>
#include <string_view>

namespace dah {

using LogSink = std::function<void(std::string_view)>;

/// Warnings go to std::clog unless a sink is installed. Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void log_warning(std::string_view message);

}  // namespace dah
