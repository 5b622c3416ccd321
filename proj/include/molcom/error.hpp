#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace molcom {

/// Bad input to a pure function (NaN, negative mean, out-of-domain value).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Physically or structurally inconsistent parameter set.
class InvalidConfiguration : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that cannot deliver a finite, in-tolerance result.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A distance law with zero relative diffusivity has no density.
class DegenerateLaw : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
struct WarningSink {
    std::mutex mutex;
    std::function<void(std::string_view)> handler = [](std::string_view msg) {
        std::clog << "molcom warning: " << msg << '\n';
    };
};
inline WarningSink& warning_sink()
{
    static WarningSink sink;
    return sink;
}
}  // namespace detail

/// Replace the process-wide warning handler (tests capture warnings this way).
inline void set_warning_handler(std::function<void(std::string_view)> handler)
{
    auto& sink = detail::warning_sink();
    std::lock_guard lock(sink.mutex);
    sink.handler = std::move(handler);
}

inline void warn(std::string_view message)
{
    auto& sink = detail::warning_sink();
    std::lock_guard lock(sink.mutex);
    if (sink.handler) sink.handler(message);
}

}  // namespace molcom
