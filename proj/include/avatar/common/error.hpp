#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avatar {

/// Exception carrying a module-specific error code.
///
/// Each module defines an `enum class` of error codes plus a `to_string`
/// overload and throws `Error<ThatEnum>`; callers catch the specific
/// instantiation when they care about the code.
template <typename Code>
class Error : public std::runtime_error
{
public:
    Error(Code code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail))
        , m_code(code)
    {
    }

    explicit Error(Code code)
        : Error(code, std::string())
    {
    }

    Code code() const noexcept { return m_code; }

private:
    Code m_code;
};

} // namespace avatar
