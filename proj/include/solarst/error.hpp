#pragma once

#include <stdexcept>
#include <string>

namespace solarst {

/// Raised for contract violations and numerical failures anywhere in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace solarst
