#pragma once

#include <stdexcept>
#include <string>

namespace ccnl {

// Every failure the library reports derives from Error; the C API maps each
// subclass onto one status code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class VocabularyError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class PairingError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ChecksumError : public Error { using Error::Error; };

}  // namespace ccnl
