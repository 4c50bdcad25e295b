#pragma once

#include <stdexcept>
#include <string>

namespace loopsift {

// Error classes map one-to-one onto CLI exit codes (parse=2, numeric=3, io=4).

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace loopsift
