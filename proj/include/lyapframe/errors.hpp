#pragma once

#include <stdexcept>
#include <string>

namespace lyapframe {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// The state left the configured ball, or became non-finite.
class BlowUpError : public Error {
public:
    BlowUpError(double t, double norm, const std::string& what)
        : Error(what), time(t), state_norm(norm) {}
    double time;
    double state_norm;
};

class DegenerateFrameError : public Error {
public:
    DegenerateFrameError(int column, const std::string& what) : Error(what), column(column) {}
    int column;
};

class OrthonormalityError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CoverageError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// A local construction was used outside its validity radius.
class ValidityError : public Error {
public:
    ValidityError(double t, double radius, const std::string& what) : Error(what), time(t), radius(radius) {}
    double time;
    double radius;
};

} // namespace lyapframe
