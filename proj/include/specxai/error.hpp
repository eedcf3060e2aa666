#pragma once

#include <stdexcept>
#include <string>

namespace specxai {

/// Root of every error raised by the toolkit. The kind decides the CLI exit code.
class Error : public std::runtime_error {
public:
    enum class Kind {
        Dimension,
        Numeric,
        Resource,
        Capability,
        RegionBoundary,
        Normalization,
        Training,
        Io,
        Format,
    };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(Kind::Dimension, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(Kind::Numeric, what) {}
};

/// An explicit operator would exceed the element budget.
class ResourceError : public Error {
public:
    explicit ResourceError(const std::string& what) : Error(Kind::Resource, what) {}
};

class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& what) : Error(Kind::Capability, what) {}
};

/// The input sits on (or cannot be probed away from) a linear-region boundary.
class RegionBoundaryError : public Error {
public:
    explicit RegionBoundaryError(const std::string& what) : Error(Kind::RegionBoundary, what) {}
};

class NormalizationError : public Error {
public:
    explicit NormalizationError(const std::string& what) : Error(Kind::Normalization, what) {}
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch) : Error(Kind::Training, what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(Kind::Io, what) {}
};

/// Problems with the interchange format. Subtypes are distinguished by `reason`.
class FormatError : public Error {
public:
    enum class Reason { Version, CorruptBlob, ShapeChain, Schema };

    FormatError(Reason reason, const std::string& what) : Error(Kind::Format, what), reason_(reason) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

}  // namespace specxai
