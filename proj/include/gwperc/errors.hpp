#pragma once

#include <stdexcept>
#include <string>

namespace gwperc {

/// Base class for all library errors. `code()` is a stable identifier that
/// reports and the CLI print verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define GWPERC_DEFINE_ERROR(Name)                                               \
    class Name : public Error {                                                 \
    public:                                                                     \
        explicit Name(const std::string& what) : Error(#Name, what) {}          \
    }

// offspring
GWPERC_DEFINE_ERROR(RejectLeaves);
GWPERC_DEFINE_ERROR(RejectSubcritical);
GWPERC_DEFINE_ERROR(MalformedPmf);
GWPERC_DEFINE_ERROR(InvalidParameter);
// limit_laws, csbp
GWPERC_DEFINE_ERROR(DomainError);
GWPERC_DEFINE_ERROR(UnsupportedRegime);
// tree_store
GWPERC_DEFINE_ERROR(UnreachableNode);
GWPERC_DEFINE_ERROR(BudgetExceeded);
// percolation
GWPERC_DEFINE_ERROR(RunAborted);
GWPERC_DEFINE_ERROR(InvalidLevels);
// iic
GWPERC_DEFINE_ERROR(HeightMismatch);
GWPERC_DEFINE_ERROR(NotSubtree);
GWPERC_DEFINE_ERROR(InvalidTree);
GWPERC_DEFINE_ERROR(EnumerationBudget);
// estimators
GWPERC_DEFINE_ERROR(EmptyBatch);
GWPERC_DEFINE_ERROR(InsufficientSurvivors);
// harness
GWPERC_DEFINE_ERROR(ConfigError);
GWPERC_DEFINE_ERROR(IoError);

#undef GWPERC_DEFINE_ERROR

}  // namespace gwperc
