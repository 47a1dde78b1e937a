#pragma once

#include <stdexcept>
#include <string>

namespace abrw {

// Single exception type with a machine-readable code; the CLI maps codes to
// exit statuses and everything else just lets them propagate.
class Error : public std::runtime_error {
public:
    enum class Code {
        BadDocument,     // malformed law/config document
        NonProbability,  // atom weights do not sum to 1
        Reducible,       // support generates a proper subgroup
        BadMode,         // death mode with E||phi|| <= 1, or stay mode with E||phi|| = 0
        GapNonPositive,  // spectral gap scan hit a non-positive value
        Overflow,        // site count would exceed 2^62
        Extinct,         // no balls left (death mode only)
        Budget,          // event budget exceeded
        NoConvergence,   // grid doubling hit its cap
        LeakTooLarge,    // ODE oracle box lost too much mass
        CoverageGap,     // requested site outside a table's radius
        BadSpan,         // exponent fit input too short / too narrow
        PrecondOrder,    // coupling inputs not pointwise ordered
        OrderViolation,  // sandwich ordering broke (engine bug if ever seen)
        NotFound,        // stabilization radius not found below r_max
        Io,              // file I/O failure
    };

    Error(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

    Code code() const { return code_; }
    const char* code_name() const { return code_name(code_); }

    static const char* code_name(Code c) {
        switch (c) {
            case Code::BadDocument: return "BadDocument";
            case Code::NonProbability: return "NonProbability";
            case Code::Reducible: return "Reducible";
            case Code::BadMode: return "BadMode";
            case Code::GapNonPositive: return "GapNonPositive";
            case Code::Overflow: return "Overflow";
            case Code::Extinct: return "Extinct";
            case Code::Budget: return "Budget";
            case Code::NoConvergence: return "NoConvergence";
            case Code::LeakTooLarge: return "LeakTooLarge";
            case Code::CoverageGap: return "CoverageGap";
            case Code::BadSpan: return "BadSpan";
            case Code::PrecondOrder: return "PrecondOrder";
            case Code::OrderViolation: return "OrderViolation";
            case Code::NotFound: return "NotFound";
            case Code::Io: return "Io";
        }
        return "Unknown";
    }

private:
    Code code_;
};

}  // namespace abrw
