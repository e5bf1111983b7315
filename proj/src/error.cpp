#include "synthdial/error.hpp"

namespace synthdial {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyNote: return "EmptyNote";
    case Errc::NoSectionsFound: return "NoSectionsFound";
    case Errc::EmptyHeader: return "EmptyHeader";
    case Errc::InvalidHeader: return "InvalidHeader";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::DuplicateSurface: return "DuplicateSurface";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::TransportError: return "TransportError";
    case Errc::AuthError: return "AuthError";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::ScriptMismatch: return "ScriptMismatch";
    case Errc::TemplateError: return "TemplateError";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::CorpusTooSmall: return "CorpusTooSmall";
    case Errc::EmptyList: return "EmptyList";
    case Errc::MissingReference: return "MissingReference";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace synthdial
