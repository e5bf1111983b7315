#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synthdial {

enum class Errc {
  EmptyNote,
  NoSectionsFound,
  EmptyHeader,
  InvalidHeader,
  MalformedLine,
  DuplicateSurface,
  BudgetExceeded,
  TransportError,
  AuthError,
  ScriptExhausted,
  ScriptMismatch,
  TemplateError,
  ParseFailure,
  LengthMismatch,
  CorpusTooSmall,
  EmptyList,
  MissingReference,
  DuplicateId,
  ConfigError,
  IoError,
};

const char* to_string(Errc code) noexcept;

// Every failure raised by the library carries an Errc so callers can map
// it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Errors tied to a line in an input file (lexicon TSV, JSONL).
class LineError : public Error {
 public:
  LineError(Errc code, std::size_t line_no, const std::string& what)
      : Error(code, "line " + std::to_string(line_no) + ": " + what),
        line_no_(line_no) {}

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

// A replayed call whose prompt hash differs from the recorded one.
class ScriptMismatchError : public Error {
 public:
  ScriptMismatchError(std::size_t seq, const std::string& what)
      : Error(Errc::ScriptMismatch,
              "seq " + std::to_string(seq) + ": " + what),
        seq_(seq) {}

  std::size_t seq() const noexcept { return seq_; }

 private:
  std::size_t seq_;
};

// Failures reported per id (missing reference, duplicate id).
class IdError : public Error {
 public:
  IdError(Errc code, std::string id)
      : Error(code, "id '" + id + "'"), id_(std::move(id)) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class HttpError : public Error {
 public:
  HttpError(Errc code, int status, const std::string& what)
      : Error(code, "HTTP " + std::to_string(status) + ": " + what),
        status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace synthdial
