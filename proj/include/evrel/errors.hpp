#pragma once

#include <stdexcept>
#include <string>

namespace evrel {

// Exit codes used by the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitMissingInput = 2,
  kExitDataError = 3,
  kExitConfigError = 4,
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed record in an input file; carries the offending line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& file, long line_no, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line_no) + ": " + what),
        file(file),
        line(line_no) {}
  std::string file;
  long line;
};

// Well-formed data that breaks a documented invariant.
struct ValidationError : std::runtime_error {
  ValidationError(std::string doc, const std::string& what)
      : std::runtime_error(doc.empty() ? what : "doc " + doc + ": " + what),
        doc_id(std::move(doc)) {}
  std::string doc_id;
};

// Failure inside a pipeline stage, carrying document context.
struct PipelineError : std::runtime_error {
  PipelineError(std::string doc, const std::string& what)
      : std::runtime_error("doc " + doc + ": " + what), doc_id(std::move(doc)) {}
  std::string doc_id;
};

}  // namespace evrel
