#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rwd {

enum class ErrorCode {
  MalformedRecord,
  OrderViolation,
  DanglingSwitch,
  UnknownRequest,
  NoWorkerFound,
  StatementParseError,
  CorruptSnapshot,
  MissingFile,
  NonMonotoneTs,
  NoBackupBefore,
  NotSystemPath,
  ClassificationGap,
  NoCleanSnapshot,
  ProviderAbort,
  UniverseMismatch,
  InvalidConfig,
  InvalidArgument,
  InvariantViolation,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every fatal condition surfaces as an Error carrying its code; callers
// (the CLI mostly) switch on code() to pick an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Non-fatal findings (capture gaps, implicit closes, no-op replays).
struct Diagnostic {
  std::string kind;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

}  // namespace rwd
