#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace multiverse {

// Root of every error the simulator raises. Page faults are not errors; they
// are ordinary translation results.
class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public SimError {
 public:
  using SimError::SimError;
};

class AllocationError : public SimError {
 public:
  using SimError::SimError;
};

// A hypercall request arrived while the shared data page was still busy.
class BusyError : public SimError {
 public:
  using SimError::SimError;
};

class ProtocolError : public SimError {
 public:
  using SimError::SimError;
};

class InstallError : public SimError {
 public:
  using SimError::SimError;
};

class PartitionError : public SimError {
 public:
  using SimError::SimError;
};

class BootError : public SimError {
 public:
  using SimError::SimError;
};

class LifecycleError : public SimError {
 public:
  using SimError::SimError;
};

class DoubleFaultError : public SimError {
 public:
  using SimError::SimError;
};

class SymbolError : public SimError {
 public:
  using SimError::SimError;
};

class DeadlockError : public SimError {
 public:
  using SimError::SimError;
};

class FormatError : public SimError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : SimError(what + " at offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ParseError : public SimError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : SimError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace multiverse
