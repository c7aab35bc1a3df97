#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rwscope {

// Base for every error the library reports to callers.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedElf : public Error {
 public:
  MalformedElf(const std::string& what, std::uint64_t offset)
      : Error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyMatrix : public Error {
 public:
  using Error::Error;
};

class DegenerateSplit : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class SpawnError : public Error {
 public:
  using Error::Error;
};

class WorkdirError : public Error {
 public:
  using Error::Error;
};

class UnknownTool : public Error {
 public:
  using Error::Error;
};

// Bad user configuration: manifests, adapter files, cohort names, option ranges.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rwscope
