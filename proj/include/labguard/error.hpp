#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace labguard {

// Base for every error raised by the kernel. Callers that only care about
// "something in the safety path failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A model, barrier, or integration step produced NaN/Inf.
class NumericalDivergence : public Error {
 public:
  NumericalDivergence(const std::string& what, std::size_t step_index = 0)
      : Error(what), step_index_(step_index) {}
  std::size_t step_index() const { return step_index_; }

 private:
  std::size_t step_index_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IterationLimit : public Error {
 public:
  using Error::Error;
};

class MissingParameter : public Error {
 public:
  explicit MissingParameter(const std::string& name)
      : Error("missing parameter: " + name), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class UnknownMaterial : public Error {
 public:
  explicit UnknownMaterial(const std::string& id) : Error("unknown material: " + id) {}
};

class MalformedRequest : public Error {
 public:
  using Error::Error;
};

class LockConflict : public Error {
 public:
  LockConflict(const std::string& resource, const std::string& holder)
      : Error("resource '" + resource + "' held by " + holder), resource_(resource) {}
  const std::string& resource() const { return resource_; }

 private:
  std::string resource_;
};

class IllegalTransition : public Error {
 public:
  using Error::Error;
};

class UnknownTransaction : public Error {
 public:
  using Error::Error;
};

class ScenarioInvalid : public Error {
 public:
  ScenarioInvalid(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class MissingLabels : public Error {
 public:
  using Error::Error;
};

class AlreadyDecided : public Error {
 public:
  using Error::Error;
};

class UnknownTicket : public Error {
 public:
  using Error::Error;
};

class Expired : public Error {
 public:
  using Error::Error;
};

}  // namespace labguard
