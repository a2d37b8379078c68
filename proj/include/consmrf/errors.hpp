#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace consmrf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input file is missing or an output file cannot be written.
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

/// A split left some relation without training triples.
class SplitRejectedError : public Error {
 public:
  explicit SplitRejectedError(const std::string& relation)
      : Error("split leaves relation '" + relation + "' without training triples"),
        relation_(relation) {}

  const std::string& relation() const noexcept { return relation_; }

 private:
  std::string relation_;
};

/// The rejection sampler could not find an unlinked object.
class SaturationError : public Error {
 public:
  using Error::Error;
};

/// A parameter became non-finite during training.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what, long round = -1, long relation = -1)
      : Error(what), round_(round), relation_(relation) {}

  long round() const noexcept { return round_; }
  long relation() const noexcept { return relation_; }

 private:
  long round_;
  long relation_;
};

}  // namespace consmrf
