#pragma once

#include <stdexcept>
#include <string>

namespace flsim {

// Base of every error raised by the library. The CLI maps ConfigError to
// exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ChannelError : public Error {
 public:
  using Error::Error;
};

class UnregisteredActorError : public ChannelError {
 public:
  using ChannelError::ChannelError;
};

class NoMessageError : public ChannelError {
 public:
  using ChannelError::ChannelError;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class InfeasiblePartitionError : public DataError {
 public:
  using DataError::DataError;
};

class RegistryError : public Error {
 public:
  using Error::Error;
};

}  // namespace flsim
