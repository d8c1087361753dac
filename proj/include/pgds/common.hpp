#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pgds {

// Bad caller input (violated precondition, malformed value).
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Object used in a state that forbids the operation (e.g. frozen weights).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& msg) : std::logic_error(msg) {}
};

// Filesystem / parse failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
template <typename... Args>
std::string format_msg(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

}  // namespace pgds

#define PGDS_CHECK_ARG(cond, ...)                                       \
  do {                                                                  \
    if (!(cond)) throw ::pgds::DomainError(::pgds::detail::format_msg(__VA_ARGS__)); \
  } while (0)

#define PGDS_CHECK_STATE(cond, ...)                                     \
  do {                                                                  \
    if (!(cond)) throw ::pgds::StateError(::pgds::detail::format_msg(__VA_ARGS__)); \
  } while (0)

#define PGDS_CHECK_IO(cond, ...)                                        \
  do {                                                                  \
    if (!(cond)) throw ::pgds::IoError(::pgds::detail::format_msg(__VA_ARGS__)); \
  } while (0)
