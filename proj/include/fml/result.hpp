#pragma once

#include <cassert>
#include <utility>
#include <variant>

namespace fml {

/// Minimal success-or-error carrier used by fallible operations.
template <class T, class E>
class Result {
 public:
  Result(T value) : data_(std::in_place_index<0>, std::move(value)) {}
  Result(E error) : data_(std::in_place_index<1>, std::move(error)) {}

  bool ok() const { return data_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() {
    assert(ok());
    return std::get<0>(data_);
  }
  const T& value() const {
    assert(ok());
    return std::get<0>(data_);
  }
  E& error() {
    assert(!ok());
    return std::get<1>(data_);
  }
  const E& error() const {
    assert(!ok());
    return std::get<1>(data_);
  }

 private:
  std::variant<T, E> data_;
};

}  // namespace fml
