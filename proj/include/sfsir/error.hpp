#pragma once

#include <stdexcept>
#include <string>

namespace sfsir {

// Malformed or inconsistent input data (files, configs). The CLI maps this
// to exit code 2.
class InputError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// An estimator could not produce a result from otherwise valid input
// (empty neighborhoods, no usable pairs, failed factorization).
class ComputationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace sfsir
