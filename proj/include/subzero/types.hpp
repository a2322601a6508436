#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <unsupported/Eigen/CXX11/Tensor>

namespace subzero {

using Index = Eigen::Index;

template <typename S>
using Cx = std::complex<S>;

// All multi-dimensional arrays are row-major so that the trailing index is
// contiguous: coefficient maps (M, N, B) hold each voxel's B coefficients
// next to each other, which is also the HWC layout the network consumes.
template <typename T, int Rank>
using Tensor = Eigen::Tensor<T, Rank, Eigen::RowMajor>;

template <typename S> using KSpace = Tensor<Cx<S>, 4>;       // (M, N, C, T)
template <typename S> using Sensitivities = Tensor<Cx<S>, 3>; // (M, N, C)
template <typename S> using Coeffs = Tensor<Cx<S>, 3>;        // (M, N, B)
template <typename S> using Images = Tensor<Cx<S>, 3>;        // (M, N, T)
template <typename S> using Basis = Eigen::Matrix<Cx<S>, Eigen::Dynamic, Eigen::Dynamic>; // (T, B)

using Mask = Tensor<std::uint8_t, 3>; // (M, N, T)
using RealMap = Tensor<double, 2>;    // (M, N)

enum class ErrorCategory { Domain, Numeric, Degenerate, Io };

inline char const *category_name(ErrorCategory c)
{
  switch (c) {
  case ErrorCategory::Domain: return "domain";
  case ErrorCategory::Numeric: return "numeric";
  case ErrorCategory::Degenerate: return "degenerate";
  case ErrorCategory::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error
{
public:
  Error(ErrorCategory cat, std::string const &msg)
      : std::runtime_error(msg), category_(cat)
  {
  }
  ErrorCategory category() const { return category_; }

private:
  ErrorCategory category_;
};

struct DomainError : Error
{
  explicit DomainError(std::string const &msg) : Error(ErrorCategory::Domain, msg) {}
};

struct NumericError : Error
{
  explicit NumericError(std::string const &msg) : Error(ErrorCategory::Numeric, msg) {}
};

struct DegenerateError : Error
{
  explicit DegenerateError(std::string const &msg) : Error(ErrorCategory::Degenerate, msg) {}
};

struct IoError : Error
{
  explicit IoError(std::string const &msg) : Error(ErrorCategory::Io, msg) {}
};

inline void require(bool ok, std::string const &msg)
{
  if (!ok) {
    throw DomainError(msg);
  }
}

template <typename T, int R>
bool same_dims(Tensor<T, R> const &t, std::array<Index, R> const &d)
{
  for (int i = 0; i < R; i++) {
    if (t.dimension(i) != d[i]) {
      return false;
    }
  }
  return true;
}

template <typename T, int R>
std::string dims_string(Tensor<T, R> const &t)
{
  std::string s = "(";
  for (int i = 0; i < R; i++) {
    s += std::to_string(t.dimension(i));
    s += (i + 1 < R) ? ", " : ")";
  }
  return s;
}

// Cast a complex tensor between precisions.
template <typename To, typename From, int R>
Tensor<Cx<To>, R> cast_cx(Tensor<Cx<From>, R> const &in)
{
  return in.template cast<Cx<To>>();
}

} // namespace subzero
