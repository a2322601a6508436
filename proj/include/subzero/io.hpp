#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <hdf5.h>

#include "types.hpp"

// Named arrays in an HDF5 file. Complex arrays are float32 with a trailing
// (re, im) axis of length 2; masks are uint8; real arrays float64; text is a
// fixed-length string dataset. Names may contain '/' to nest groups.
namespace subzero::io {

namespace detail {

class Handle
{
public:
  using Closer = herr_t (*)(hid_t);
  Handle() = default;
  Handle(hid_t id, Closer close, std::string const &what) : id_(id), close_(close)
  {
    if (id_ < 0) {
      throw IoError(what);
    }
  }
  Handle(Handle const &) = delete;
  Handle &operator=(Handle const &) = delete;
  Handle(Handle &&o) noexcept : id_(o.id_), close_(o.close_) { o.id_ = -1; }
  Handle &operator=(Handle &&o) noexcept
  {
    std::swap(id_, o.id_);
    std::swap(close_, o.close_);
    return *this;
  }
  ~Handle()
  {
    if (id_ >= 0 && close_) {
      close_(id_);
    }
  }
  hid_t get() const { return id_; }

private:
  hid_t id_ = -1;
  Closer close_ = nullptr;
};

inline void check(herr_t status, std::string const &what)
{
  if (status < 0) {
    throw IoError(what);
  }
}

inline void silence_hdf5()
{
  static bool const done = [] {
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
    return true;
  }();
  (void)done;
}

template <typename T>
hid_t native_type();
template <>
inline hid_t native_type<std::uint8_t>() { return H5T_NATIVE_UINT8; }
template <>
inline hid_t native_type<std::int64_t>() { return H5T_NATIVE_INT64; }
template <>
inline hid_t native_type<float>() { return H5T_NATIVE_FLOAT; }
template <>
inline hid_t native_type<double>() { return H5T_NATIVE_DOUBLE; }

template <typename T>
hid_t file_type();
template <>
inline hid_t file_type<std::uint8_t>() { return H5T_STD_U8LE; }
template <>
inline hid_t file_type<std::int64_t>() { return H5T_STD_I64LE; }
template <>
inline hid_t file_type<float>() { return H5T_IEEE_F32LE; }
template <>
inline hid_t file_type<double>() { return H5T_IEEE_F64LE; }

} // namespace detail

class Container
{
public:
  static Container create(std::string const &path)
  {
    detail::silence_hdf5();
    Container c;
    c.path_ = path;
    c.file_ = detail::Handle(
        H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose, "cannot create " + path);
    return c;
  }

  static Container open(std::string const &path, bool writable = false)
  {
    detail::silence_hdf5();
    Container c;
    c.path_ = path;
    c.file_ = detail::Handle(
        H5Fopen(path.c_str(), writable ? H5F_ACC_RDWR : H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose,
        "cannot open " + path + " as an array container");
    return c;
  }

  std::string const &path() const { return path_; }

  bool contains(std::string const &name) const
  {
    // check each path component so missing groups do not raise
    std::size_t pos = 0;
    while (true) {
      pos = name.find('/', pos + 1);
      std::string const part = name.substr(0, pos);
      if (H5Lexists(file_.get(), part.c_str(), H5P_DEFAULT) <= 0) {
        return false;
      }
      if (pos == std::string::npos) {
        return true;
      }
    }
  }

  // Top-level entries in name order.
  std::vector<std::string> names() const
  {
    std::vector<std::string> out;
    hsize_t idx = 0;
    detail::check(H5Literate(file_.get(), H5_INDEX_NAME, H5_ITER_INC, &idx,
                             [](hid_t, char const *name, H5L_info_t const *, void *data) -> herr_t {
                               static_cast<std::vector<std::string> *>(data)->emplace_back(name);
                               return 0;
                             },
                             &out),
                  "cannot list " + path_);
    return out;
  }

  std::vector<Index> dims(std::string const &name) const
  {
    auto const ds = open_dataset(name);
    detail::Handle const space(H5Dget_space(ds.get()), H5Sclose, "bad dataspace for " + name);
    int const rank = H5Sget_simple_extent_ndims(space.get());
    std::vector<hsize_t> d(static_cast<std::size_t>(std::max(rank, 0)));
    H5Sget_simple_extent_dims(space.get(), d.data(), nullptr);
    return {d.begin(), d.end()};
  }

  template <typename T>
  void write_raw(std::string const &name, std::vector<Index> const &dims, T const *data)
  {
    if (contains(name)) {
      detail::check(H5Ldelete(file_.get(), name.c_str(), H5P_DEFAULT), "cannot replace " + name);
    }
    std::vector<hsize_t> d(dims.begin(), dims.end());
    detail::Handle const space(H5Screate_simple(static_cast<int>(d.size()), d.data(), nullptr), H5Sclose,
                               "cannot describe " + name);
    detail::Handle const lcpl(H5Pcreate(H5P_LINK_CREATE), H5Pclose, "property list");
    H5Pset_create_intermediate_group(lcpl.get(), 1);
    detail::Handle const ds(H5Dcreate2(file_.get(), name.c_str(), detail::file_type<T>(), space.get(), lcpl.get(),
                                       H5P_DEFAULT, H5P_DEFAULT),
                            H5Dclose, "cannot create dataset " + name + " in " + path_);
    detail::check(H5Dwrite(ds.get(), detail::native_type<T>(), H5S_ALL, H5S_ALL, H5P_DEFAULT, data),
                  "cannot write " + name);
  }

  // Reads with conversion to T.
  template <typename T>
  std::vector<T> read_raw(std::string const &name, std::vector<Index> &dims_out) const
  {
    auto const ds = open_dataset(name);
    dims_out = dims(name);
    Index n = 1;
    for (Index d : dims_out) {
      n *= d;
    }
    std::vector<T> out(static_cast<std::size_t>(n));
    detail::Handle const type(H5Dget_type(ds.get()), H5Tclose, "bad type for " + name);
    if (H5Tget_class(type.get()) == H5T_STRING) {
      throw IoError(name + " holds text, not numbers");
    }
    detail::check(H5Dread(ds.get(), detail::native_type<T>(), H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data()),
                  "cannot read " + name);
    return out;
  }

  template <typename S, int R>
  void write_complex(std::string const &name, Tensor<Cx<S>, R> const &t)
  {
    std::vector<float> buf(static_cast<std::size_t>(2 * t.size()));
    for (Index i = 0; i < t.size(); i++) {
      buf[static_cast<std::size_t>(2 * i)] = static_cast<float>(t.data()[i].real());
      buf[static_cast<std::size_t>(2 * i + 1)] = static_cast<float>(t.data()[i].imag());
    }
    std::vector<Index> d(t.dimensions().begin(), t.dimensions().end());
    d.push_back(2);
    write_raw(name, d, buf.data());
  }

  template <int R>
  Tensor<Cx<double>, R> read_complex(std::string const &name) const
  {
    std::vector<Index> d;
    auto const buf = read_raw<double>(name, d);
    if (static_cast<int>(d.size()) != R + 1 || d.back() != 2) {
      throw IoError(name + " in " + path_ + " is not a complex array of rank " + std::to_string(R));
    }
    std::array<Index, R> dims;
    std::copy_n(d.begin(), R, dims.begin());
    Tensor<Cx<double>, R> t(dims);
    for (Index i = 0; i < t.size(); i++) {
      t.data()[i] = {buf[static_cast<std::size_t>(2 * i)], buf[static_cast<std::size_t>(2 * i + 1)]};
    }
    return t;
  }

  template <typename T, int R>
  void write_tensor(std::string const &name, Tensor<T, R> const &t)
  {
    std::vector<Index> d(t.dimensions().begin(), t.dimensions().end());
    write_raw(name, d, t.data());
  }

  template <typename T, int R>
  Tensor<T, R> read_tensor(std::string const &name) const
  {
    std::vector<Index> d;
    auto const buf = read_raw<T>(name, d);
    if (static_cast<int>(d.size()) != R) {
      throw IoError(name + " in " + path_ + " has rank " + std::to_string(d.size()) + ", expected " +
                    std::to_string(R));
    }
    std::array<Index, R> dims;
    std::copy_n(d.begin(), R, dims.begin());
    Tensor<T, R> t(dims);
    std::copy(buf.begin(), buf.end(), t.data());
    return t;
  }

  void write_vector(std::string const &name, std::vector<double> const &v)
  {
    write_raw(name, {static_cast<Index>(v.size())}, v.data());
  }

  std::vector<double> read_vector(std::string const &name) const
  {
    std::vector<Index> d;
    auto v = read_raw<double>(name, d);
    if (d.size() != 1) {
      throw IoError(name + " in " + path_ + " is not a vector");
    }
    return v;
  }

  void write_text(std::string const &name, std::string const &text)
  {
    if (contains(name)) {
      detail::check(H5Ldelete(file_.get(), name.c_str(), H5P_DEFAULT), "cannot replace " + name);
    }
    detail::Handle const type(H5Tcopy(H5T_C_S1), H5Tclose, "string type");
    detail::check(H5Tset_size(type.get(), std::max<std::size_t>(text.size(), 1)), "string size");
    detail::Handle const space(H5Screate(H5S_SCALAR), H5Sclose, "scalar space");
    detail::Handle const lcpl(H5Pcreate(H5P_LINK_CREATE), H5Pclose, "property list");
    H5Pset_create_intermediate_group(lcpl.get(), 1);
    detail::Handle const ds(
        H5Dcreate2(file_.get(), name.c_str(), type.get(), space.get(), lcpl.get(), H5P_DEFAULT, H5P_DEFAULT),
        H5Dclose, "cannot create text entry " + name);
    std::string padded = text.empty() ? std::string(1, '\0') : text;
    detail::check(H5Dwrite(ds.get(), type.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT, padded.data()),
                  "cannot write " + name);
  }

  std::string read_text(std::string const &name) const
  {
    auto const ds = open_dataset(name);
    detail::Handle const type(H5Dget_type(ds.get()), H5Tclose, "bad type for " + name);
    if (H5Tget_class(type.get()) != H5T_STRING) {
      throw IoError(name + " in " + path_ + " is not text");
    }
    std::size_t const n = H5Tget_size(type.get());
    std::string s(n, '\0');
    detail::check(H5Dread(ds.get(), type.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT, s.data()), "cannot read " + name);
    auto const end = s.find('\0');
    if (end != std::string::npos) {
      s.resize(end);
    }
    return s;
  }

private:
  detail::Handle open_dataset(std::string const &name) const
  {
    if (!contains(name)) {
      throw IoError("entry '" + name + "' not found in " + path_);
    }
    return detail::Handle(H5Dopen2(file_.get(), name.c_str(), H5P_DEFAULT), H5Dclose,
                          "'" + name + "' in " + path_ + " is not a dataset");
  }

  std::string path_;
  detail::Handle file_;
};

} // namespace subzero::io
