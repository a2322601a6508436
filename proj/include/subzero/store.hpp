#pragma once

#include <sstream>

#include "config.hpp"
#include "io.hpp"
#include "phantom.hpp"

// Container layouts for scans, bases, masks, models and reconstructions.
namespace subzero::store {

using io::Container;

inline Tensor<double, 1> as_tensor(std::vector<double> const &v)
{
  Tensor<double, 1> t(static_cast<Index>(v.size()));
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

struct Scan
{
  KSpace<double> kspace;
  Sensitivities<double> sens;
  std::optional<Images<double>> x_true;
  std::optional<ParameterMaps> maps;
  EchoTiming timing;
};

inline void write_scan(Container &f, Scan const &s)
{
  f.write_complex("kspace", s.kspace);
  f.write_complex("sens", s.sens);
  if (s.x_true) f.write_complex("x_true", *s.x_true);
  if (s.maps) {
    f.write_tensor("m0", s.maps->m0);
    f.write_tensor("relax", s.maps->relax);
    f.write_tensor("support", s.maps->support);
  }
  f.write_vector("times", s.timing.times);
  f.write_text("model", to_string(s.timing.model));
}

inline Scan read_scan(Container const &f)
{
  Scan s;
  s.kspace = f.read_complex<4>("kspace");
  s.sens = f.read_complex<3>("sens");
  s.timing.times = f.read_vector("times");
  s.timing.model = signal_model_from_string(f.read_text("model"));
  s.timing.validate();
  if (f.contains("x_true")) s.x_true = f.read_complex<3>("x_true");
  if (f.contains("m0") && f.contains("relax") && f.contains("support")) {
    s.maps = ParameterMaps{f.read_tensor<double, 2>("m0"), f.read_tensor<double, 2>("relax"),
                           f.read_tensor<std::uint8_t, 2>("support"), s.timing.model};
  }
  if (s.kspace.dimension(3) != s.timing.size()) {
    throw IoError(f.path() + ": kspace has " + std::to_string(s.kspace.dimension(3)) + " echoes but " +
                  std::to_string(s.timing.size()) + " times");
  }
  return s;
}

struct BasisFile
{
  SubspaceBasis<double> basis;
  SignalDictionary dict;
};

inline void write_basis(Container &f, BasisFile const &b)
{
  Index const T = b.basis.echoes(), B = b.basis.rank();
  Tensor<Cx<double>, 2> phi(T, B);
  for (Index t = 0; t < T; t++) {
    for (Index k = 0; k < B; k++) {
      phi(t, k) = b.basis.phi(t, k);
    }
  }
  f.write_complex("phi", phi);
  Tensor<double, 2> atoms(b.dict.atoms.rows(), b.dict.atoms.cols());
  for (Index t = 0; t < atoms.dimension(0); t++) {
    for (Index k = 0; k < atoms.dimension(1); k++) {
      atoms(t, k) = b.dict.atoms(t, k);
    }
  }
  f.write_tensor("atoms", atoms);
  f.write_vector("times", b.dict.timing.times);
  f.write_vector("grid", b.dict.grid.values);
  f.write_text("model", to_string(b.dict.timing.model));
}

inline BasisFile read_basis(Container const &f)
{
  BasisFile b;
  auto const phi = f.read_complex<2>("phi");
  b.basis.phi.resize(phi.dimension(0), phi.dimension(1));
  for (Index t = 0; t < phi.dimension(0); t++) {
    for (Index k = 0; k < phi.dimension(1); k++) {
      b.basis.phi(t, k) = phi(t, k);
    }
  }
  auto const atoms = f.read_tensor<double, 2>("atoms");
  b.dict.atoms.resize(atoms.dimension(0), atoms.dimension(1));
  for (Index t = 0; t < atoms.dimension(0); t++) {
    for (Index k = 0; k < atoms.dimension(1); k++) {
      b.dict.atoms(t, k) = atoms(t, k);
    }
  }
  b.dict.timing.times = f.read_vector("times");
  b.dict.timing.model = signal_model_from_string(f.read_text("model"));
  b.dict.grid.values = f.read_vector("grid");
  if (b.dict.atoms.rows() != b.dict.timing.size() || b.dict.atoms.cols() != b.dict.grid.size() ||
      b.basis.echoes() != b.dict.timing.size()) {
    throw IoError(f.path() + ": basis, atoms, times and grid disagree in size");
  }
  return b;
}

inline void write_masks(Container &f, MaskSet const &s, SamplingConfig const &cfg)
{
  f.write_tensor("mask_omega", s.omega);
  f.write_tensor("mask_gamma", s.gamma);
  for (std::size_t k = 0; k < s.theta.size(); k++) {
    f.write_tensor("mask_theta_" + std::to_string(k), s.theta[k]);
    f.write_tensor("mask_lambda_" + std::to_string(k), s.lam[k]);
  }
  f.write_text("sampling", Json(cfg).dump());
}

inline MaskSet read_masks(Container const &f)
{
  MaskSet s;
  s.omega = f.read_tensor<std::uint8_t, 3>("mask_omega");
  if (f.contains("mask_gamma")) s.gamma = f.read_tensor<std::uint8_t, 3>("mask_gamma");
  for (std::size_t k = 0; f.contains("mask_theta_" + std::to_string(k)); k++) {
    s.theta.push_back(f.read_tensor<std::uint8_t, 3>("mask_theta_" + std::to_string(k)));
    s.lam.push_back(f.read_tensor<std::uint8_t, 3>("mask_lambda_" + std::to_string(k)));
  }
  return s;
}

inline std::optional<SamplingConfig> read_sampling(Container const &f)
{
  if (!f.contains("sampling")) return std::nullopt;
  try {
    return Json::parse(f.read_text("sampling")).get<SamplingConfig>();
  } catch (Json::exception const &e) {
    throw IoError(f.path() + ": bad sampling record: " + e.what());
  }
}

// Parameters live under params/<name>; their order is kept in param_names.
inline void write_model(Container &f, Model const &m, std::string const &method)
{
  std::string names;
  for (auto const &p : m.params.all()) {
    f.write_raw("params/" + p.name, p.shape.empty() ? std::vector<Index>{1} : p.shape, p.value.data());
    names += p.name + "\n";
  }
  f.write_text("param_names", names);
  f.write_text("config", Json(m.cfg).dump());
  f.write_text("method", method);
}

inline Model read_model(Container const &f, std::string *method = nullptr)
{
  Model m;
  try {
    m.cfg = Json::parse(f.read_text("config")).get<ModelConfig>();
  } catch (Json::exception const &e) {
    throw IoError(f.path() + ": bad model config: " + e.what());
  }
  std::istringstream names(f.read_text("param_names"));
  for (std::string name; std::getline(names, name);) {
    if (name.empty()) continue;
    std::vector<Index> dims;
    auto const v = f.read_raw<double>("params/" + name, dims);
    m.params.add(name, dims, Eigen::Map<ad::Vec const>(v.data(), static_cast<Index>(v.size())));
  }
  // a freshly initialised model defines the expected layout
  Model const ref = init_model(m.cfg, 0);
  if (ref.params.scalar_count() != m.params.scalar_count() || ref.params.size() != m.params.size()) {
    throw IoError(f.path() + ": parameters do not match the stored network config");
  }
  if (method) *method = f.contains("method") ? f.read_text("method") : "";
  return m;
}

inline void write_recon(Container &f, Images<double> const &x, std::string const &method)
{
  f.write_complex("recon", x);
  f.write_text("method", method);
}

} // namespace subzero::store
