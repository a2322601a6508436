#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "eval.hpp"
#include "trainer.hpp"

// Deterministic plot and table output: SVG charts, binary PGM montages and a
// plain-text metrics table. No timestamps, fixed number formatting.
namespace subzero::plots {

struct PlotInputs
{
  std::string label = "recon";
  EvalReport report;
  std::optional<Images<double>> recon;
  std::optional<Images<double>> ref;
  std::optional<RealMap> fitted_map;
  std::optional<RealMap> true_map;
};

inline std::string fmt(double v, int prec = 6)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline void write_file(std::filesystem::path const &p, std::string const &bytes)
{
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + p.string());
  }
  out << bytes;
  if (!out) {
    throw IoError("write failed for " + p.string());
  }
}

inline std::string metrics_table(std::vector<std::pair<std::string, EvalReport>> const &rows)
{
  require(!rows.empty(), "metrics table needs at least one report");
  std::size_t const T = rows.front().second.per_echo_rmse.size();
  std::ostringstream s;
  s << std::left << std::setw(16) << "method" << std::right << std::setw(12) << "mean_rmse" << std::setw(12)
    << "map_error";
  for (std::size_t t = 0; t < T; t++) {
    s << std::setw(11) << ("echo" + std::to_string(t + 1));
  }
  s << "\n";
  for (auto const &[label, r] : rows) {
    s << std::left << std::setw(16) << label << std::right << std::setw(12) << fmt(r.mean_rmse) << std::setw(12)
      << (r.map_error ? fmt(*r.map_error) : std::string("-"));
    for (double v : r.per_echo_rmse) {
      s << std::setw(11) << fmt(v);
    }
    s << "\n";
  }
  return s.str();
}

inline std::string rmse_bar_chart(std::string const &label, std::vector<double> const &rmse)
{
  double const W = 480, H = 300, left = 50, bottom = 40, top = 30;
  double const peak = rmse.empty() ? 1.0 : std::max(*std::max_element(rmse.begin(), rmse.end()), 1e-12);
  double const slot = (W - left - 10) / static_cast<double>(std::max<std::size_t>(rmse.size(), 1));
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(W, 0) << "\" height=\"" << fmt(H, 0) << "\">\n";
  s << "<text x=\"" << fmt(left, 0) << "\" y=\"20\" font-size=\"14\">" << label << " per-echo RMSE (max "
    << fmt(peak, 4) << ")</text>\n";
  s << "<line x1=\"" << fmt(left, 0) << "\" y1=\"" << fmt(H - bottom, 0) << "\" x2=\"" << fmt(W - 10, 0) << "\" y2=\""
    << fmt(H - bottom, 0) << "\" stroke=\"black\"/>\n";
  for (std::size_t t = 0; t < rmse.size(); t++) {
    double const h = (H - bottom - top) * rmse[t] / peak;
    double const x = left + slot * static_cast<double>(t) + 0.1 * slot;
    s << "<rect class=\"bar\" x=\"" << fmt(x, 2) << "\" y=\"" << fmt(H - bottom - h, 2) << "\" width=\""
      << fmt(0.8 * slot, 2) << "\" height=\"" << fmt(h, 2) << "\" fill=\"#c0392b\"/>\n";
    s << "<text x=\"" << fmt(x + 0.4 * slot, 2) << "\" y=\"" << fmt(H - bottom + 16, 0)
      << "\" font-size=\"11\" text-anchor=\"middle\">" << t + 1 << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

inline std::string training_curve(std::vector<LossReport> const &history)
{
  double const W = 480, H = 300, left = 50, bottom = 30, top = 30;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto const &r : history) {
    for (double v : {r.total, r.gamma_val}) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) hi = lo + 1;
  double const n = static_cast<double>(std::max<std::size_t>(history.size() - 1, 1));
  auto path = [&](auto get) {
    std::ostringstream p;
    for (std::size_t i = 0; i < history.size(); i++) {
      double const x = left + (W - left - 10) * static_cast<double>(i) / n;
      double const y = H - bottom - (H - bottom - top) * (get(history[i]) - lo) / (hi - lo);
      p << (i ? " L" : "M") << fmt(x, 2) << " " << fmt(y, 2);
    }
    return p.str();
  };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(W, 0) << "\" height=\"" << fmt(H, 0) << "\">\n";
  s << "<text x=\"" << fmt(left, 0) << "\" y=\"20\" font-size=\"14\">training loss (black), Gamma loss (red), range "
    << fmt(lo, 4) << " to " << fmt(hi, 4) << "</text>\n";
  s << "<path d=\"" << path([](LossReport const &r) { return r.total; }) << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<path d=\"" << path([](LossReport const &r) { return r.gamma_val; })
    << "\" fill=\"none\" stroke=\"#c0392b\"/>\n";
  s << "</svg>\n";
  return s.str();
}

// Binary PGM of a grey image given row-major values in [0, 1].
inline std::string pgm(Index rows, Index cols, std::vector<double> const &v)
{
  std::ostringstream s;
  s << "P5\n" << cols << " " << rows << "\n255\n";
  for (double x : v) {
    s.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(x, 0.0, 1.0)))));
  }
  return s.str();
}

// Rows: reference, reconstruction, 5x error; one column per echo. Each echo
// is scaled by the peak of its reference magnitude.
inline std::string montage(Images<double> const &recon, Images<double> const &ref)
{
  require(recon.dimensions() == ref.dimensions(), "montage: shape mismatch");
  Index const M = ref.dimension(0), N = ref.dimension(1), T = ref.dimension(2);
  std::vector<double> v(static_cast<std::size_t>(3 * M * T * N));
  for (Index t = 0; t < T; t++) {
    double peak = 0;
    for (Index m = 0; m < M; m++) {
      for (Index n = 0; n < N; n++) {
        peak = std::max(peak, std::abs(ref(m, n, t)));
      }
    }
    if (peak == 0) peak = 1;
    for (Index m = 0; m < M; m++) {
      for (Index n = 0; n < N; n++) {
        double const a = std::abs(ref(m, n, t)) / peak, b = std::abs(recon(m, n, t)) / peak;
        double const vals[3] = {a, b, 5.0 * std::abs(a - b)};
        for (Index k = 0; k < 3; k++) {
          v[static_cast<std::size_t>((k * M + m) * T * N + t * N + n)] = vals[k];
        }
      }
    }
  }
  return pgm(3 * M, T * N, v);
}

// Truth and fitted maps side by side on a shared scale.
inline std::string map_pair(RealMap const &fitted, RealMap const &truth)
{
  require(fitted.dimensions() == truth.dimensions(), "map_pair: shape mismatch");
  Index const M = truth.dimension(0), N = truth.dimension(1);
  double peak = 0;
  for (Index i = 0; i < truth.size(); i++) {
    peak = std::max({peak, truth.data()[i], fitted.data()[i]});
  }
  if (peak == 0) peak = 1;
  std::vector<double> v(static_cast<std::size_t>(M * 2 * N));
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      v[static_cast<std::size_t>(m * 2 * N + n)] = truth(m, n) / peak;
      v[static_cast<std::size_t>(m * 2 * N + N + n)] = fitted(m, n) / peak;
    }
  }
  return pgm(M, 2 * N, v);
}

// Writes the files that apply to the given inputs and returns their names.
inline std::vector<std::string> emit_plots(
    PlotInputs const &in, std::vector<LossReport> const &history, std::filesystem::path const &out_dir)
{
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }
  std::vector<std::string> written;
  auto emit = [&](std::string const &name, std::string const &bytes) {
    write_file(out_dir / name, bytes);
    written.push_back(name);
  };
  emit("metrics.txt", metrics_table({{in.label, in.report}}));
  emit("rmse_per_echo.svg", rmse_bar_chart(in.label, in.report.per_echo_rmse));
  if (in.recon && in.ref) emit("montage.pgm", montage(*in.recon, *in.ref));
  if (in.fitted_map && in.true_map) emit("relax_maps.pgm", map_pair(*in.fitted_map, *in.true_map));
  if (!history.empty()) emit("training_curve.svg", training_curve(history));
  return written;
}

} // namespace subzero::plots
