#pragma once

#include "flowlab/estimators.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

namespace flowlab {

/// Shortest decimal that round-trips to the same double; "nan", "inf", "-inf"
/// for non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct ResultRow {
  std::string estimator;
  std::string system;
  std::string params_hash;
  double t = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  double h = 0.0;
  std::vector<std::string> flags;
};

inline constexpr const char* kResultHeader = "estimator,system,params_hash,t,value,std_error,n_paths,h,flags";

inline std::string format_row(const ResultRow& r) {
  std::string flags;
  for (const auto& f : r.flags) {
    if (!flags.empty()) flags += ';';
    flags += f;
  }
  return r.estimator + ',' + r.system + ',' + r.params_hash + ',' + format_double(r.t) + ',' +
         format_double(r.value) + ',' + format_double(r.std_error) + ',' + std::to_string(r.n_paths) + ',' +
         format_double(r.h) + ',' + flags;
}

/// Bookkeeping flags of a report, in a fixed order.
inline std::vector<std::string> report_flags(const EstimateReport& r) {
  std::vector<std::string> f;
  if (r.n_failed) f.push_back("failed=" + std::to_string(r.n_failed));
  if (r.n_exits) f.push_back("exits=" + std::to_string(r.n_exits));
  if (r.n_near_singular) f.push_back("near_singular=" + std::to_string(r.n_near_singular));
  if (r.n_clamped) f.push_back("clamped=" + std::to_string(r.n_clamped));
  if (r.window_exceeded) f.push_back("window_exceeded");
  if (r.unreliable) f.push_back("unreliable");
  return f;
}

/// Writes to a sibling temporary and renames, so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string render_csv(const std::vector<ResultRow>& rows) {
  std::string s = std::string(kResultHeader) + '\n';
  for (const auto& r : rows) s += format_row(r) + '\n';
  return s;
}

/// Trajectory dump: t,x1..xd,v1..vd,exploded,clamped. The last two columns
/// repeat the path-level flags on every row.
inline std::string render_trajectory(const Trajectory& traj) {
  const auto d = traj.x.empty() ? 0 : traj.x.front().size();
  std::string s = "t";
  for (Eigen::Index i = 1; i <= d; ++i) s += ",x" + std::to_string(i);
  for (Eigen::Index i = 1; i <= d; ++i) s += ",v" + std::to_string(i);
  s += ",exploded,clamped\n";
  for (std::size_t n = 0; n < traj.times.size(); ++n) {
    s += format_double(traj.times[n]);
    for (Eigen::Index i = 0; i < d; ++i) s += ',' + format_double(traj.x[n](i));
    for (Eigen::Index i = 0; i < d; ++i) s += ',' + format_double(traj.v[n](i));
    s += traj.exploded ? ",1," : ",0,";
    s += std::to_string(traj.clamped) + '\n';
  }
  return s;
}

}  // namespace flowlab
