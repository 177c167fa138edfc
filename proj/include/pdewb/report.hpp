#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "pdewb/binary_io.hpp"
#include "pdewb/data.hpp"
#include "pdewb/metrics.hpp"

namespace pdewb {

inline constexpr std::array<std::string_view, 10> report_columns{
    "model", "task", "ood", "n_shot", "sigma", "mu_l2", "l_inf", "frmse_low", "frmse_mid", "frmse_high"};

/// Trailing columns written when per-cell provenance is requested.
inline constexpr std::array<std::string_view, 2> provenance_columns{"status", "cell_seed"};

/// One evaluated (model, task, ood, n_shot, sigma) cell.
struct ReportRow {
  std::string model;
  std::string task;
  std::string ood = "id";
  std::size_t n_shot = 0;
  double sigma = 0.0;
  MetricsReport metrics;
  std::string status = "ok";  // anything else names the failure
  std::uint64_t cell_seed = 0;

  nlohmann::json to_json() const {
    return {{"model", model},   {"task", task},           {"ood", ood},        {"n_shot", n_shot},
            {"sigma", sigma},   {"metrics", metrics.to_json()}, {"status", status}, {"cell_seed", cell_seed}};
  }

  static ReportRow from_json(const nlohmann::json& j) {
    ReportRow r;
    r.model = j.at("model").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.ood = j.at("ood").get<std::string>();
    r.n_shot = j.at("n_shot").get<std::size_t>();
    r.sigma = j.at("sigma").get<double>();
    r.metrics = MetricsReport::from_json(j.at("metrics"));
    r.status = j.at("status").get<std::string>();
    r.cell_seed = j.at("cell_seed").get<std::uint64_t>();
    return r;
  }

  /// Sort key: model, task, ood level (ID first), n_shot, sigma.
  auto key() const {
    int level = 99;
    try {
      level = static_cast<int>(parse_ood(ood));
    } catch (const ConfigError&) {
    }
    return std::make_tuple(model, task, level, ood, n_shot, sigma);
  }

  friend bool operator==(const ReportRow& a, const ReportRow& b) { return a.to_json() == b.to_json(); }
};

inline void sort_rows(std::vector<ReportRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.key() < b.key(); });
}

namespace detail {

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

} // namespace detail

/// CSV with the fixed column order, rows sorted by key.
inline std::string format_csv(std::vector<ReportRow> rows, bool with_provenance = false) {
  sort_rows(rows);
  std::string out;
  auto header = [&](auto cols) {
    for (auto c : cols) out += (out.empty() || out.back() == '\n' ? "" : ",") + std::string(c);
  };
  header(report_columns);
  if (with_provenance) {
    for (auto c : provenance_columns) out += "," + std::string(c);
  }
  out += "\n";
  for (const ReportRow& r : rows) {
    const MetricsReport& m = r.metrics;
    out += detail::csv_field(r.model) + "," + detail::csv_field(r.task) + "," + detail::csv_field(r.ood) + "," +
           std::to_string(r.n_shot) + "," + detail::format_real(r.sigma) + "," + detail::format_real(m.mu_l2) + "," +
           detail::format_real(m.l_inf) + "," + detail::format_real(m.frmse_low) + "," +
           detail::format_real(m.frmse_mid) + "," + detail::format_real(m.frmse_high);
    if (with_provenance) out += "," + detail::csv_field(r.status) + "," + std::to_string(r.cell_seed);
    out += "\n";
  }
  return out;
}

inline nlohmann::json rows_to_json(std::vector<ReportRow> rows) {
  sort_rows(rows);
  nlohmann::json arr = nlohmann::json::array();
  for (const ReportRow& r : rows) arr.push_back(r.to_json());
  return {{"columns", report_columns}, {"rows", arr}};
}

inline std::vector<ReportRow> rows_from_json(const nlohmann::json& j) {
  std::vector<ReportRow> rows;
  try {
    for (const auto& r : j.at("rows")) rows.push_back(ReportRow::from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  return rows;
}

enum class ReportFormat { Csv, Json };

inline void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path, ReportFormat fmt,
                        bool with_provenance = false) {
  write_file_atomic(path, fmt == ReportFormat::Csv ? format_csv(rows, with_provenance) : rows_to_json(rows).dump(2) + "\n");
}

inline std::vector<ReportRow> load_report_json(const std::filesystem::path& path) {
  try {
    return rows_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
}

/// File stem {model}-{task}-{ood}-{n}.
inline std::string report_stem(const ReportRow& r) {
  return r.model + "-" + r.task + "-" + r.ood + "-" + std::to_string(r.n_shot);
}

} // namespace pdewb
