#ifndef SIMPSONWF_CLI_OUTPUT_HPP
#define SIMPSONWF_CLI_OUTPUT_HPP

// CSV tables, gnuplot scripts and run metadata.

#include "simpsonwf/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace simpsonwf::cli {

/// Shortest text that keeps 17 significant digits ('.' decimal separator).
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Column table with a header row. Cells are numbers or short strings.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable &row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable &operator<<(double v) {
    rows_.back().push_back(format_number(v));
    return *this;
  }
  CsvTable &operator<<(const std::string &v) {
    rows_.back().push_back(v);
    return *this;
  }
  CsvTable &operator<<(const char *v) { return *this << std::string(v); }

  const std::vector<std::string> &header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string> &cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto &r : rows_) line(r);
    return out;
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
inline std::string git_blob_digest(const std::string &content) {
  const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, head.data(), head.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorKind::numerical_domain, "SHA-1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// One plotted series: columns of a CSV, optionally filtered on a key column.
struct PlotSeries {
  PlotSeries(std::string csv_, int x, int y, std::string title_, int fcol = 0, std::string fvalue = {},
             std::string style_ = "lines")
      : csv(std::move(csv_)), x_col(x), y_col(y), title(std::move(title_)), filter_col(fcol),
        filter_value(std::move(fvalue)), style(std::move(style_)) {}

  std::string csv;
  int x_col = 1;
  int y_col = 2;
  std::string title;
  int filter_col = 0; ///< 1-based column holding a label; 0 = no filter
  std::string filter_value;
  std::string style = "lines";
};

/// Writes files into one output directory and records their digests.
class OutputDir {
public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::config, "cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  const std::filesystem::path &path() const noexcept { return dir_; }

  void write(const std::string &name, const std::string &content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::config, "cannot write '" + (dir_ / name).string() + "'");
    out << content;
    digests_[name] = git_blob_digest(content);
  }

  void write_csv(const std::string &name, const CsvTable &table) { write(name, table.str()); }

  /// Gnuplot script drawing the given series; the CSVs are referenced by
  /// relative path, so run it from the output directory.
  void write_plot(const std::string &name, const std::string &title, const std::string &xlabel,
                  const std::string &ylabel, const std::vector<PlotSeries> &series) {
    std::ostringstream gp;
    gp << "set datafile separator ','\n"
       << "set key outside right\n"
       << "set title '" << title << "'\n"
       << "set xlabel '" << xlabel << "'\n"
       << "set ylabel '" << ylabel << "'\n"
       << "set terminal pngcairo size 900,600\n"
       << "set output '" << std::filesystem::path(name).replace_extension(".png").string() << "'\n"
       << "plot ";
    for (std::size_t i = 0; i < series.size(); ++i) {
      const auto &s = series[i];
      if (i) gp << ", \\\n     ";
      gp << "'" << s.csv << "' every ::1 using " << s.x_col << ":";
      if (s.filter_col)
        gp << "(strcol(" << s.filter_col << ") eq '" << s.filter_value << "' ? $" << s.y_col << " : 1/0)";
      else
        gp << s.y_col;
      gp << " with " << s.style << " title '" << s.title << "'";
    }
    gp << "\n";
    write(name, gp.str());
  }

  const std::map<std::string, std::string> &digests() const noexcept { return digests_; }

private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> digests_;
};

} // namespace simpsonwf::cli

#endif // SIMPSONWF_CLI_OUTPUT_HPP
