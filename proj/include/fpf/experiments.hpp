#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fpf/config.hpp"

namespace fpf {

// Reals are printed with 17 significant digits.
std::string format_real(double v);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    void end_row();

private:
    std::FILE* file_;
    std::size_t columns_;
    std::size_t in_row_ = 0;
};

// Column sets of every CSV produced by the experiments.
std::vector<std::string> filter_csv_header(int d);
std::vector<std::string> poc_csv_header();
std::vector<std::string> gain_csv_header(int d);
std::vector<std::string> bounds_csv_header();
std::vector<std::string> limit_csv_header(int d);
std::vector<std::string> lln_csv_header();

// Runs the experiment named in a validated configuration. Writes meta.json
// and the experiment's CSV and report files into `out_dir`; returns their
// names.
std::vector<std::string> run_experiment(const Json& config, const std::filesystem::path& out_dir);

// meta.json content: the resolved configuration plus version and the
// particle-count assumption flags.
Json make_meta(const Json& resolved);

} // namespace fpf
