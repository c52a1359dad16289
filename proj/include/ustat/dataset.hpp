#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "ustat/error.hpp"

namespace ustat {

// Immutable-after-construction table of (covariate vector, response) rows.
// Covariates are stored row-major for cache-friendly kernel evaluation.
class Dataset {
  public:
    Dataset() = default;
    Dataset(std::size_t n, std::size_t p) { resize(n, p); }

    void resize(std::size_t n, std::size_t p) {
        n_ = n;
        p_ = p;
        x_.assign(n * p, 0.0);
        y_.assign(n, 0.0);
    }

    std::size_t n_rows() const noexcept { return n_; }
    std::size_t n_features() const noexcept { return p_; }

    std::span<const double> x_row(std::size_t i) const noexcept {
        return {x_.data() + i * p_, p_};
    }
    std::span<double> x_row(std::size_t i) noexcept { return {x_.data() + i * p_, p_}; }
    double x_at(std::size_t i, std::size_t j) const noexcept { return x_[i * p_ + j]; }

    double y(std::size_t i) const noexcept { return y_[i]; }
    double& y(std::size_t i) noexcept { return y_[i]; }
    std::span<const double> y_all() const noexcept { return y_; }

    void validate() const {
        if (n_ == 0 || p_ == 0) throw InvalidArgsError("dataset must have n >= 1 and p >= 1");
        for (const double v : x_) {
            if (!std::isfinite(v)) throw InvalidArgsError("dataset covariates must be finite");
        }
        for (const double v : y_) {
            if (!std::isfinite(v)) throw InvalidArgsError("dataset responses must be finite");
        }
    }

  private:
    std::size_t n_ = 0, p_ = 0;
    std::vector<double> x_;
    std::vector<double> y_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline double parse_double_field(const std::string& field, std::size_t line_no) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) --end;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || begin == end) {
        throw InvalidArgsError("non-numeric CSV field at line " + std::to_string(line_no) + ": '" +
                               field + "'");
    }
    return value;
}

}  // namespace detail

// Reads the CSV contract: header x1,...,xp,y then one numeric row per line.
inline Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgsError("CSV missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header.back() != "y") {
        throw InvalidArgsError("CSV header must be x1,...,xp,y");
    }
    const std::size_t p = header.size() - 1;
    for (std::size_t j = 0; j < p; ++j) {
        if (header[j] != "x" + std::to_string(j + 1)) {
            throw InvalidArgsError("CSV header must be x1,...,xp,y");
        }
    }
    std::vector<double> xs;
    std::vector<double> ys;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != p + 1) {
            throw InvalidArgsError("ragged CSV row at line " + std::to_string(line_no));
        }
        for (std::size_t j = 0; j < p; ++j) {
            xs.push_back(detail::parse_double_field(fields[j], line_no));
        }
        ys.push_back(detail::parse_double_field(fields[p], line_no));
    }
    if (ys.empty()) throw InvalidArgsError("CSV contains no data rows");
    Dataset data(ys.size(), p);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        auto row = data.x_row(i);
        for (std::size_t j = 0; j < p; ++j) row[j] = xs[i * p + j];
        data.y(i) = ys[i];
    }
    data.validate();
    return data;
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    return read_dataset_csv(in);
}

}  // namespace ustat
