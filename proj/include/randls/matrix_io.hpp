#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "randls/errors.hpp"
#include "randls/matrix.hpp"

namespace randls {

enum class MatrixFormat { Csv, Binary };

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64_le(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ParseError("truncated header in " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

/// Shortest decimal form that round-trips an IEEE-754 double (17 significant
/// digits is always enough).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_matrix_csv(const Matrix& m, std::ostream& os) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            os << detail::format_double(m(i, j));
        }
        os << '\n';
    }
}

inline Matrix read_matrix_csv(std::istream& is, const std::string& path = "<stream>") {
    std::vector<double> entries;
    std::string line;
    Index cols = -1;
    Index rows = 0;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && is.peek() == EOF && cols >= 0) break; // trailing newline
        Index row_cols = 0;
        std::size_t pos = 0;
        while (true) {
            std::size_t comma = line.find(',', pos);
            std::string tok = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            std::size_t consumed = 0;
            double value = 0.0;
            try {
                value = std::stod(tok, &consumed);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": non-numeric token '" + tok + "'", lineno);
            }
            while (consumed < tok.size() && std::isspace(static_cast<unsigned char>(tok[consumed]))) ++consumed;
            if (consumed != tok.size())
                throw ParseError(path + ":" + std::to_string(lineno) + ": non-numeric token '" + tok + "'", lineno);
            entries.push_back(value);
            ++row_cols;
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cols < 0) {
            cols = row_cols;
        } else if (row_cols != cols) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                                 " columns, got " + std::to_string(row_cols),
                             lineno);
        }
        ++rows;
    }
    if (rows == 0) throw ParseError(path + ": empty matrix file");
    Matrix m(rows, cols);
    std::memcpy(m.data(), entries.data(), sizeof(double) * entries.size());
    return m;
}

/// Binary layout: two little-endian u64 dims, then row-major IEEE-754 doubles
/// (little-endian). Round-trips bit-for-bit.
inline void write_matrix_binary(const Matrix& m, std::ostream& os) {
    detail::put_u64_le(os, std::uint64_t(m.rows()));
    detail::put_u64_le(os, std::uint64_t(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
            double v = m(i, j);
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            detail::put_u64_le(os, bits);
        }
}

/// Reads exactly one matrix; composes when several follow each other in one
/// container stream.
inline Matrix read_matrix_binary(std::istream& is, const std::string& path = "<stream>") {
    const std::uint64_t rows = detail::get_u64_le(is, path);
    const std::uint64_t cols = detail::get_u64_le(is, path);
    if (rows == 0 || cols == 0) throw ParseError(path + ": zero dimension in header");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
            std::uint64_t bits = detail::get_u64_le(is, path);
            double v;
            std::memcpy(&v, &bits, 8);
            m(i, j) = v;
        }
    if (!is) throw ParseError(path + ": truncated matrix payload");
    return m;
}

inline void write_matrix(const Matrix& m, const std::string& path, MatrixFormat fmt) {
    std::ofstream os(path, fmt == MatrixFormat::Binary ? std::ios::binary : std::ios::out);
    if (!os) throw ParseError("cannot open " + path + " for writing");
    if (fmt == MatrixFormat::Binary)
        write_matrix_binary(m, os);
    else
        write_matrix_csv(m, os);
    os.flush();
    if (!os) throw ParseError("write failed for " + path);
}

inline Matrix read_matrix(const std::string& path, MatrixFormat fmt) {
    std::ifstream is(path, fmt == MatrixFormat::Binary ? std::ios::binary : std::ios::in);
    if (!is) throw ParseError("cannot open " + path);
    if (fmt == MatrixFormat::Csv) return read_matrix_csv(is, path);
    Matrix m = read_matrix_binary(is, path);
    is.peek();
    if (!is.eof()) throw ParseError(path + ": trailing bytes after matrix payload");
    return m;
}

} // namespace randls
