#pragma once

#include <Eigen/Core>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swflow/measures.hpp"

namespace swflow {

/// 17 significant digits: round-trip exact for 64-bit doubles, '.' decimal.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace io_detail {

inline bool parse_double(const std::string& token, double& out) {
    const char* begin = token.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    return end != begin && end && *end == '\0';
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        std::size_t a = field.find_first_not_of(" \t\r");
        std::size_t b = field.find_last_not_of(" \t\r");
        fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
    }
    return fields;
}

}  // namespace io_detail

/// Atoms loaded from a measure dump: coordinates plus an optional weight
/// column and cell volume (grid dumps carry both).
struct LoadedMeasure {
    MatrixXd points;
    VectorXd weights;       // empty -> uniform
    double cell_volume = 0; // 0 -> none recorded

    bool has_weights() const { return weights.size() > 0; }
    ParticleCloud as_cloud() const { return ParticleCloud(points); }
};

/// One row per atom, columns x_1..x_d[,weight]; grid dumps carry the cell
/// volume in a leading comment.
inline void write_measure_csv(const std::string& path, const MeasureView& m,
                              std::optional<double> cell_volume = std::nullopt) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_measure_csv: cannot open " + path);
    if (cell_volume) out << "# cell_volume = " << format_double(*cell_volume) << "\n";
    const Eigen::Index d = m.dimension();
    for (Eigen::Index c = 0; c < d; ++c) out << (c ? "," : "") << "x_" << (c + 1);
    if (!m.uniform()) out << ",weight";
    out << "\n";
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        for (Eigen::Index c = 0; c < d; ++c)
            out << (c ? "," : "") << format_double((*m.points)(i, c));
        if (!m.uniform()) out << "," << format_double((*m.weights)(i));
        out << "\n";
    }
}

inline LoadedMeasure read_measure_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_measure_csv: cannot open " + path);

    LoadedMeasure loaded;
    std::vector<std::vector<double>> rows;
    bool weight_column = false;
    bool header_seen = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string key = "cell_volume =";
            const auto pos = line.find(key);
            if (pos != std::string::npos)
                loaded.cell_volume = std::strtod(line.c_str() + pos + key.size(), nullptr);
            continue;
        }
        const auto fields = io_detail::split_csv(line);
        if (fields.empty()) continue;
        double probe;
        if (!io_detail::parse_double(fields[0], probe)) {
            if (header_seen)
                throw std::runtime_error("read_measure_csv: unexpected non-numeric row in " +
                                         path);
            header_seen = true;
            weight_column = !fields.empty() && fields.back() == "weight";
            continue;
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            double v;
            if (!io_detail::parse_double(f, v))
                throw std::runtime_error("read_measure_csv: bad number '" + f + "' in " + path);
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("read_measure_csv: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("read_measure_csv: no data rows in " + path);

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(rows.front().size());
    const Eigen::Index d = weight_column ? cols - 1 : cols;
    if (d < 1) throw std::runtime_error("read_measure_csv: no coordinate columns in " + path);
    loaded.points.resize(n, d);
    if (weight_column) loaded.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < d; ++c)
            loaded.points(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        if (weight_column)
            loaded.weights(i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    }
    return loaded;
}

}  // namespace swflow
