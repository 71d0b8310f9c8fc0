#include "nf3d/cloud_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace nf3d {

namespace {

bool blank_or_comment(const std::string& line) {
    const auto pos = line.find_first_not_of(" \t\r");
    return pos == std::string::npos || line[pos] == '#';
}

} // namespace

PointCloud load_cloud(const std::filesystem::path& path,
                      const std::optional<std::filesystem::path>& landmark_path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cloud: cannot open '" + path.string() + "'");
    }

    std::vector<Eigen::Vector3d> rows;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (blank_or_comment(line)) continue;
        std::istringstream fields(line);
        Eigen::Vector3d p;
        std::string extra;
        if (!(fields >> p.x() >> p.y() >> p.z()) || (fields >> extra)) {
            throw DataError("cloud: malformed line " + std::to_string(line_number) +
                            " in '" + path.string() + "': expected three reals");
        }
        if (!p.allFinite()) {
            throw DataError("cloud: non-finite coordinate on line " +
                            std::to_string(line_number) + " in '" + path.string() + "'");
        }
        rows.push_back(p);
    }
    if (rows.empty()) {
        throw DataError("cloud: '" + path.string() + "' contains no points");
    }

    PointCloud cloud;
    cloud.points.resize(3, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        cloud.points.col(static_cast<Eigen::Index>(i)) = rows[i];
    }

    if (landmark_path) {
        std::ifstream lin(*landmark_path);
        if (!lin) {
            throw DataError("cloud: cannot open landmark file '" + landmark_path->string() + "'");
        }
        int lm_line = 0;
        while (std::getline(lin, line)) {
            ++lm_line;
            if (blank_or_comment(line)) continue;
            std::istringstream fields(line);
            long long idx = 0;
            std::string extra;
            if (!(fields >> idx) || (fields >> extra)) {
                throw DataError("cloud: malformed line " + std::to_string(lm_line) +
                                " in landmark file '" + landmark_path->string() +
                                "': expected one integer index");
            }
            cloud.landmark_indices.push_back(static_cast<Eigen::Index>(idx));
        }
        cloud.check_landmarks();
    }
    return cloud;
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cloud: cannot write '" + path.string() + "'");
    }
    char buf[128];
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", cloud.points(0, i),
                      cloud.points(1, i), cloud.points(2, i));
        out << buf;
    }
    if (!out) {
        throw DataError("cloud: write to '" + path.string() + "' failed");
    }
}

} // namespace nf3d
