#include "sclslam/scancontext.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>

#include "sclslam/error.hpp"

namespace sclslam {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

void DescriptorParams::validate() const {
    if (num_rings < 1 || num_sectors < 2 || !(max_radius > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "descriptor params need num_rings >= 1, num_sectors >= 2, max_radius > 0");
    }
}

double DescriptorParams::sector_angle() const { return kTwoPi / num_sectors; }

Eigen::VectorXd ring_key(const Eigen::MatrixXd& matrix) {
    Eigen::VectorXd key(matrix.rows());
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        key(r) = static_cast<double>((matrix.row(r).array() != 0.0).count()) /
                 static_cast<double>(matrix.cols());
    }
    return key;
}

Descriptor descriptor_from_matrix(Eigen::MatrixXd matrix) {
    Descriptor d;
    d.ring_key = ring_key(matrix);
    d.matrix = std::move(matrix);
    return d;
}

Descriptor make_descriptor(const PointCloud& cloud, const DescriptorParams& params) {
    params.validate();
    const int rings = params.num_rings;
    const int sectors = params.num_sectors;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rings, sectors);
    for (const Vector3& p : cloud.points) {
        const double range = std::hypot(p.x(), p.y());
        if (!(range < params.max_radius)) continue;
        const int ring = std::min(rings - 1, static_cast<int>(std::floor(range / params.max_radius * rings)));
        const double azimuth = std::atan2(p.y(), p.x()) + kPi;
        const int sector = std::min(sectors - 1, static_cast<int>(std::floor(azimuth / kTwoPi * sectors)));
        const double height = std::max(0.0, p.z() + params.min_height_offset);
        m(ring, sector) = std::max(m(ring, sector), height);
    }
    return descriptor_from_matrix(std::move(m));
}

DescriptorMatch descriptor_distance(const Descriptor& a, const Descriptor& b) {
    if (a.matrix.rows() != b.matrix.rows() || a.matrix.cols() != b.matrix.cols()) {
        std::ostringstream msg;
        msg << a.matrix.rows() << "x" << a.matrix.cols() << " vs " << b.matrix.rows() << "x" << b.matrix.cols();
        throw Error(ErrorCode::kShapeMismatch, msg.str());
    }
    const Eigen::Index cols = a.matrix.cols();
    const Eigen::VectorXd na = a.matrix.colwise().norm().transpose();
    const Eigen::VectorXd nb = b.matrix.colwise().norm().transpose();

    DescriptorMatch best;
    bool have = false;
    for (Eigen::Index shift = 0; shift < cols; ++shift) {
        double sum = 0.0;
        int used = 0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            const Eigen::Index k = (j + shift) % cols;
            const bool za = na(j) == 0.0;
            const bool zb = nb(k) == 0.0;
            if (za && zb) continue;
            ++used;
            if (za || zb) continue;  // similarity 0
            sum += a.matrix.col(j).dot(b.matrix.col(k)) / (na(j) * nb(k));
        }
        // Two empty descriptors carry no evidence of a match.
        const double dist = used == 0 ? 1.0 : 1.0 - sum / used;
        if (!have || dist < best.distance) {
            best = {dist, static_cast<int>(shift)};
            have = true;
        }
    }
    return best;
}

Descriptor circshift(const Descriptor& d, int n) {
    const Eigen::Index cols = d.matrix.cols();
    Eigen::MatrixXd out(d.matrix.rows(), cols);
    const Eigen::Index s = ((n % cols) + cols) % cols;
    for (Eigen::Index j = 0; j < cols; ++j) out.col((j + s) % cols) = d.matrix.col(j);
    return descriptor_from_matrix(std::move(out));
}

void ScanContextDatabase::add_keyframe(int id, Descriptor d) {
    std::unique_lock lock(mutex_);
    if (!ids_.empty()) {
        if (std::binary_search(ids_.begin(), ids_.end(), id)) {
            throw Error(ErrorCode::kDuplicateId, "keyframe id " + std::to_string(id) + " already stored");
        }
        if (id < ids_.back()) {
            throw Error(ErrorCode::kInvalidArgument, "keyframe ids must be strictly increasing");
        }
        const Descriptor& first = descriptors_.front();
        if (d.matrix.rows() != first.matrix.rows() || d.matrix.cols() != first.matrix.cols()) {
            throw Error(ErrorCode::kShapeMismatch, "descriptor shape differs from the database's");
        }
    }
    ids_.push_back(id);
    descriptors_.push_back(std::move(d));
}

std::size_t ScanContextDatabase::size() const {
    std::shared_lock lock(mutex_);
    return ids_.size();
}

std::size_t ScanContextDatabase::index_of(int id) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) {
        throw Error(ErrorCode::kUnknownId, "keyframe id " + std::to_string(id) + " not in database");
    }
    return static_cast<std::size_t>(it - ids_.begin());
}

const Descriptor& ScanContextDatabase::descriptor(int id) const {
    std::shared_lock lock(mutex_);
    return descriptors_[index_of(id)];
}

std::optional<LoopCandidate> ScanContextDatabase::detect_loop(int query_id) const {
    std::shared_lock lock(mutex_);
    if (ids_.empty()) return std::nullopt;
    const Descriptor& query = descriptors_[index_of(query_id)];

    // Exact K-nearest ring keys by linear scan; ties broken by id.
    std::vector<std::pair<double, std::size_t>> near;
    const long last_allowed = static_cast<long>(query_id) - params_.exclusion_window;
    for (std::size_t i = 0; i < ids_.size() && ids_[i] <= last_allowed; ++i) {
        near.emplace_back((descriptors_[i].ring_key - query.ring_key).squaredNorm(), i);
    }
    if (near.empty()) return std::nullopt;
    const std::size_t k = std::min<std::size_t>(near.size(), std::max(0, params_.num_candidates));
    std::partial_sort(near.begin(), near.begin() + static_cast<long>(k), near.end());

    std::optional<LoopCandidate> best;
    for (std::size_t n = 0; n < k; ++n) {
        const std::size_t i = near[n].second;
        const DescriptorMatch m = descriptor_distance(descriptors_[i], query);
        const bool better = !best || m.distance < best->distance ||
                            (m.distance == best->distance && ids_[i] < best->matched_id);
        if (better) best = LoopCandidate{ids_[i], m.shift, m.distance};
    }
    if (best && best->distance <= params_.loop_threshold) return best;
    return std::nullopt;
}

void write_descriptor(const std::filesystem::path& path, const Descriptor& d) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    char buf[64];
    for (Eigen::Index r = 0; r < d.matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.matrix.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.6f", d.matrix(r, c));
            if (c > 0) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

Descriptor read_descriptor(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) {
            throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(rows.size() + 1) +
                                                    ": malformed descriptor value");
        }
        if (row.empty()) continue;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(ErrorCode::kParseError, path.string() + ": ragged descriptor rows");
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return descriptor_from_matrix(std::move(m));
}

}  // namespace sclslam
