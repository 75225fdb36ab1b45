#include "sclslam/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "sclslam/error.hpp"

namespace sclslam {

static_assert(std::endian::native == std::endian::little,
              "binary PCD I/O assumes a little-endian host");

void PointCloud::append(const PointCloud& other) {
    const bool keep_intensity = (empty() || has_intensity()) && other.has_intensity();
    if (!keep_intensity) intensity.clear();
    points.insert(points.end(), other.points.begin(), other.points.end());
    if (keep_intensity) intensity.insert(intensity.end(), other.intensity.begin(), other.intensity.end());
}

std::size_t drop_nonfinite(PointCloud& cloud) {
    const bool with_i = cloud.has_intensity();
    std::size_t out = 0;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        if (!cloud.points[i].allFinite()) continue;
        cloud.points[out] = cloud.points[i];
        if (with_i) cloud.intensity[out] = cloud.intensity[i];
        ++out;
    }
    const std::size_t dropped = cloud.points.size() - out;
    cloud.points.resize(out);
    if (with_i) cloud.intensity.resize(out);
    return dropped;
}

PointCloud voxel_downsample(const PointCloud& cloud, double leaf) {
    if (!(leaf > 0.0) || !std::isfinite(leaf)) {
        throw Error(ErrorCode::kInvalidLeaf, "voxel leaf must be positive, got " + std::to_string(leaf));
    }
    struct Cell {
        Vector3 sum = Vector3::Zero();
        Vector3 lo = Vector3::Constant(std::numeric_limits<double>::infinity());
        Vector3 hi = Vector3::Constant(-std::numeric_limits<double>::infinity());
        double intensity = 0.0;
        std::size_t count = 0;
    };
    using Key = std::array<std::int64_t, 3>;
    std::map<Key, Cell> cells;
    const bool with_i = cloud.has_intensity();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vector3& p = cloud.points[i];
        const Key key{static_cast<std::int64_t>(std::floor(p.x() / leaf)),
                      static_cast<std::int64_t>(std::floor(p.y() / leaf)),
                      static_cast<std::int64_t>(std::floor(p.z() / leaf))};
        Cell& c = cells[key];
        c.sum += p;
        c.lo = c.lo.cwiseMin(p);
        c.hi = c.hi.cwiseMax(p);
        if (with_i) c.intensity += cloud.intensity[i];
        ++c.count;
    }
    PointCloud out;
    out.points.reserve(cells.size());
    for (const auto& [key, c] : cells) {
        const double n = static_cast<double>(c.count);
        // Clamp into the members' bounding box so rounding never moves the
        // centroid into a neighbouring voxel.
        const Vector3 centroid = (c.sum / n).cwiseMax(c.lo).cwiseMin(c.hi);
        out.points.push_back(centroid);
        if (with_i) out.intensity.push_back(static_cast<float>(c.intensity / n));
    }
    return out;
}

PointCloud transform_cloud(const Pose& pose, const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Vector3& p : cloud.points) out.points.push_back(transform_point(pose, p));
    out.intensity = cloud.intensity;
    return out;
}

PointCloud round_to_float(const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Vector3& p : cloud.points) {
        const float x = static_cast<float>(p.x()), y = static_cast<float>(p.y()), z = static_cast<float>(p.z());
        out.points.emplace_back(x, y, z);
    }
    out.intensity = cloud.intensity;
    return out;
}

namespace {

struct PcdField {
    std::string name;
    int size = 4;
    char type = 'F';
    int count = 1;
    std::size_t offset = 0;
};

// ASCII values take the precision of the declared field type.
double narrow(double v, bool single) { return single ? static_cast<double>(static_cast<float>(v)) : v; }

bool single_precision(const PcdField& f) { return f.type == 'F' && f.size == 4; }

struct PcdHeader {
    std::vector<PcdField> fields;
    std::size_t points = 0;
    std::string data;
    std::size_t record_size = 0;
};

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": " << what;
    throw Error(ErrorCode::kParseError, msg.str());
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double parse_number(const std::string& tok, bool* ok) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    *ok = end != begin && *end == '\0';
    return v;
}

double read_scalar(const unsigned char* p, const PcdField& f) {
    switch (f.type) {
        case 'F':
            if (f.size == 4) {
                float v;
                std::memcpy(&v, p, 4);
                return v;
            } else {
                double v;
                std::memcpy(&v, p, 8);
                return v;
            }
        case 'I':
            switch (f.size) {
                case 1: return static_cast<double>(*reinterpret_cast<const std::int8_t*>(p));
                case 2: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
                case 4: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
                default: { std::int64_t v; std::memcpy(&v, p, 8); return static_cast<double>(v); }
            }
        default:
            switch (f.size) {
                case 1: return static_cast<double>(*p);
                case 2: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
                case 4: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
                default: { std::uint64_t v; std::memcpy(&v, p, 8); return static_cast<double>(v); }
            }
    }
}

PointCloud read_pcd(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());

    PcdHeader h;
    std::vector<int> sizes;
    std::vector<char> types;
    std::vector<int> counts;
    std::size_t width = 0, height = 1;
    bool have_points = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        const std::string& key = tok[0];
        if (key == "VERSION" || key == "VIEWPOINT") continue;
        if (key == "FIELDS") {
            for (std::size_t i = 1; i < tok.size(); ++i) h.fields.push_back({tok[i]});
        } else if (key == "SIZE") {
            for (std::size_t i = 1; i < tok.size(); ++i) sizes.push_back(std::atoi(tok[i].c_str()));
        } else if (key == "TYPE") {
            for (std::size_t i = 1; i < tok.size(); ++i) types.push_back(tok[i].empty() ? '?' : tok[i][0]);
        } else if (key == "COUNT") {
            for (std::size_t i = 1; i < tok.size(); ++i) counts.push_back(std::atoi(tok[i].c_str()));
        } else if (key == "WIDTH" && tok.size() == 2) {
            width = std::strtoull(tok[1].c_str(), nullptr, 10);
        } else if (key == "HEIGHT" && tok.size() == 2) {
            height = std::strtoull(tok[1].c_str(), nullptr, 10);
        } else if (key == "POINTS" && tok.size() == 2) {
            h.points = std::strtoull(tok[1].c_str(), nullptr, 10);
            have_points = true;
        } else if (key == "DATA" && tok.size() == 2) {
            h.data = tok[1];
            break;
        } else {
            parse_fail(path, lineno, "unrecognized PCD header line '" + line + "'");
        }
    }
    if (h.data.empty()) parse_fail(path, lineno, "PCD header has no DATA line");
    if (h.fields.empty()) parse_fail(path, lineno, "PCD header is missing FIELDS before DATA");
    const std::size_t nf = h.fields.size();
    if (sizes.size() != nf) parse_fail(path, lineno, "SIZE entry count does not match FIELDS");
    if (types.size() != nf) parse_fail(path, lineno, "TYPE entry count does not match FIELDS");
    if (counts.empty()) counts.assign(nf, 1);
    if (counts.size() != nf) parse_fail(path, lineno, "COUNT entry count does not match FIELDS");
    if (!have_points) h.points = width * height;

    std::size_t offset = 0;
    for (std::size_t i = 0; i < nf; ++i) {
        PcdField& f = h.fields[i];
        f.size = sizes[i];
        f.type = types[i];
        f.count = counts[i];
        f.offset = offset;
        const bool valid = (f.type == 'F' && (f.size == 4 || f.size == 8)) ||
                           ((f.type == 'I' || f.type == 'U') &&
                            (f.size == 1 || f.size == 2 || f.size == 4 || f.size == 8));
        if (!valid || f.count < 1) {
            throw Error(ErrorCode::kUnsupportedFieldLayout,
                        path.string() + ": field '" + f.name + "' has unsupported type/size");
        }
        offset += static_cast<std::size_t>(f.size) * f.count;
    }
    h.record_size = offset;

    auto find = [&](const std::string& name) -> const PcdField* {
        for (const auto& f : h.fields) if (f.name == name) return &f;
        return nullptr;
    };
    const PcdField* fx = find("x");
    const PcdField* fy = find("y");
    const PcdField* fz = find("z");
    const PcdField* fi = find("intensity");
    if (!fx || !fy || !fz) {
        throw Error(ErrorCode::kUnsupportedFieldLayout, path.string() + ": PCD needs x, y and z fields");
    }

    PointCloud cloud;
    cloud.points.reserve(h.points);
    if (fi) cloud.intensity.reserve(h.points);

    if (h.data == "ascii") {
        // Token index of each field's first element.
        std::vector<std::size_t> token_of(nf);
        std::size_t ntok = 0;
        for (std::size_t i = 0; i < nf; ++i) {
            token_of[i] = ntok;
            ntok += h.fields[i].count;
        }
        auto index_of = [&](const PcdField* f) { return token_of[f - h.fields.data()]; };
        std::size_t read = 0;
        while (read < h.points && std::getline(in, line)) {
            ++lineno;
            const auto tok = split_ws(line);
            if (tok.empty()) continue;
            if (tok.size() != ntok) {
                parse_fail(path, lineno, "expected " + std::to_string(ntok) + " values, got " +
                                             std::to_string(tok.size()));
            }
            bool ok_x, ok_y, ok_z;
            const Vector3 p(narrow(parse_number(tok[index_of(fx)], &ok_x), single_precision(*fx)),
                            narrow(parse_number(tok[index_of(fy)], &ok_y), single_precision(*fy)),
                            narrow(parse_number(tok[index_of(fz)], &ok_z), single_precision(*fz)));
            if (!ok_x || !ok_y || !ok_z) parse_fail(path, lineno, "malformed number");
            if (fi) {
                bool ok_i;
                const double v = parse_number(tok[index_of(fi)], &ok_i);
                if (!ok_i) parse_fail(path, lineno, "malformed intensity");
                cloud.push_back(p, static_cast<float>(v));
            } else {
                cloud.push_back(p);
            }
            ++read;
        }
        if (read != h.points) {
            parse_fail(path, lineno, "expected " + std::to_string(h.points) + " points, found " +
                                         std::to_string(read));
        }
    } else if (h.data == "binary") {
        std::vector<unsigned char> buf(h.record_size * h.points);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
            throw Error(ErrorCode::kParseError, path.string() + ": binary payload truncated, expected " +
                                                    std::to_string(buf.size()) + " bytes");
        }
        for (std::size_t k = 0; k < h.points; ++k) {
            const unsigned char* rec = buf.data() + k * h.record_size;
            const Vector3 p(read_scalar(rec + fx->offset, *fx), read_scalar(rec + fy->offset, *fy),
                            read_scalar(rec + fz->offset, *fz));
            if (fi) {
                cloud.push_back(p, static_cast<float>(read_scalar(rec + fi->offset, *fi)));
            } else {
                cloud.push_back(p);
            }
        }
    } else {
        throw Error(ErrorCode::kUnsupportedFieldLayout, path.string() + ": DATA " + h.data + " is not supported");
    }
    return cloud;
}

PointCloud read_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) parse_fail(path, 1, "missing 'ply' magic");
    ++lineno;
    std::size_t vertices = 0;
    bool in_vertex = false;
    bool seen_vertex = false;
    bool ended = false;
    std::vector<std::string> props;
    std::vector<bool> prop_single;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tok = split_ws(line);
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() < 2 || tok[1] != "ascii") {
                throw Error(ErrorCode::kUnsupportedFieldLayout, path.string() + ": only ascii PLY is supported");
            }
        } else if (tok[0] == "element") {
            if (tok.size() != 3) parse_fail(path, lineno, "malformed element line");
            in_vertex = tok[1] == "vertex";
            if (in_vertex) {
                if (seen_vertex) parse_fail(path, lineno, "duplicate vertex element");
                vertices = std::strtoull(tok[2].c_str(), nullptr, 10);
                seen_vertex = true;
            }
        } else if (tok[0] == "property") {
            if (in_vertex) {
                if (tok.size() != 3) {
                    throw Error(ErrorCode::kUnsupportedFieldLayout, path.string() + ": list vertex property");
                }
                props.push_back(tok[2]);
                prop_single.push_back(tok[1] == "float" || tok[1] == "float32");
            }
        } else if (tok[0] == "end_header") {
            ended = true;
            break;
        } else {
            parse_fail(path, lineno, "unrecognized PLY header line '" + line + "'");
        }
    }
    if (!ended) parse_fail(path, lineno, "PLY header has no end_header");
    if (!seen_vertex) parse_fail(path, lineno, "PLY header has no vertex element");
    auto index = [&](const std::string& n) -> int {
        for (std::size_t i = 0; i < props.size(); ++i) if (props[i] == n) return static_cast<int>(i);
        return -1;
    };
    const int ix = index("x"), iy = index("y"), iz = index("z"), ii = index("intensity");
    if (ix < 0 || iy < 0 || iz < 0) {
        throw Error(ErrorCode::kUnsupportedFieldLayout, path.string() + ": PLY needs x, y and z properties");
    }
    PointCloud cloud;
    cloud.points.reserve(vertices);
    std::size_t read = 0;
    while (read < vertices && std::getline(in, line)) {
        ++lineno;
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != props.size()) parse_fail(path, lineno, "vertex value count does not match properties");
        bool ok[4] = {true, true, true, true};
        const Vector3 p(narrow(parse_number(tok[ix], &ok[0]), prop_single[ix]),
                        narrow(parse_number(tok[iy], &ok[1]), prop_single[iy]),
                        narrow(parse_number(tok[iz], &ok[2]), prop_single[iz]));
        if (ii >= 0) {
            const double v = parse_number(tok[ii], &ok[3]);
            cloud.push_back(p, static_cast<float>(v));
        } else {
            cloud.push_back(p);
        }
        if (!(ok[0] && ok[1] && ok[2] && ok[3])) parse_fail(path, lineno, "malformed number");
        ++read;
    }
    if (read != vertices) {
        parse_fail(path, lineno, "expected " + std::to_string(vertices) + " vertices, found " + std::to_string(read));
    }
    return cloud;
}

std::string format_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(v)));
    return buf;
}

}  // namespace

PointCloud read_cloud(const std::filesystem::path& path, std::size_t* dropped) {
    const std::string ext = path.extension().string();
    PointCloud cloud;
    if (ext == ".pcd") {
        cloud = read_pcd(path);
    } else if (ext == ".ply") {
        cloud = read_ply(path);
    } else {
        throw Error(ErrorCode::kUnsupportedFieldLayout, path.string() + ": unknown point cloud extension");
    }
    const std::size_t n = drop_nonfinite(cloud);
    if (dropped) *dropped = n;
    return cloud;
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud, CloudFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    const bool with_i = cloud.has_intensity();
    const std::size_t n = cloud.size();

    if (format == CloudFormat::kPlyAscii) {
        out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n"
            << "property float x\nproperty float y\nproperty float z\n";
        if (with_i) out << "property float intensity\n";
        out << "end_header\n";
        for (std::size_t i = 0; i < n; ++i) {
            const Vector3& p = cloud.points[i];
            out << format_float(p.x()) << ' ' << format_float(p.y()) << ' ' << format_float(p.z());
            if (with_i) out << ' ' << format_float(cloud.intensity[i]);
            out << '\n';
        }
    } else {
        out << "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n";
        out << (with_i ? "FIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n"
                       : "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n");
        out << "WIDTH " << n << "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS " << n << "\n";
        if (format == CloudFormat::kPcdAscii) {
            out << "DATA ascii\n";
            for (std::size_t i = 0; i < n; ++i) {
                const Vector3& p = cloud.points[i];
                out << format_float(p.x()) << ' ' << format_float(p.y()) << ' ' << format_float(p.z());
                if (with_i) out << ' ' << format_float(cloud.intensity[i]);
                out << '\n';
            }
        } else {
            out << "DATA binary\n";
            std::vector<float> rec;
            rec.reserve(n * (with_i ? 4 : 3));
            for (std::size_t i = 0; i < n; ++i) {
                const Vector3& p = cloud.points[i];
                rec.push_back(static_cast<float>(p.x()));
                rec.push_back(static_cast<float>(p.y()));
                rec.push_back(static_cast<float>(p.z()));
                if (with_i) rec.push_back(cloud.intensity[i]);
            }
            out.write(reinterpret_cast<const char*>(rec.data()),
                      static_cast<std::streamsize>(rec.size() * sizeof(float)));
        }
    }
    if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

}  // namespace sclslam
