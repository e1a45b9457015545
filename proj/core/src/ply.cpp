// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/ply.hpp"

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace pointfield::geo {

namespace {

struct Property {
    std::string type;
    std::string name;
    std::size_t byte_size = 0;  // 0 for list properties
    bool is_list = false;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

std::size_t scalar_size(const std::string& type) {
    if (type == "char" || type == "int8" || type == "uchar" || type == "uint8") {
        return 1;
    }
    if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") {
        return 2;
    }
    if (type == "int" || type == "int32" || type == "uint" || type == "uint32") {
        return 4;
    }
    if (type == "float" || type == "float32") {
        return 4;
    }
    if (type == "double" || type == "float64") {
        return 8;
    }
    return 0;
}

bool is_float_type(const std::string& type) {
    return type == "float" || type == "float32" || type == "double" || type == "float64";
}

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
    throw ParseError(cat(path, ": line ", line, ": ", what));
}

struct Header {
    bool binary = false;
    std::vector<Element> elements;
    std::size_t line_count = 0;  // lines consumed by the header
};

Header parse_header(std::istream& is, const std::string& path) {
    Header h;
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() {
        if (!std::getline(is, line)) {
            fail(path, line_no, "unexpected end of file inside header");
        }
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
    };

    next_line();
    if (line != "ply") {
        fail(path, line_no, "not a PLY file (missing 'ply' magic)");
    }
    bool have_format = false;
    while (true) {
        next_line();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
            continue;
        }
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii") {
                h.binary = false;
            } else if (fmt == "binary_little_endian") {
                h.binary = true;
            } else {
                fail(path, line_no, cat("unsupported format '", fmt, "'"));
            }
            have_format = true;
        } else if (keyword == "element") {
            Element e;
            if (!(ls >> e.name >> e.count)) {
                fail(path, line_no, "malformed element declaration");
            }
            h.elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (h.elements.empty()) {
                fail(path, line_no, "property before any element");
            }
            Property p;
            std::string first;
            ls >> first;
            if (first == "list") {
                std::string count_type, elem_type;
                if (!(ls >> count_type >> elem_type >> p.name)) {
                    fail(path, line_no, "malformed list property");
                }
                if (scalar_size(count_type) == 0 || scalar_size(elem_type) == 0) {
                    fail(path, line_no, cat("unsupported list property types '", count_type,
                                            " ", elem_type, "'"));
                }
                p.is_list = true;
            } else {
                p.type = first;
                p.byte_size = scalar_size(p.type);
                if (p.byte_size == 0) {
                    fail(path, line_no, cat("unsupported property type '", p.type, "'"));
                }
                if (!(ls >> p.name)) {
                    fail(path, line_no, "property missing a name");
                }
            }
            h.elements.back().properties.push_back(std::move(p));
        } else if (keyword == "end_header") {
            break;
        } else {
            fail(path, line_no, cat("unknown header keyword '", keyword, "'"));
        }
    }
    if (!have_format) {
        fail(path, line_no, "header missing a format declaration");
    }
    h.line_count = line_no;
    return h;
}

double read_binary_coord(std::istream& is, const Property& p, const std::string& path) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(p.byte_size));
    if (!is) {
        throw ParseError(cat(path, ": truncated vertex data at byte ",
                             static_cast<long long>(is.tellg())));
    }
    if (p.byte_size == 4) {
        float f;
        std::memcpy(&f, buf, 4);
        return static_cast<double>(f);
    }
    double d;
    std::memcpy(&d, buf, 8);
    return d;
}

}  // namespace

PointCloud load_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError(cat("cannot open PLY file: ", path));
    }
    Header h = parse_header(is, path);

    std::size_t vertex_idx = h.elements.size();
    for (std::size_t i = 0; i < h.elements.size(); ++i) {
        if (h.elements[i].name == "vertex") {
            vertex_idx = i;
            break;
        }
    }
    if (vertex_idx == h.elements.size()) {
        fail(path, h.line_count, "no vertex element");
    }
    const Element& vertex = h.elements[vertex_idx];

    // locate x/y/z and validate their types
    std::size_t coord_prop[3];
    const char* coord_names[3] = {"x", "y", "z"};
    for (int c = 0; c < 3; ++c) {
        coord_prop[c] = vertex.properties.size();
        for (std::size_t p = 0; p < vertex.properties.size(); ++p) {
            if (vertex.properties[p].name == coord_names[c]) {
                coord_prop[c] = p;
                break;
            }
        }
        if (coord_prop[c] == vertex.properties.size()) {
            fail(path, h.line_count, cat("vertex element lacks property '", coord_names[c], "'"));
        }
        const Property& p = vertex.properties[coord_prop[c]];
        if (p.is_list || !is_float_type(p.type)) {
            fail(path, h.line_count,
                 cat("vertex property '", coord_names[c], "' must be float32 or float64"));
        }
    }
    for (const Property& p : vertex.properties) {
        if (p.is_list) {
            fail(path, h.line_count, cat("unsupported list property '", p.name,
                                         "' in vertex element"));
        }
    }

    PointCloud cloud;
    cloud.points.resize(vertex.count);

    if (h.binary) {
        // elements before the vertex data have to be skipped byte-exactly
        for (std::size_t e = 0; e < vertex_idx; ++e) {
            std::size_t row = 0;
            for (const Property& p : h.elements[e].properties) {
                if (p.is_list) {
                    fail(path, h.line_count,
                         cat("cannot skip list property in element '", h.elements[e].name,
                             "' ahead of vertex data"));
                }
                row += p.byte_size;
            }
            is.seekg(static_cast<std::streamoff>(row * h.elements[e].count), std::ios::cur);
        }
        for (std::size_t v = 0; v < vertex.count; ++v) {
            Vec3 pt;
            for (std::size_t p = 0; p < vertex.properties.size(); ++p) {
                const Property& prop = vertex.properties[p];
                bool is_coord = false;
                for (int c = 0; c < 3; ++c) {
                    if (coord_prop[c] == p) {
                        pt[static_cast<std::size_t>(c)] = read_binary_coord(is, prop, path);
                        is_coord = true;
                        break;
                    }
                }
                if (!is_coord) {
                    is.seekg(static_cast<std::streamoff>(prop.byte_size), std::ios::cur);
                    if (!is) {
                        throw ParseError(cat(path, ": truncated vertex data at vertex ", v));
                    }
                }
            }
            if (!finite(pt)) {
                throw ParseError(cat(path, ": non-finite coordinate at vertex ", v));
            }
            cloud.points[v] = pt;
        }
    } else {
        std::size_t line_no = h.line_count;
        std::string line;
        // skip rows of any element declared before vertex (one row per line)
        for (std::size_t e = 0; e < vertex_idx; ++e) {
            for (std::size_t r = 0; r < h.elements[e].count; ++r) {
                if (!std::getline(is, line)) {
                    fail(path, line_no, cat("unexpected end of file in element '",
                                            h.elements[e].name, "'"));
                }
                ++line_no;
            }
        }
        for (std::size_t v = 0; v < vertex.count; ++v) {
            if (!std::getline(is, line)) {
                fail(path, line_no, cat("unexpected end of file at vertex ", v));
            }
            ++line_no;
            std::istringstream ls(line);
            Vec3 pt;
            std::string token;
            for (std::size_t p = 0; p < vertex.properties.size(); ++p) {
                if (!(ls >> token)) {
                    fail(path, line_no, cat("expected ", vertex.properties.size(),
                                            " numeric fields"));
                }
                char* end = nullptr;
                const double value = std::strtod(token.c_str(), &end);
                if (end == token.c_str() || *end != '\0') {
                    fail(path, line_no, cat("bad numeric field '", token, "'"));
                }
                for (int c = 0; c < 3; ++c) {
                    if (coord_prop[c] == p) {
                        pt[static_cast<std::size_t>(c)] = value;
                    }
                }
            }
            if (!finite(pt)) {
                fail(path, line_no, "non-finite coordinate");
            }
            cloud.points[v] = pt;
        }
    }
    return cloud;
}

void save_ply(const PointCloud& cloud, const std::string& path, PlyFormat format) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError(cat("cannot open PLY file for writing: ", path));
    }
    os << "ply\n";
    os << (format == PlyFormat::kAscii ? "format ascii 1.0\n"
                                       : "format binary_little_endian 1.0\n");
    os << "element vertex " << cloud.size() << "\n";
    os << "property double x\nproperty double y\nproperty double z\n";
    os << "end_header\n";
    if (format == PlyFormat::kAscii) {
        os << std::setprecision(17);
        for (const Vec3& p : cloud.points) {
            os << p.x << " " << p.y << " " << p.z << "\n";
        }
    } else {
        for (const Vec3& p : cloud.points) {
            double row[3] = {p.x, p.y, p.z};
            os.write(reinterpret_cast<const char*>(row), sizeof(row));
        }
    }
    if (!os) {
        throw IoError(cat("failed writing PLY file: ", path));
    }
}

}  // namespace pointfield::geo
