#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "voxseg/geometry.hpp"
#include "voxseg/image.hpp"

namespace voxseg {

struct ClassTaxonomy {
    std::vector<std::pair<std::uint8_t, std::string>> classes;

    std::size_t size() const { return classes.size(); }

    void validate() const {
        if (classes.size() > 15) throw std::invalid_argument("taxonomy limited to 15 classes");
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i].first != i) throw std::invalid_argument("class ids must be dense 0..K-1");
            if (classes[i].first == kVoidLabel) throw std::invalid_argument("255 is reserved for void");
            for (std::size_t j = 0; j < i; ++j)
                if (classes[j].second == classes[i].second)
                    throw std::invalid_argument("duplicate class name: " + classes[i].second);
        }
    }

    std::uint8_t id_of(const std::string& name) const {
        for (const auto& [id, n] : classes)
            if (n == name) return id;
        throw std::out_of_range("unknown class name: " + name);
    }
    const std::string& name_of(std::uint8_t id) const {
        if (id >= classes.size()) throw std::out_of_range("unknown class id");
        return classes[id].second;
    }
    bool contains(std::uint8_t id) const { return id < classes.size(); }
};

// The 5 classes used by all desk-scale experiments.
inline ClassTaxonomy default_taxonomy() {
    ClassTaxonomy tax;
    tax.classes = {{0, "floor"}, {1, "ceiling"}, {2, "wall"}, {3, "table"}, {4, "chair"}};
    return tax;
}

struct Triangle {
    int a = 0, b = 0, c = 0;
};

struct Mesh {
    std::vector<Vec3> vertices; // meters, world frame
    std::vector<Triangle> triangles;
    std::string object_name;

    Aabb bounds() const {
        Aabb box;
        for (const auto& v : vertices) box.extend(v);
        return box;
    }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

struct Scene {
    std::vector<Mesh> meshes;
    std::vector<std::uint8_t> labels; // per-mesh class id
    Aabb bounds;

    void recompute_bounds() {
        bounds = Aabb{};
        for (const auto& m : meshes)
            for (const auto& v : m.vertices) bounds.extend(v);
    }

    void validate(const ClassTaxonomy& tax) const {
        if (labels.size() != meshes.size())
            throw std::invalid_argument("scene needs one label per mesh");
        for (std::uint8_t id : labels)
            if (!tax.contains(id)) throw std::invalid_argument("scene label outside taxonomy");
        for (const auto& m : meshes)
            for (const auto& t : m.triangles)
                if (t.a < 0 || t.b < 0 || t.c < 0 ||
                    t.a >= (int)m.vertices.size() || t.b >= (int)m.vertices.size() ||
                    t.c >= (int)m.vertices.size())
                    throw std::invalid_argument("triangle index out of range");
    }

    std::size_t triangle_count() const {
        std::size_t n = 0;
        for (const auto& m : meshes) n += m.triangles.size();
        return n;
    }
};

struct ObjParseError : std::runtime_error {
    ObjParseError(int line, const std::string& what)
        : std::runtime_error("OBJ line " + std::to_string(line) + ": " + what), line_number(line) {}
    int line_number;
};

struct ObjParseStats {
    int degenerate_dropped = 0;
};

namespace detail {

// Resolves an OBJ index (1-based, or negative = relative to end) against the
// global vertex list.
inline int resolve_obj_index(int raw, int vertex_count, int line) {
    int idx = raw > 0 ? raw - 1 : vertex_count + raw;
    if (raw == 0 || idx < 0 || idx >= vertex_count)
        throw ObjParseError(line, "face index out of range: " + std::to_string(raw));
    return idx;
}

} // namespace detail

// Supported records: v, vn, f, o, g, usemtl. Normals are parsed and discarded;
// geometry-derived normals are used downstream. Polygon faces are fan
// triangulated. Faces with area <= 1e-12 m^2 are dropped and counted.
inline std::vector<Mesh> parse_obj(std::istream& in, ObjParseStats* stats = nullptr) {
    std::vector<Vec3> all_vertices;
    std::vector<Mesh> meshes;
    std::string current_name = "default";
    std::vector<Triangle> current_tris; // indices into all_vertices
    int dropped = 0;

    auto flush = [&] {
        if (!current_tris.empty()) {
            // Compact referenced vertices, keeping them in file order.
            std::map<int, int> remap; // ordered: ascending global index
            for (const auto& t : current_tris)
                for (int gi : {t.a, t.b, t.c}) remap.emplace(gi, 0);
            Mesh out;
            out.object_name = current_name;
            for (auto& [gi, local] : remap) {
                local = (int)out.vertices.size();
                out.vertices.push_back(all_vertices[gi]);
            }
            for (const auto& t : current_tris)
                out.triangles.push_back(Triangle{remap[t.a], remap[t.b], remap[t.c]});
            meshes.push_back(std::move(out));
        }
        current_tris.clear();
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw ObjParseError(line_no, "non-numeric vertex coordinate");
            all_vertices.push_back(p);
        } else if (tag == "vn" || tag == "vt" || tag == "usemtl" || tag == "mtllib" ||
                   tag == "s") {
            // accepted, ignored
        } else if (tag == "o" || tag == "g") {
            flush();
            std::string name;
            ls >> name;
            current_name = name.empty() ? "default" : name;
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                // v, v/vt, v//vn, v/vt/vn — only the vertex index matters here
                std::size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                int raw = 0;
                try {
                    std::size_t used = 0;
                    raw = std::stoi(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    throw ObjParseError(line_no, "bad face index token: " + tok);
                }
                idx.push_back(detail::resolve_obj_index(raw, (int)all_vertices.size(), line_no));
            }
            if (idx.size() < 3) throw ObjParseError(line_no, "face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
                const Vec3 &a = all_vertices[idx[0]], &b = all_vertices[idx[k]],
                           &c = all_vertices[idx[k + 1]];
                if (triangle_area(a, b, c) <= 1e-12) {
                    ++dropped;
                    continue;
                }
                current_tris.push_back(Triangle{idx[0], (int)idx[k], (int)idx[k + 1]});
            }
        }
        // unknown tags are skipped
    }
    flush();
    if (stats) stats->degenerate_dropped = dropped;
    return meshes;
}

inline std::vector<Mesh> parse_obj(const std::string& text, ObjParseStats* stats = nullptr) {
    std::istringstream in(text);
    return parse_obj(in, stats);
}

inline void serialize_obj(const std::vector<Mesh>& meshes, std::ostream& out) {
    char buf[128];
    int base = 1;
    for (const auto& m : meshes) {
        out << "o " << m.object_name << "\n";
        for (const auto& v : m.vertices) {
            std::snprintf(buf, sizeof(buf), "v %.9f %.9f %.9f\n", v.x(), v.y(), v.z());
            out << buf;
        }
        for (const auto& t : m.triangles)
            out << "f " << base + t.a << ' ' << base + t.b << ' ' << base + t.c << "\n";
        base += (int)m.vertices.size();
    }
}

// annotation_map: object_name -> class name, externalized to a sidecar file.
inline Scene attach_labels(std::vector<Mesh> meshes,
                           const std::map<std::string, std::string>& annotation_map,
                           const ClassTaxonomy& taxonomy) {
    Scene scene;
    for (auto& mesh : meshes) {
        auto it = annotation_map.find(mesh.object_name);
        if (it == annotation_map.end())
            throw std::runtime_error("unmapped object name: " + mesh.object_name);
        scene.labels.push_back(taxonomy.id_of(it->second));
        scene.meshes.push_back(std::move(mesh));
    }
    scene.recompute_bounds();
    return scene;
}

// Sidecar formats: one `object_name<TAB>class_name` per line; taxonomy file is
// `id<TAB>name` lines.
inline std::map<std::string, std::string> parse_annotation_sidecar(std::istream& in) {
    std::map<std::string, std::string> map;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("annotation line " + std::to_string(line_no) + ": missing tab");
        map[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return map;
}

inline void write_annotation_sidecar(const std::map<std::string, std::string>& map,
                                     std::ostream& out) {
    for (const auto& [name, cls] : map) out << name << '\t' << cls << "\n";
}

inline ClassTaxonomy parse_taxonomy(std::istream& in) {
    ClassTaxonomy tax;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("taxonomy line missing tab");
        tax.classes.emplace_back((std::uint8_t)std::stoi(line.substr(0, tab)), line.substr(tab + 1));
    }
    tax.validate();
    return tax;
}

inline void write_taxonomy(const ClassTaxonomy& tax, std::ostream& out) {
    for (const auto& [id, name] : tax.classes) out << (int)id << '\t' << name << "\n";
}

} // namespace voxseg
