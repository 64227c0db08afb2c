#pragma once

// Trajectory datasets with a bit-exact on-disk format.
//
// A dataset is a directory:
//   manifest.json   schema-versioned metadata, splits, normalization stats
//   graph.json      topology, mesh positions, base node types
//   traj_<id>.bin   raw little-endian IEEE-754 frames, layout
//                   index = ((t * n_nodes) + i) * d + c with channels
//                   [state..., velocity...] per node
//   static_<id>.bin per-trajectory static node attributes, n_nodes x static_dim
//
// Payload precision is set by the manifest dtype (float32 by default).

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "igns/graph.hpp"
#include "igns/matrix.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian; big-endian hosts unsupported");

namespace igns {

using json = nlohmann::json;

template <typename Real>
struct Trajectory {
    int frames = 0;  // horizon + 1
    int n_nodes = 0;
    int state_dim = 0;
    int velocity_dim = 0;
    double dt = 0;
    std::vector<Real> states;      // [frames][n_nodes][state_dim]
    std::vector<Real> velocities;  // [frames][n_nodes][velocity_dim]
    std::vector<double> node_static;  // [n_nodes][static_dim]

    Real state(int t, int i, int c) const {
        return states[(static_cast<size_t>(t) * n_nodes + i) * state_dim + c];
    }
    Real& state(int t, int i, int c) {
        return states[(static_cast<size_t>(t) * n_nodes + i) * state_dim + c];
    }
    Real velocity(int t, int i, int c) const {
        return velocities[(static_cast<size_t>(t) * n_nodes + i) * velocity_dim + c];
    }
    Real& velocity(int t, int i, int c) {
        return velocities[(static_cast<size_t>(t) * n_nodes + i) * velocity_dim + c];
    }

    Matrix<Real> state_frame(int t) const {
        Matrix<Real> m(n_nodes, state_dim);
        for (int i = 0; i < n_nodes; ++i)
            for (int c = 0; c < state_dim; ++c) m(i, c) = state(t, i, c);
        return m;
    }
    Matrix<Real> velocity_frame(int t) const {
        Matrix<Real> m(n_nodes, velocity_dim);
        for (int i = 0; i < n_nodes; ++i)
            for (int c = 0; c < velocity_dim; ++c) m(i, c) = velocity(t, i, c);
        return m;
    }
};

struct Normalization {
    std::vector<double> state_mean, state_std;
    std::vector<double> velocity_mean, velocity_std;
    std::vector<double> static_mean, static_std;
};

struct DatasetManifest {
    int format_version = 1;
    std::string name;
    int n_trajectories = 0;
    int horizon = 0;  // T; trajectories carry T+1 frames
    int window = 0;
    double dt = 0;
    int n_nodes = 0;
    int spatial_dim = 0;
    int state_dim = 0;
    int velocity_dim = 0;
    int static_dim = 0;
    std::vector<int> train_ids, val_ids, test_ids;
    Normalization norm;
    std::string dtype = "float32";
    json generator = json::object();
};

template <typename Real>
struct Dataset {
    DatasetManifest manifest;
    Graph graph;
    std::vector<Trajectory<Real>> trajectories;
};

// ---------------------------------------------------------------------------
// normalization

namespace detail {

inline void channel_stats(const std::vector<double>& sums, const std::vector<double>& sq_sums,
                          double count, std::vector<double>& mean, std::vector<double>& stdev) {
    mean.resize(sums.size());
    stdev.resize(sums.size());
    for (size_t c = 0; c < sums.size(); ++c) {
        mean[c] = sums[c] / count;
        const double var = sq_sums[c] / count - mean[c] * mean[c];
        double s = std::sqrt(std::max(var, 0.0));
        if (s < 1e-8) s = 1.0;  // zero-variance channels normalize to identity scale
        stdev[c] = s;
    }
}

}  // namespace detail

// Population statistics over all nodes and frames of the training split only.
template <typename Real>
Normalization compute_normalization(const std::vector<Trajectory<Real>>& trajectories,
                                    const std::vector<int>& train_ids) {
    if (train_ids.empty()) throw std::invalid_argument("normalization: empty training split");
    const auto& first = trajectories.at(static_cast<size_t>(train_ids.front()));
    const int sd = first.state_dim, vd = first.velocity_dim;
    const int ad = first.n_nodes ? static_cast<int>(first.node_static.size()) / first.n_nodes : 0;

    std::vector<double> ss(sd, 0.0), ss2(sd, 0.0), vs(vd, 0.0), vs2(vd, 0.0), as(ad, 0.0), as2(ad, 0.0);
    double n_state = 0, n_attr = 0;
    for (int id : train_ids) {
        const auto& tr = trajectories.at(static_cast<size_t>(id));
        for (int t = 0; t < tr.frames; ++t)
            for (int i = 0; i < tr.n_nodes; ++i) {
                for (int c = 0; c < sd; ++c) {
                    const double x = tr.state(t, i, c);
                    ss[c] += x;
                    ss2[c] += x * x;
                }
                for (int c = 0; c < vd; ++c) {
                    const double x = tr.velocity(t, i, c);
                    vs[c] += x;
                    vs2[c] += x * x;
                }
            }
        n_state += static_cast<double>(tr.frames) * tr.n_nodes;
        for (int i = 0; i < tr.n_nodes; ++i)
            for (int c = 0; c < ad; ++c) {
                const double x = tr.node_static[static_cast<size_t>(i) * ad + c];
                as[c] += x;
                as2[c] += x * x;
            }
        n_attr += tr.n_nodes;
    }
    Normalization nm;
    detail::channel_stats(ss, ss2, n_state, nm.state_mean, nm.state_std);
    detail::channel_stats(vs, vs2, n_state, nm.velocity_mean, nm.velocity_std);
    detail::channel_stats(as, as2, n_attr, nm.static_mean, nm.static_std);
    return nm;
}

// ---------------------------------------------------------------------------
// json (de)serialization

inline json to_json(const Normalization& n) {
    return json{{"state_mean", n.state_mean},       {"state_std", n.state_std},
                {"velocity_mean", n.velocity_mean}, {"velocity_std", n.velocity_std},
                {"static_mean", n.static_mean},     {"static_std", n.static_std}};
}

inline Normalization normalization_from_json(const json& j) {
    Normalization n;
    n.state_mean = j.at("state_mean").get<std::vector<double>>();
    n.state_std = j.at("state_std").get<std::vector<double>>();
    n.velocity_mean = j.at("velocity_mean").get<std::vector<double>>();
    n.velocity_std = j.at("velocity_std").get<std::vector<double>>();
    n.static_mean = j.at("static_mean").get<std::vector<double>>();
    n.static_std = j.at("static_std").get<std::vector<double>>();
    for (double s : n.state_std)
        if (s <= 0) throw std::runtime_error("manifest: non-positive std");
    for (double s : n.velocity_std)
        if (s <= 0) throw std::runtime_error("manifest: non-positive std");
    for (double s : n.static_std)
        if (s <= 0) throw std::runtime_error("manifest: non-positive std");
    return n;
}

inline json to_json(const DatasetManifest& m) {
    return json{{"format_version", m.format_version},
                {"name", m.name},
                {"n_trajectories", m.n_trajectories},
                {"horizon", m.horizon},
                {"window", m.window},
                {"dt", m.dt},
                {"n_nodes", m.n_nodes},
                {"spatial_dim", m.spatial_dim},
                {"state_dim", m.state_dim},
                {"velocity_dim", m.velocity_dim},
                {"static_dim", m.static_dim},
                {"splits",
                 json{{"train", m.train_ids}, {"val", m.val_ids}, {"test", m.test_ids}}},
                {"normalization", to_json(m.norm)},
                {"dtype", m.dtype},
                {"generator", m.generator}};
}

inline DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1) throw std::runtime_error("manifest: unsupported format_version");
        m.name = j.at("name").get<std::string>();
        m.n_trajectories = j.at("n_trajectories").get<int>();
        m.horizon = j.at("horizon").get<int>();
        m.window = j.at("window").get<int>();
        m.dt = j.at("dt").get<double>();
        m.n_nodes = j.at("n_nodes").get<int>();
        m.spatial_dim = j.at("spatial_dim").get<int>();
        m.state_dim = j.at("state_dim").get<int>();
        m.velocity_dim = j.at("velocity_dim").get<int>();
        m.static_dim = j.at("static_dim").get<int>();
        m.train_ids = j.at("splits").at("train").get<std::vector<int>>();
        m.val_ids = j.at("splits").at("val").get<std::vector<int>>();
        m.test_ids = j.at("splits").at("test").get<std::vector<int>>();
        m.norm = normalization_from_json(j.at("normalization"));
        m.dtype = j.at("dtype").get<std::string>();
        if (m.dtype != "float32" && m.dtype != "float64")
            throw std::runtime_error("manifest: unknown dtype " + m.dtype);
        if (j.contains("generator")) m.generator = j.at("generator");
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed manifest: ") + e.what());
    }
    if (m.horizon < 1 || m.dt <= 0) throw std::runtime_error("manifest: horizon/dt invalid");

    // splits must be disjoint and within range
    std::vector<char> seen(static_cast<size_t>(m.n_trajectories), 0);
    auto mark = [&](const std::vector<int>& ids) {
        for (int id : ids) {
            if (id < 0 || id >= m.n_trajectories) throw std::runtime_error("manifest: split id out of range");
            if (seen[static_cast<size_t>(id)]++) throw std::runtime_error("manifest: splits overlap");
        }
    };
    mark(m.train_ids);
    mark(m.val_ids);
    mark(m.test_ids);
    return m;
}

inline json graph_to_json(const Graph& g) {
    return json{{"n_nodes", g.n_nodes},       {"spatial_dim", g.spatial_dim},
                {"static_dim", g.static_dim}, {"positions", g.positions},
                {"edge_src", g.edge_src},     {"edge_dst", g.edge_dst},
                {"node_static", g.node_static}};
}

inline Graph graph_from_json(const json& j) {
    try {
        return make_graph(j.at("n_nodes").get<int>(), j.at("edge_src").get<std::vector<int>>(),
                          j.at("edge_dst").get<std::vector<int>>(),
                          j.at("positions").get<std::vector<double>>(), j.at("spatial_dim").get<int>(),
                          j.at("node_static").get<std::vector<double>>(), j.at("static_dim").get<int>());
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed graph.json: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// binary payload

namespace detail {

template <typename Stored, typename Real>
void write_payload(std::ofstream& out, const Trajectory<Real>& tr) {
    const int d = tr.state_dim + tr.velocity_dim;
    std::vector<Stored> buf(static_cast<size_t>(tr.n_nodes) * d);
    for (int t = 0; t < tr.frames; ++t) {
        for (int i = 0; i < tr.n_nodes; ++i) {
            Stored* row = buf.data() + static_cast<size_t>(i) * d;
            for (int c = 0; c < tr.state_dim; ++c) row[c] = static_cast<Stored>(tr.state(t, i, c));
            for (int c = 0; c < tr.velocity_dim; ++c)
                row[tr.state_dim + c] = static_cast<Stored>(tr.velocity(t, i, c));
        }
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
    }
}

template <typename Stored, typename Real>
void read_payload(std::ifstream& in, Trajectory<Real>& tr, const std::string& path) {
    const int d = tr.state_dim + tr.velocity_dim;
    std::vector<Stored> buf(static_cast<size_t>(tr.n_nodes) * d);
    for (int t = 0; t < tr.frames; ++t) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
        if (!in) throw std::runtime_error("trajectory payload truncated: " + path);
        for (int i = 0; i < tr.n_nodes; ++i) {
            const Stored* row = buf.data() + static_cast<size_t>(i) * d;
            for (int c = 0; c < tr.state_dim; ++c) tr.state(t, i, c) = static_cast<Real>(row[c]);
            for (int c = 0; c < tr.velocity_dim; ++c)
                tr.velocity(t, i, c) = static_cast<Real>(row[tr.state_dim + c]);
        }
    }
    char extra;
    if (in.read(&extra, 1)) throw std::runtime_error("trajectory payload has trailing bytes: " + path);
}

template <typename Stored>
void write_static(const std::filesystem::path& p, const std::vector<double>& attrs) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    std::vector<Stored> buf(attrs.size());
    for (size_t i = 0; i < attrs.size(); ++i) buf[i] = static_cast<Stored>(attrs[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
}

template <typename Stored>
std::vector<double> read_static(const std::filesystem::path& p, size_t count) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::vector<Stored> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(Stored)));
    if (!in) throw std::runtime_error("static payload truncated: " + p.string());
    std::vector<double> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = static_cast<double>(buf[i]);
    return out;
}

}  // namespace detail

template <typename Real>
void write_dataset(const std::filesystem::path& dir, const Dataset<Real>& ds) {
    namespace fs = std::filesystem;
    const auto& m = ds.manifest;
    if (static_cast<int>(ds.trajectories.size()) != m.n_trajectories)
        throw std::invalid_argument("write_dataset: trajectory count != manifest");
    for (const auto& tr : ds.trajectories) {
        if (tr.frames != m.horizon + 1 || tr.n_nodes != m.n_nodes || tr.state_dim != m.state_dim ||
            tr.velocity_dim != m.velocity_dim)
            throw std::invalid_argument("write_dataset: trajectory shape != manifest");
        if (tr.node_static.size() != static_cast<size_t>(m.n_nodes) * m.static_dim)
            throw std::invalid_argument("write_dataset: static attrs shape != manifest");
        for (Real x : tr.states)
            if (!std::isfinite(static_cast<double>(x)))
                throw std::invalid_argument("write_dataset: non-finite state");
        for (Real x : tr.velocities)
            if (!std::isfinite(static_cast<double>(x)))
                throw std::invalid_argument("write_dataset: non-finite velocity");
    }

    fs::create_directories(dir);
    {
        std::ofstream mf(dir / "manifest.json");
        if (!mf) throw std::runtime_error("cannot write manifest.json");
        mf << to_json(m).dump(2) << "\n";
    }
    {
        std::ofstream gf(dir / "graph.json");
        if (!gf) throw std::runtime_error("cannot write graph.json");
        gf << graph_to_json(ds.graph).dump(2) << "\n";
    }
    for (int id = 0; id < m.n_trajectories; ++id) {
        const auto& tr = ds.trajectories[static_cast<size_t>(id)];
        std::ofstream out(dir / ("traj_" + std::to_string(id) + ".bin"), std::ios::binary);
        if (!out) throw std::runtime_error("cannot write trajectory file");
        if (m.dtype == "float32")
            detail::write_payload<float>(out, tr);
        else
            detail::write_payload<double>(out, tr);
        if (m.dtype == "float32")
            detail::write_static<float>(dir / ("static_" + std::to_string(id) + ".bin"), tr.node_static);
        else
            detail::write_static<double>(dir / ("static_" + std::to_string(id) + ".bin"), tr.node_static);
    }
}

template <typename Real>
Dataset<Real> read_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    Dataset<Real> ds;
    {
        std::ifstream mf(dir / "manifest.json");
        if (!mf) throw std::runtime_error("cannot read " + (dir / "manifest.json").string());
        json j;
        try {
            mf >> j;
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("malformed manifest: ") + e.what());
        }
        ds.manifest = manifest_from_json(j);
    }
    {
        std::ifstream gf(dir / "graph.json");
        if (!gf) throw std::runtime_error("cannot read graph.json");
        json j;
        gf >> j;
        ds.graph = graph_from_json(j);
    }
    const auto& m = ds.manifest;
    if (ds.graph.n_nodes != m.n_nodes) throw std::runtime_error("graph/manifest node count mismatch");

    const size_t elem = m.dtype == "float32" ? 4 : 8;
    const size_t frame_bytes = static_cast<size_t>(m.n_nodes) * (m.state_dim + m.velocity_dim) * elem;
    for (int id = 0; id < m.n_trajectories; ++id) {
        const auto path = dir / ("traj_" + std::to_string(id) + ".bin");
        const size_t expect = frame_bytes * static_cast<size_t>(m.horizon + 1);
        std::error_code ec;
        const auto actual = fs::file_size(path, ec);
        if (ec) throw std::runtime_error("cannot stat " + path.string());
        if (actual != expect)
            throw std::runtime_error("shape mismatch: " + path.string() + " holds " +
                                     std::to_string(actual) + " bytes, manifest implies " +
                                     std::to_string(expect));

        Trajectory<Real> tr;
        tr.frames = m.horizon + 1;
        tr.n_nodes = m.n_nodes;
        tr.state_dim = m.state_dim;
        tr.velocity_dim = m.velocity_dim;
        tr.dt = m.dt;
        tr.states.resize(static_cast<size_t>(tr.frames) * m.n_nodes * m.state_dim);
        tr.velocities.resize(static_cast<size_t>(tr.frames) * m.n_nodes * m.velocity_dim);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + path.string());
        if (m.dtype == "float32")
            detail::read_payload<float>(in, tr, path.string());
        else
            detail::read_payload<double>(in, tr, path.string());

        const auto spath = dir / ("static_" + std::to_string(id) + ".bin");
        const size_t scount = static_cast<size_t>(m.n_nodes) * m.static_dim;
        tr.node_static = m.dtype == "float32" ? detail::read_static<float>(spath, scount)
                                              : detail::read_static<double>(spath, scount);

        for (Real x : tr.states)
            if (!std::isfinite(static_cast<double>(x)))
                throw std::runtime_error("non-finite payload in " + path.string());
        for (Real x : tr.velocities)
            if (!std::isfinite(static_cast<double>(x)))
                throw std::runtime_error("non-finite payload in " + path.string());
        ds.trajectories.push_back(std::move(tr));
    }
    return ds;
}

}  // namespace igns
