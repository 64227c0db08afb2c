#pragma once

// Reference numerical solvers and dataset generators.
//
// Ground truth is integrated at a finer step than the stored frame interval
// (substeps per frame) so the data is more accurate than any learned model
// stepping at the frame rate. Solvers work on rows x cols lattices whose node
// ids match build_grid_graph (id = r * cols + c).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "igns/dataset.hpp"
#include "igns/graph.hpp"
#include "igns/rng.hpp"

namespace igns::datagen {

// ---------------------------------------------------------------------------
// forced 2-D wave equation, leapfrog on the 5-point stencil

struct GaussianSource {
    double x0 = 0, y0 = 0;  // physical coordinates at t = 0
    double vx = 0, vy = 0;  // linear drift
    double amplitude = 1.0;
    double width = 1.5;
};

enum class Boundary { fixed, zero_flux };

struct WaveConfig {
    int rows = 16, cols = 16;
    double wave_speed = 1.0;
    double spacing = 1.0;   // grid spacing h
    double frame_dt = 1.0;  // stored frame interval
    int substeps = 5;       // integration runs at frame_dt / substeps
    int horizon = 50;       // stored frames beyond the initial one
    double damping = 0.0;
    Boundary boundary = Boundary::fixed;
    std::vector<GaussianSource> sources;

    double fine_dt() const { return frame_dt / substeps; }

    void validate() const {
        if (rows < 1 || cols < 2) throw std::invalid_argument("wave: degenerate grid");
        if (horizon < 1 || frame_dt <= 0 || substeps < 1 || spacing <= 0 || wave_speed <= 0)
            throw std::invalid_argument("wave: bad time/space parameters");
        if (damping < 0) throw std::invalid_argument("wave: negative damping");
        // CFL bound for the explicit 5-point leapfrog
        if (wave_speed * fine_dt() / spacing > 1.0 / std::sqrt(2.0) + 1e-12)
            throw std::invalid_argument("wave: CFL violated, c*dt/h = " +
                                        std::to_string(wave_speed * fine_dt() / spacing));
    }
};

namespace detail {

inline bool wave_pinned(const WaveConfig& cfg, int r, int c) {
    if (cfg.boundary != Boundary::fixed) return false;
    return (cfg.cols > 1 && (c == 0 || c == cfg.cols - 1)) ||
           (cfg.rows > 1 && (r == 0 || r == cfg.rows - 1));
}

// 5-point Laplacian; missing neighbors mirror the center (zero-flux) or read
// a pinned zero handled by the caller keeping boundary cells at zero.
inline void laplacian(const WaveConfig& cfg, const std::vector<double>& u, std::vector<double>& lap) {
    const double inv_h2 = 1.0 / (cfg.spacing * cfg.spacing);
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
            const size_t i = static_cast<size_t>(r) * cfg.cols + c;
            double acc = 0;
            if (c > 0) acc += u[i - 1] - u[i];
            if (c + 1 < cfg.cols) acc += u[i + 1] - u[i];
            if (r > 0) acc += u[i - static_cast<size_t>(cfg.cols)] - u[i];
            if (r + 1 < cfg.rows) acc += u[i + static_cast<size_t>(cfg.cols)] - u[i];
            lap[i] = acc * inv_h2;
        }
}

inline void wave_forcing(const WaveConfig& cfg, double t, std::vector<double>& f) {
    std::fill(f.begin(), f.end(), 0.0);
    for (const auto& s : cfg.sources) {
        const double cx = s.x0 + s.vx * t;
        const double cy = s.y0 + s.vy * t;
        const double inv2w2 = 1.0 / (2.0 * s.width * s.width);
        for (int r = 0; r < cfg.rows; ++r)
            for (int c = 0; c < cfg.cols; ++c) {
                const double dx = c * cfg.spacing - cx;
                const double dy = r * cfg.spacing - cy;
                double val = s.amplitude * std::exp(-(dx * dx + dy * dy) * inv2w2);
                if (std::abs(val) < 1e-12) val = 0.0;  // keep forcing spatially sparse
                f[static_cast<size_t>(r) * cfg.cols + c] += val;
            }
    }
}

}  // namespace detail

// Discrete energy sum(h^2 (v^2/2 + c^2 |grad u|^2 / 2)) with forward
// differences; the conservation check for unforced, undamped runs.
inline double wave_energy(const WaveConfig& cfg, const std::vector<double>& u,
                          const std::vector<double>& v) {
    const double h = cfg.spacing;
    const double c2 = cfg.wave_speed * cfg.wave_speed;
    const double cell = cfg.rows > 1 ? h * h : h;
    double e = 0;
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
            const size_t i = static_cast<size_t>(r) * cfg.cols + c;
            e += 0.5 * v[i] * v[i] * cell;
            if (c + 1 < cfg.cols) {
                const double du = (u[i + 1] - u[i]) / h;
                e += 0.5 * c2 * du * du * cell;
            }
            if (r + 1 < cfg.rows) {
                const double du = (u[i + static_cast<size_t>(cfg.cols)] - u[i]) / h;
                e += 0.5 * c2 * du * du * cell;
            }
        }
    return e;
}

// Leapfrog integration of  u_tt = c^2 lap(u) + f - damping u_t.
// Emits u and u_t (central differences on the fine grid) every frame.
inline Trajectory<double> simulate_wave(const WaveConfig& cfg, std::vector<double> u0,
                                        std::vector<double> v0) {
    cfg.validate();
    const size_t n = static_cast<size_t>(cfg.rows) * cfg.cols;
    if (u0.size() != n || v0.size() != n) throw std::invalid_argument("wave: initial field size");
    const double dt = cfg.fine_dt();
    const int fine_total = cfg.horizon * cfg.substeps;

    auto pin = [&](std::vector<double>& u) {
        for (int r = 0; r < cfg.rows; ++r)
            for (int c = 0; c < cfg.cols; ++c)
                if (detail::wave_pinned(cfg, r, c)) u[static_cast<size_t>(r) * cfg.cols + c] = 0.0;
    };
    pin(u0);

    // full fine-step history (desk scale keeps this small)
    std::vector<std::vector<double>> hist;
    hist.reserve(static_cast<size_t>(fine_total) + 2);
    hist.push_back(u0);

    std::vector<double> lap(n), f(n);
    // first step from the initial velocity
    detail::laplacian(cfg, u0, lap);
    detail::wave_forcing(cfg, 0.0, f);
    std::vector<double> u1(n);
    for (size_t i = 0; i < n; ++i) {
        const double acc = cfg.wave_speed * cfg.wave_speed * lap[i] + f[i] - cfg.damping * v0[i];
        u1[i] = u0[i] + dt * v0[i] + 0.5 * dt * dt * acc;
    }
    pin(u1);
    hist.push_back(std::move(u1));

    const double bd = cfg.damping * dt / 2.0;
    for (int m = 1; m <= fine_total; ++m) {
        const auto& u_cur = hist[static_cast<size_t>(m)];
        const auto& u_old = hist[static_cast<size_t>(m) - 1];
        detail::laplacian(cfg, u_cur, lap);
        detail::wave_forcing(cfg, m * dt, f);
        std::vector<double> u_new(n);
        for (size_t i = 0; i < n; ++i) {
            const double acc = cfg.wave_speed * cfg.wave_speed * lap[i] + f[i];
            u_new[i] = (2.0 * u_cur[i] - u_old[i] + dt * dt * acc + bd * u_old[i]) / (1.0 + bd);
        }
        pin(u_new);
        if (!std::isfinite(u_new[n / 2]))
            throw std::runtime_error("wave: field diverged at fine step " + std::to_string(m));
        hist.push_back(std::move(u_new));
    }

    Trajectory<double> tr;
    tr.frames = cfg.horizon + 1;
    tr.n_nodes = static_cast<int>(n);
    tr.state_dim = 1;
    tr.velocity_dim = 1;
    tr.dt = cfg.frame_dt;
    tr.states.resize(static_cast<size_t>(tr.frames) * n);
    tr.velocities.resize(static_cast<size_t>(tr.frames) * n);
    for (int fr = 0; fr <= cfg.horizon; ++fr) {
        const int m = fr * cfg.substeps;
        const auto& u = hist[static_cast<size_t>(m)];
        for (size_t i = 0; i < n; ++i) {
            tr.states[static_cast<size_t>(fr) * n + i] = u[i];
            double vel;
            if (m == 0)
                vel = v0[i];
            else
                vel = (hist[static_cast<size_t>(m) + 1][i] - hist[static_cast<size_t>(m) - 1][i]) /
                      (2.0 * dt);
            tr.velocities[static_cast<size_t>(fr) * n + i] = vel;
        }
    }
    for (double x : tr.states)
        if (!std::isfinite(x)) throw std::runtime_error("wave: non-finite field");
    return tr;
}

// ---------------------------------------------------------------------------
// mass-spring-damper lattice, semi-implicit Euler

struct MassSpringConfig {
    int rows = 8, cols = 8;
    double mass = 1.0;
    double spring_k = 25.0;
    double damping = 0.1;  // diagonal, >= 0
    double frame_dt = 0.4;
    int substeps = 5;
    int horizon = 30;
    std::vector<double> initial_displacement;          // size rows*cols; boundary pinned to 0
    std::vector<std::pair<int, double>> point_forces;  // static (node, value)

    double fine_dt() const { return frame_dt / substeps; }

    void validate() const {
        if (rows < 2 || cols < 2) throw std::invalid_argument("mass-spring: degenerate grid");
        if (mass <= 0 || spring_k <= 0) throw std::invalid_argument("mass-spring: M, K must be positive");
        if (damping < 0) throw std::invalid_argument("mass-spring: negative damping");
        if (horizon < 1 || frame_dt <= 0 || substeps < 1)
            throw std::invalid_argument("mass-spring: bad time parameters");
        // explicit stability margin for the stiffest lattice mode
        const double omega_max = 2.0 * std::sqrt(2.0 * spring_k / mass);
        if (fine_dt() * omega_max > 1.9)
            throw std::invalid_argument("mass-spring: fine step too coarse for stiffness");
    }
};

namespace detail {

inline bool ms_pinned(const MassSpringConfig& cfg, int r, int c) {
    return r == 0 || c == 0 || r == cfg.rows - 1 || c == cfg.cols - 1;
}

// -K q with K the pinned-boundary lattice Laplacian scaled by spring_k
inline void spring_force(const MassSpringConfig& cfg, const std::vector<double>& q,
                         std::vector<double>& out) {
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
            const size_t i = static_cast<size_t>(r) * cfg.cols + c;
            double acc = 0;
            if (c > 0) acc += q[i - 1] - q[i];
            if (c + 1 < cfg.cols) acc += q[i + 1] - q[i];
            if (r > 0) acc += q[i - static_cast<size_t>(cfg.cols)] - q[i];
            if (r + 1 < cfg.rows) acc += q[i + static_cast<size_t>(cfg.cols)] - q[i];
            out[i] = cfg.spring_k * acc;
        }
}

}  // namespace detail

inline double mass_spring_energy(const MassSpringConfig& cfg, const std::vector<double>& q,
                                 const std::vector<double>& v) {
    double e = 0;
    const size_t n = static_cast<size_t>(cfg.rows) * cfg.cols;
    for (size_t i = 0; i < n; ++i) e += 0.5 * cfg.mass * v[i] * v[i];
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
            const size_t i = static_cast<size_t>(r) * cfg.cols + c;
            if (c + 1 < cfg.cols) {
                const double d = q[i + 1] - q[i];
                e += 0.5 * cfg.spring_k * d * d;
            }
            if (r + 1 < cfg.rows) {
                const double d = q[i + static_cast<size_t>(cfg.cols)] - q[i];
                e += 0.5 * cfg.spring_k * d * d;
            }
        }
    return e;
}

// Static equilibrium K q* = r via conjugate gradients on the pinned lattice;
// used to validate energy decay around the shifted equilibrium.
inline std::vector<double> mass_spring_equilibrium(const MassSpringConfig& cfg) {
    const size_t n = static_cast<size_t>(cfg.rows) * cfg.cols;
    std::vector<double> rhs(n, 0.0);
    for (auto [node, value] : cfg.point_forces) rhs[static_cast<size_t>(node)] = value;
    std::vector<double> x(n, 0.0), r = rhs, p = rhs, kp(n);
    auto apply_k = [&](const std::vector<double>& in, std::vector<double>& out) {
        detail::spring_force(cfg, in, out);  // = -K in
        for (size_t i = 0; i < n; ++i) out[i] = -out[i];
        for (int rr = 0; rr < cfg.rows; ++rr)
            for (int cc = 0; cc < cfg.cols; ++cc)
                if (detail::ms_pinned(cfg, rr, cc)) out[static_cast<size_t>(rr) * cfg.cols + cc] =
                    in[static_cast<size_t>(rr) * cfg.cols + cc];  // identity rows on pinned nodes
    };
    for (int rr = 0; rr < cfg.rows; ++rr)
        for (int cc = 0; cc < cfg.cols; ++cc)
            if (detail::ms_pinned(cfg, rr, cc)) {
                r[static_cast<size_t>(rr) * cfg.cols + cc] = 0;
                p[static_cast<size_t>(rr) * cfg.cols + cc] = 0;
            }
    double rr_old = 0;
    for (size_t i = 0; i < n; ++i) rr_old += r[i] * r[i];
    for (int it = 0; it < 4 * static_cast<int>(n) && rr_old > 1e-24; ++it) {
        apply_k(p, kp);
        double pkp = 0;
        for (size_t i = 0; i < n; ++i) pkp += p[i] * kp[i];
        const double alpha = rr_old / pkp;
        double rr_new = 0;
        for (size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
            rr_new += r[i] * r[i];
        }
        const double beta = rr_new / rr_old;
        for (size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        rr_old = rr_new;
    }
    return x;
}

// Semi-implicit Euler on M q'' = -K q - D q' + r with pinned boundary.
inline Trajectory<double> simulate_mass_spring(const MassSpringConfig& cfg) {
    cfg.validate();
    const size_t n = static_cast<size_t>(cfg.rows) * cfg.cols;
    std::vector<double> q = cfg.initial_displacement;
    if (q.empty()) q.assign(n, 0.0);
    if (q.size() != n) throw std::invalid_argument("mass-spring: initial displacement size");
    std::vector<double> v(n, 0.0), force(n), rext(n, 0.0);
    for (auto [node, value] : cfg.point_forces) {
        if (node < 0 || node >= static_cast<int>(n))
            throw std::invalid_argument("mass-spring: force node out of range");
        rext[static_cast<size_t>(node)] = value;
    }
    auto pin = [&](std::vector<double>& a) {
        for (int r = 0; r < cfg.rows; ++r)
            for (int c = 0; c < cfg.cols; ++c)
                if (detail::ms_pinned(cfg, r, c)) a[static_cast<size_t>(r) * cfg.cols + c] = 0.0;
    };
    pin(q);

    Trajectory<double> tr;
    tr.frames = cfg.horizon + 1;
    tr.n_nodes = static_cast<int>(n);
    tr.state_dim = 1;
    tr.velocity_dim = 1;
    tr.dt = cfg.frame_dt;
    tr.states.resize(static_cast<size_t>(tr.frames) * n);
    tr.velocities.resize(static_cast<size_t>(tr.frames) * n);

    const double dt = cfg.fine_dt();
    const double inv_m = 1.0 / cfg.mass;
    auto store = [&](int frame) {
        for (size_t i = 0; i < n; ++i) {
            tr.states[static_cast<size_t>(frame) * n + i] = q[i];
            tr.velocities[static_cast<size_t>(frame) * n + i] = v[i];
        }
    };
    store(0);
    for (int frame = 1; frame <= cfg.horizon; ++frame) {
        for (int s = 0; s < cfg.substeps; ++s) {
            detail::spring_force(cfg, q, force);
            for (size_t i = 0; i < n; ++i)
                v[i] += dt * inv_m * (force[i] - cfg.damping * v[i] + rext[i]);
            pin(v);
            for (size_t i = 0; i < n; ++i) q[i] += dt * v[i];
            pin(q);
        }
        if (!std::isfinite(q[n / 2]))
            throw std::runtime_error("mass-spring: diverged at frame " + std::to_string(frame));
        store(frame);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// first-order heat equation (diffusion contrast task)

struct DiffusionConfig {
    int rows = 12, cols = 12;
    double alpha = 1.0;
    double frame_dt = 1.0;
    int substeps = 5;
    int horizon = 40;
    std::vector<double> initial;

    double fine_dt() const { return frame_dt / substeps; }

    void validate() const {
        if (rows < 2 || cols < 2) throw std::invalid_argument("diffusion: degenerate grid");
        if (alpha <= 0 || frame_dt <= 0 || substeps < 1 || horizon < 1)
            throw std::invalid_argument("diffusion: bad parameters");
        if (alpha * fine_dt() > 0.25 + 1e-12)
            throw std::invalid_argument("diffusion: explicit stability bound violated");
    }
};

// Explicit stencil; zero-flux boundary. Emits u and u_t = alpha lap(u).
inline Trajectory<double> simulate_diffusion(const DiffusionConfig& cfg) {
    cfg.validate();
    const size_t n = static_cast<size_t>(cfg.rows) * cfg.cols;
    std::vector<double> u = cfg.initial;
    if (u.size() != n) throw std::invalid_argument("diffusion: initial field size");
    WaveConfig stencil;  // reuse the Laplacian (spacing 1, sizes matter only)
    stencil.rows = cfg.rows;
    stencil.cols = cfg.cols;
    std::vector<double> lap(n);

    Trajectory<double> tr;
    tr.frames = cfg.horizon + 1;
    tr.n_nodes = static_cast<int>(n);
    tr.state_dim = 1;
    tr.velocity_dim = 1;
    tr.dt = cfg.frame_dt;
    tr.states.resize(static_cast<size_t>(tr.frames) * n);
    tr.velocities.resize(static_cast<size_t>(tr.frames) * n);
    auto store = [&](int frame) {
        detail::laplacian(stencil, u, lap);
        for (size_t i = 0; i < n; ++i) {
            tr.states[static_cast<size_t>(frame) * n + i] = u[i];
            tr.velocities[static_cast<size_t>(frame) * n + i] = cfg.alpha * lap[i];
        }
    };
    store(0);
    const double dt = cfg.fine_dt();
    for (int frame = 1; frame <= cfg.horizon; ++frame) {
        for (int s = 0; s < cfg.substeps; ++s) {
            detail::laplacian(stencil, u, lap);
            for (size_t i = 0; i < n; ++i) u[i] += dt * cfg.alpha * lap[i];
        }
        store(frame);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// dataset generation

enum class Task { wave_balls_mini, mass_spring_lattice, diffusion_contrast };

inline Task task_from_string(const std::string& s) {
    if (s == "wave_balls_mini") return Task::wave_balls_mini;
    if (s == "mass_spring_lattice") return Task::mass_spring_lattice;
    if (s == "diffusion_contrast") return Task::diffusion_contrast;
    throw std::invalid_argument("unknown task: " + s);
}

inline const char* task_name(Task t) {
    switch (t) {
        case Task::wave_balls_mini: return "wave_balls_mini";
        case Task::mass_spring_lattice: return "mass_spring_lattice";
        case Task::diffusion_contrast: return "diffusion_contrast";
    }
    return "?";
}

struct GenOptions {
    int rows = -1, cols = -1, horizon = -1;  // -1 keeps the task default
    double frame_dt = -1;                    // stored frame interval override
};

namespace detail {

inline std::vector<double> gaussian_bumps(Rng& rng, int rows, int cols, int n_bumps,
                                          double amplitude, double width) {
    std::vector<double> u(static_cast<size_t>(rows) * cols, 0.0);
    for (int b = 0; b < n_bumps; ++b) {
        const double cx = rng.uniform(1.5, cols - 2.5);
        const double cy = rng.uniform(1.5, rows - 2.5);
        const double amp = amplitude * (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.6, 1.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const double dx = c - cx, dy = r - cy;
                u[static_cast<size_t>(r) * cols + c] +=
                    amp * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
            }
    }
    return u;
}

inline void validate_trajectory(Task task, const Trajectory<double>& tr, const json& gen_cfg) {
    for (double x : tr.states)
        if (!std::isfinite(x)) throw std::runtime_error("generated trajectory has non-finite state");
    for (double x : tr.velocities)
        if (!std::isfinite(x)) throw std::runtime_error("generated trajectory has non-finite velocity");
    if (task == Task::diffusion_contrast) {
        // discrete maximum principle against the initial extrema
        double lo = tr.states[0], hi = tr.states[0];
        const size_t n = static_cast<size_t>(tr.n_nodes);
        for (size_t i = 0; i < n; ++i) {
            lo = std::min(lo, tr.states[i]);
            hi = std::max(hi, tr.states[i]);
        }
        for (double x : tr.states)
            if (x < lo - 1e-9 || x > hi + 1e-9)
                throw std::runtime_error("diffusion trajectory violates the maximum principle");
    }
    (void)gen_cfg;
}

}  // namespace detail

// Samples task-specific randomized configs, simulates each trajectory, and
// writes the dataset with a 70/15/15 split and train-split normalization.
inline DatasetManifest generate_dataset(Task task, int count, uint64_t seed,
                                        const std::filesystem::path& out_dir,
                                        const GenOptions& opt = {}) {
    if (count < 3) throw std::invalid_argument("generate: need at least 3 trajectories");
    Rng rng(seed);
    Dataset<double> ds;
    auto& m = ds.manifest;
    m.name = task_name(task);
    m.n_trajectories = count;
    m.dtype = "float32";

    int rows = 0, cols = 0;
    if (task == Task::wave_balls_mini) {
        rows = opt.rows > 0 ? opt.rows : 16;
        cols = opt.cols > 0 ? opt.cols : 16;
        m.horizon = opt.horizon > 0 ? opt.horizon : 50;
        m.dt = 1.0;
    } else if (task == Task::mass_spring_lattice) {
        rows = opt.rows > 0 ? opt.rows : 8;
        cols = opt.cols > 0 ? opt.cols : 8;
        m.horizon = opt.horizon > 0 ? opt.horizon : 30;
        m.dt = 0.4;
    } else {
        rows = opt.rows > 0 ? opt.rows : 12;
        cols = opt.cols > 0 ? opt.cols : 12;
        m.horizon = opt.horizon > 0 ? opt.horizon : 40;
        m.dt = 1.0;
    }
    if (opt.frame_dt > 0) m.dt = opt.frame_dt;
    m.window = m.horizon;
    ds.graph = build_grid_graph(rows, cols);
    m.n_nodes = ds.graph.n_nodes;
    m.spatial_dim = 2;
    m.state_dim = 1;
    m.velocity_dim = 1;
    // one extra condition channel: static point-force magnitude for the
    // lattice task, the t=0 ball footprint for the wave task
    const bool has_extra_channel =
        task == Task::mass_spring_lattice || task == Task::wave_balls_mini;
    m.static_dim = kNodeTypeChannels + (has_extra_channel ? 1 : 0);

    m.generator = json{{"task", task_name(task)}, {"seed", seed},      {"rows", rows},
                       {"cols", cols},            {"count", count},    {"horizon", m.horizon},
                       {"frame_dt", m.dt}};

    for (int id = 0; id < count; ++id) {
        Trajectory<double> tr;
        std::vector<double> attrs(static_cast<size_t>(m.n_nodes) * m.static_dim, 0.0);
        for (int i = 0; i < m.n_nodes; ++i)
            attrs[static_cast<size_t>(i) * m.static_dim + ds.graph.node_type(i)] = 1.0;

        if (task == Task::wave_balls_mini) {
            WaveConfig cfg;
            cfg.rows = rows;
            cfg.cols = cols;
            cfg.horizon = m.horizon;
            cfg.frame_dt = m.dt;
            // three balls starting on the left, drifting right at a fixed speed;
            // the full swept corridor is marked as source nodes (the forcing
            // plan is part of the task inputs, position along it is revealed
            // by the evolving field)
            for (int b = 0; b < 3; ++b) {
                GaussianSource s;
                s.x0 = rng.uniform(1.0, 4.0);
                s.y0 = rng.uniform(2.0, rows - 3.0);
                s.vx = 0.22;
                s.vy = 0.0;
                s.amplitude = 2.0;
                s.width = 1.5;
                cfg.sources.push_back(s);
                const double t_end = m.horizon * m.dt;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) {
                        double* a = &attrs[(static_cast<size_t>(r) * cols + c) * m.static_dim];
                        // swept corridor: distance from the segment the ball travels
                        const double x_near =
                            std::clamp(static_cast<double>(c), s.x0, s.x0 + s.vx * t_end);
                        const double dxc = c - x_near, dyc = r - s.y0;
                        if (dxc * dxc + dyc * dyc <= 4.0 * s.width * s.width) {
                            a[kNodeTypeInterior] = 0.0;
                            a[kNodeTypeBoundary] = 0.0;
                            a[kNodeTypeSource] = 1.0;
                        }
                        // starting footprint in the extra condition channel
                        const double dx0 = c - s.x0, dy0 = r - s.y0;
                        if (dx0 * dx0 + dy0 * dy0 <= 4.0 * s.width * s.width)
                            a[kNodeTypeChannels] = 1.0;
                    }
            }
            const size_t n = static_cast<size_t>(m.n_nodes);
            tr = simulate_wave(cfg, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
        } else if (task == Task::mass_spring_lattice) {
            MassSpringConfig cfg;
            cfg.rows = rows;
            cfg.cols = cols;
            cfg.horizon = m.horizon;
            cfg.frame_dt = m.dt;
            // integration step capped by the stiffest mode regardless of the
            // stored frame interval
            cfg.substeps = std::max(5, static_cast<int>(std::ceil(cfg.frame_dt / 0.08)));
            cfg.initial_displacement =
                detail::gaussian_bumps(rng, rows, cols, 1 + static_cast<int>(rng.below(2)), 1.0, 2.0);
            const int n_forces = static_cast<int>(rng.below(3));
            for (int f = 0; f < n_forces; ++f) {
                const int r = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(rows - 2)));
                const int c = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(cols - 2)));
                const double mag = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
                cfg.point_forces.push_back({r * cols + c, mag});
                attrs[static_cast<size_t>(r * cols + c) * m.static_dim + kNodeTypeChannels] = mag;
            }
            tr = simulate_mass_spring(cfg);
        } else {
            DiffusionConfig cfg;
            cfg.rows = rows;
            cfg.cols = cols;
            cfg.horizon = m.horizon;
            cfg.frame_dt = m.dt;
            cfg.initial =
                detail::gaussian_bumps(rng, rows, cols, 2 + static_cast<int>(rng.below(2)), 1.0, 1.5);
            tr = simulate_diffusion(cfg);
        }
        detail::validate_trajectory(task, tr, m.generator);
        tr.node_static = std::move(attrs);
        // storage quantization now so normalization matches the stored data
        for (auto& x : tr.states) x = static_cast<float>(x);
        for (auto& x : tr.velocities) x = static_cast<float>(x);
        ds.trajectories.push_back(std::move(tr));
    }

    const int n_train = static_cast<int>(std::floor(0.7 * count));
    const int n_val = static_cast<int>(std::floor(0.15 * count));
    for (int i = 0; i < count; ++i) {
        if (i < n_train)
            m.train_ids.push_back(i);
        else if (i < n_train + n_val)
            m.val_ids.push_back(i);
        else
            m.test_ids.push_back(i);
    }
    m.norm = compute_normalization(ds.trajectories, m.train_ids);
    write_dataset(out_dir, ds);
    return m;
}

}  // namespace igns::datagen
