#include "lorafb/attack.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lorafb/rng.hpp"

namespace lorafb {

namespace {

double distance_km(std::array<double, 2> a, std::array<double, 2> b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]) / 1000.0;
}

// received power over one link, with the transmitter/receiver heights
// substituted into the shared path-loss parameters
double link_rx_dbm(const AttackGeometry& geom, double p_tx_dbm,
                   std::array<double, 2> tx_pos, double tx_h,
                   std::array<double, 2> rx_pos, double rx_h) {
    PathLossParams p = geom.pathloss;
    p.h_m = tx_h;
    p.h_b = rx_h;
    return received_power_dbm(p_tx_dbm, p, distance_km(tx_pos, rx_pos));
}

// largest x in [lo, hi] with f(x) >= 0, for monotone decreasing f
double bisect_decreasing(const std::function<double(double)>& f, double lo, double hi) {
    if (f(lo) < 0.0) return lo;
    if (f(hi) >= 0.0) return hi;
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) >= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace

void AttackGeometry::validate() const {
    if (!(scr_low_db < scr_high_db))
        throw std::invalid_argument("SCR window must satisfy low < high");
    for (double v : {gateway_h, collider_h, eavesdropper_h, device_h, p_v_dbm, p_c_dbm,
                     scr_low_db, scr_high_db, eavesdrop_margin_db})
        if (!std::isfinite(v)) throw std::invalid_argument("geometry values must be finite");
}

void GridSpec::validate() const {
    if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    if (!(x_min < x_max) || !(y_min < y_max))
        throw std::invalid_argument("grid extent must be nonempty");
}

int GridSpec::nx() const {
    return static_cast<int>(std::ceil((x_max - x_min) / resolution));
}

int GridSpec::ny() const {
    return static_cast<int>(std::ceil((y_max - y_min) / resolution));
}

bool stealthy_condition(const AttackGeometry& geom, std::array<double, 2> device_pos) {
    double rx_victim = link_rx_dbm(geom, geom.p_v_dbm, device_pos, geom.device_h,
                                   geom.gateway_pos, geom.gateway_h);
    double rx_collision = link_rx_dbm(geom, geom.p_c_dbm, geom.collider_pos,
                                      geom.collider_h, geom.gateway_pos, geom.gateway_h);
    double scr = rx_victim - rx_collision;
    return scr >= geom.scr_low_db && scr <= geom.scr_high_db;
}

bool eavesdrop_condition(const AttackGeometry& geom, std::array<double, 2> device_pos) {
    double rx_victim = link_rx_dbm(geom, geom.p_v_dbm, device_pos, geom.device_h,
                                   geom.eavesdropper_pos, geom.eavesdropper_h);
    double rx_collision =
        link_rx_dbm(geom, geom.p_c_dbm, geom.collider_pos, geom.collider_h,
                    geom.eavesdropper_pos, geom.eavesdropper_h);
    if (geom.sensitivity_dbm && rx_victim < *geom.sensitivity_dbm) return false;
    return rx_victim - rx_collision >= geom.eavesdrop_margin_db;
}

AreaReport vulnerable_area(const AttackGeometry& geom, const GridSpec& grid) {
    geom.validate();
    grid.validate();
    for (auto pos : {geom.gateway_pos, geom.collider_pos, geom.eavesdropper_pos}) {
        if (pos[0] < grid.x_min || pos[0] > grid.x_max || pos[1] < grid.y_min ||
            pos[1] > grid.y_max)
            throw std::invalid_argument("grid must cover all actor positions");
    }
    AreaReport report;
    report.grid = grid;
    report.nx = grid.nx();
    report.ny = grid.ny();
    size_t cells = static_cast<size_t>(report.nx) * static_cast<size_t>(report.ny);
    report.ring_mask.assign(cells, 0);
    report.disk_mask.assign(cells, 0);
    report.intersection_mask.assign(cells, 0);
    size_t core_cells = 0;
    for (int iy = 0; iy < report.ny; ++iy) {
        double y = grid.y_min + (static_cast<double>(iy) + 0.5) * grid.resolution;
        for (int ix = 0; ix < report.nx; ++ix) {
            double x = grid.x_min + (static_cast<double>(ix) + 0.5) * grid.resolution;
            size_t idx = static_cast<size_t>(iy) * static_cast<size_t>(report.nx) +
                         static_cast<size_t>(ix);
            bool ring = stealthy_condition(geom, {x, y});
            bool disk = eavesdrop_condition(geom, {x, y});
            report.ring_mask[idx] = ring ? 1 : 0;
            report.disk_mask[idx] = disk ? 1 : 0;
            if (ring && disk) {
                report.intersection_mask[idx] = 1;
                ++core_cells;
            }
        }
    }
    report.core_area_m2 =
        static_cast<double>(core_cells) * grid.resolution * grid.resolution;
    return report;
}

std::vector<SweepEntry> area_vs_distance_sweep(const AttackGeometry& geom,
                                               const std::vector<double>& d_ge_m,
                                               const std::vector<double>& p_c_dbm,
                                               double resolution) {
    geom.validate();
    if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
    if (d_ge_m.empty() || p_c_dbm.empty())
        throw std::invalid_argument("sweep lists must be nonempty");

    // axis the eavesdropper moves along
    double ux = geom.eavesdropper_pos[0] - geom.gateway_pos[0];
    double uy = geom.eavesdropper_pos[1] - geom.gateway_pos[1];
    double norm = std::hypot(ux, uy);
    if (norm < 1e-9) {
        ux = 1.0;
        uy = 0.0;
    } else {
        ux /= norm;
        uy /= norm;
    }

    std::vector<SweepEntry> table;
    table.reserve(d_ge_m.size() * p_c_dbm.size());
    for (double d : d_ge_m) {
        for (double pc : p_c_dbm) {
            AttackGeometry g = geom;
            g.eavesdropper_pos = {geom.gateway_pos[0] + ux * d,
                                  geom.gateway_pos[1] + uy * d};
            g.p_c_dbm = pc;

            // the stealthy region is an annulus around the gateway and the
            // eavesdropping region a disk around the eavesdropper (both
            // conditions depend only on the respective distance), so their
            // outer radii bound the grid
            double r_ring = bisect_decreasing(
                [&](double r) {
                    double rx_v = link_rx_dbm(g, g.p_v_dbm,
                                              {g.gateway_pos[0] + r, g.gateway_pos[1]},
                                              g.device_h, g.gateway_pos, g.gateway_h);
                    double rx_c = link_rx_dbm(g, g.p_c_dbm, g.collider_pos, g.collider_h,
                                              g.gateway_pos, g.gateway_h);
                    return rx_v - rx_c - g.scr_low_db;
                },
                1.0, 1e6);
            double r_disk = bisect_decreasing(
                [&](double r) {
                    std::array<double, 2> pos{g.eavesdropper_pos[0] + r,
                                              g.eavesdropper_pos[1]};
                    double rx_v = link_rx_dbm(g, g.p_v_dbm, pos, g.device_h,
                                              g.eavesdropper_pos, g.eavesdropper_h);
                    double rx_c =
                        link_rx_dbm(g, g.p_c_dbm, g.collider_pos, g.collider_h,
                                    g.eavesdropper_pos, g.eavesdropper_h);
                    double margin = rx_v - rx_c - g.eavesdrop_margin_db;
                    if (g.sensitivity_dbm)
                        margin = std::min(margin, rx_v - *g.sensitivity_dbm);
                    return margin;
                },
                1.0, 1e6);

            GridSpec grid;
            grid.resolution = resolution;
            double pad = 2.0 * resolution;
            grid.x_min = std::min({g.gateway_pos[0] - r_ring,
                                   g.eavesdropper_pos[0] - r_disk, g.collider_pos[0]}) -
                         pad;
            grid.x_max = std::max({g.gateway_pos[0] + r_ring,
                                   g.eavesdropper_pos[0] + r_disk, g.collider_pos[0]}) +
                         pad;
            grid.y_min = std::min({g.gateway_pos[1] - r_ring,
                                   g.eavesdropper_pos[1] - r_disk, g.collider_pos[1]}) -
                         pad;
            grid.y_max = std::max({g.gateway_pos[1] + r_ring,
                                   g.eavesdropper_pos[1] + r_disk, g.collider_pos[1]}) +
                         pad;
            table.push_back({d, pc, vulnerable_area(g, grid).core_area_m2});
        }
    }
    return table;
}

std::vector<GridCell> collision_grid(const PhyConfig& cfg,
                                     const std::vector<double>& scr_db,
                                     const std::vector<double>& rtm,
                                     int trials, uint64_t seed) {
    cfg.validate();
    if (trials < 1) throw std::invalid_argument("trials must be at least 1");
    if (scr_db.empty() || rtm.empty())
        throw std::invalid_argument("grid axes must be nonempty");

    constexpr int kPayloadSymbols = 30;
    std::vector<GridCell> cells;
    cells.reserve(scr_db.size() * rtm.size());
    uint64_t trial_index = 0;
    for (double scr : scr_db) {
        for (double r : rtm) {
            GridCell cell;
            cell.scr_db = scr;
            cell.rtm = r;
            for (int t = 0; t < trials; ++t, ++trial_index) {
                uint64_t trial_seed = mix_seed(seed, trial_index);
                Rng payload(mix_seed(trial_seed, 1));
                auto random_frame = [&](int64_t onset) {
                    FrameSpec f;
                    f.preamble_len = 8;
                    f.symbols.resize(kPayloadSymbols);
                    for (int& s : f.symbols)
                        s = static_cast<int>(payload.integer(cfg.chips()));
                    f.chirp.delta_tx = payload.uniform(-20e3, 20e3);
                    f.onset_offset = onset;
                    return f;
                };
                CollisionScene scene;
                scene.victim = random_frame(cfg.boundary_sample(1));
                scene.collider = random_frame(0);
                scene.rtm = r;
                scene.scr_db = scr;
                scene.snr_db = kNoiseless;
                scene.seed = trial_seed;
                auto [trace, gt] = compose_collision(cfg, scene);
                OutcomeClass oc = classify_outcome(trace, cfg, gt);
                ++cell.counts[static_cast<size_t>(oc)];
            }
            int best = 0;
            for (int c = 1; c < 5; ++c)
                if (cell.counts[static_cast<size_t>(c)] >
                    cell.counts[static_cast<size_t>(best)])
                    best = c;
            cell.modal = static_cast<OutcomeClass>(best);
            cells.push_back(cell);
        }
    }
    return cells;
}

const std::vector<CollisionWindows>& collision_window_table() {
    // bench-measured SX1276 windows, milliseconds; the (7, 30) row appears
    // twice in the source data with identical values
    static const std::vector<CollisionWindows> rows = {
        {7, 10, 5.0, 28.0, 141.0},  {7, 20, 5.0, 38.0, 156.0},
        {7, 30, 6.0, 41.0, 165.0},  {7, 40, 6.0, 54.0, 178.0},
        {7, 30, 6.0, 41.0, 165.0},  {8, 30, 10.0, 82.0, 208.0},
        {9, 30, 22.0, 156.0, 274.0},
    };
    return rows;
}

CollisionWindows lookup_collision_windows(int s, int payload_bytes) {
    for (const CollisionWindows& row : collision_window_table())
        if (row.s == s && row.payload_bytes == payload_bytes) return row;
    throw NotInTableError("no measured collision window for S=" + std::to_string(s) +
                          ", payload=" + std::to_string(payload_bytes) + " bytes");
}

}  // namespace lorafb
