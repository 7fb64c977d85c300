#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lorafb/channel.hpp"
#include "lorafb/phy.hpp"
#include "lorafb/receiver.hpp"

namespace lorafb {

// Actor placement and link budget for the collision/eavesdropping
// geometry. Positions are meters in a flat plane; heights are meters above
// ground and run through the path-loss floor, so ground-level actors are
// fine. Default values place the gateway at the origin with the collider
// 50 m and the eavesdropper 400 m away on the x axis.
struct AttackGeometry {
    std::array<double, 2> gateway_pos{0.0, 0.0};
    std::array<double, 2> collider_pos{50.0, 0.0};
    std::array<double, 2> eavesdropper_pos{400.0, 0.0};
    double gateway_h = 25.0;
    double collider_h = 0.0;
    double eavesdropper_h = 0.0;
    double device_h = 0.0;
    double p_v_dbm = 14.0;
    double p_c_dbm = 2.0;
    PathLossParams pathloss{};
    double scr_low_db = -6.0;
    double scr_high_db = 6.0;
    double eavesdrop_margin_db = 6.0;
    // optional eavesdropper sensitivity: when set, eavesdropping also
    // requires the victim signal to arrive above this power
    std::optional<double> sensitivity_dbm{};

    void validate() const;
};

// Rectangular evaluation grid; cells are squares of `resolution` meters
// evaluated at their centers.
struct GridSpec {
    double x_min = -500.0;
    double x_max = 500.0;
    double y_min = -500.0;
    double y_max = 500.0;
    double resolution = 1.0;

    void validate() const;
    int nx() const;
    int ny() const;
};

// Cell masks are row-major over (ny, nx): index = iy * nx + ix.
struct AreaReport {
    double core_area_m2 = 0.0;
    int nx = 0;
    int ny = 0;
    std::vector<uint8_t> ring_mask;
    std::vector<uint8_t> disk_mask;
    std::vector<uint8_t> intersection_mask;
    GridSpec grid;
};

struct SweepEntry {
    double d_ge_m = 0.0;
    double p_c_dbm = 0.0;
    double core_area_m2 = 0.0;
};

// One SCR x RTM cell of the collision-outcome study.
struct GridCell {
    double scr_db = 0.0;
    double rtm = 0.0;
    std::array<int, 5> counts{};  // indexed by OutcomeClass
    OutcomeClass modal = OutcomeClass::StealthyDrop;
};

struct CollisionWindows {
    int s = 0;
    int payload_bytes = 0;
    double w1_ms = 0.0;
    double w2_ms = 0.0;
    double w3_ms = 0.0;
};

class NotInTableError : public std::out_of_range {
   public:
    using std::out_of_range::out_of_range;
};

// Stealthy-collision test at a candidate device position: the victim and
// collision powers received by the gateway must stay within
// [scr_low_db, scr_high_db] of each other.
bool stealthy_condition(const AttackGeometry& geom, std::array<double, 2> device_pos);

// Eavesdropping test: the victim signal must beat the collision signal at
// the eavesdropper by at least eavesdrop_margin_db (and clear the optional
// sensitivity cutoff).
bool eavesdrop_condition(const AttackGeometry& geom, std::array<double, 2> device_pos);

// Cell-wise evaluation of both conditions over the grid. The grid must
// cover all three actor positions. core_area_m2 counts cells satisfying
// both conditions times resolution^2.
AreaReport vulnerable_area(const AttackGeometry& geom, const GridSpec& grid);

// Moves the eavesdropper along the gateway->eavesdropper axis to each
// distance in d_ge_m and evaluates the core area for each collider power.
// The evaluation grid is sized automatically around the stealthy ring and
// the eavesdropping disk. Entries come back ordered by (d_ge, p_c).
std::vector<SweepEntry> area_vs_distance_sweep(const AttackGeometry& geom,
                                               const std::vector<double>& d_ge_m,
                                               const std::vector<double>& p_c_dbm,
                                               double resolution = 2.0);

// Monte-Carlo collision outcomes over the SCR x RTM plane: `trials`
// composed collisions per cell with fresh payloads, phases and noise
// seeds. Cells come back row-major over (scr, rtm).
std::vector<GridCell> collision_grid(const PhyConfig& cfg,
                                     const std::vector<double>& scr_db,
                                     const std::vector<double>& rtm,
                                     int trials, uint64_t seed);

// Measured SX1276 collision time windows, embedded from bench data.
// Throws NotInTableError for combinations that were never measured.
CollisionWindows lookup_collision_windows(int s, int payload_bytes);

// All embedded window rows, for enumeration and self-checks.
const std::vector<CollisionWindows>& collision_window_table();

}  // namespace lorafb
