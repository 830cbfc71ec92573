//! Deterministic urban-macro radio simulator.
//!
//! Sites sit on a hexagonal lattice, each carrying `sectors_per_station`
//! directional cells. UEs are dropped uniformly over the union of the site
//! hexagons. For a tilt vector the simulator attaches every UE to its strongest
//! cell and reports three per-cell risk KPIs in `[0, 1]`.
//!
//! Coverage and quality are measured over a cell's nominal footprint: the UEs
//! it would serve best if every cell sat at the mid-range tilt. The footprint
//! is fixed by the layout, so a cell cannot improve its own figures by
//! shedding edge UEs onto neighbours.
//!
//! * `cov`: share of footprint UEs whose serving received power is below
//!   [`SimConfig::rsrp_coverage_threshold_dbm`],
//! * `qual`: share of footprint UEs whose SINR is below
//!   [`SimConfig::sinr_quality_threshold_db`],
//! * `cap`: attached offered load over a nominal per-cell capacity of
//!   `2 * traffic_volume_mbps / n_cells`, i.e. `n_attached * n_cells / (2 * n_ues)`,
//!   clamped to `[0, 1]`. A cell carrying exactly its fair share reports 0.5.
//!
//! The channel has no fading or shadowing; received power is
//! `tx_power + max_gain - pattern_loss - pathloss`. Received power is the
//! wideband carrier power, so the coverage threshold is on that scale rather
//! than per resource element.

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Vertical side-lobe attenuation cap (dB).
pub const VERTICAL_SIDELOBE_DB: f64 = 20.0;
/// Horizontal front-to-back attenuation cap (dB).
pub const HORIZONTAL_MAX_ATTENUATION_DB: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_base_stations: usize,
    pub sectors_per_station: usize,
    pub n_ues: usize,
    pub carrier_freq_hz: f64,
    pub traffic_volume_mbps: f64,
    pub antenna_height_m: f64,
    pub min_tilt_deg: f64,
    pub max_tilt_deg: f64,
    pub inter_site_distance_m: f64,
    pub ue_height_m: f64,
    /// Wideband received-power level below which a UE counts as uncovered.
    pub rsrp_coverage_threshold_dbm: f64,
    pub sinr_quality_threshold_db: f64,
    pub tx_power_dbm: f64,
    pub vertical_beamwidth_deg: f64,
    pub horizontal_beamwidth_deg: f64,
    pub max_antenna_gain_dbi: f64,
    /// Thermal noise over a 10 MHz carrier.
    pub noise_floor_dbm: f64,
    /// Seed for the UE drop. The network layout is a property of the
    /// deployment, so it stays fixed across experiment seeds.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_base_stations: 7,
            sectors_per_station: 3,
            n_ues: 2000,
            carrier_freq_hz: 2e9,
            traffic_volume_mbps: 20.0,
            antenna_height_m: 32.0,
            min_tilt_deg: 1.0,
            max_tilt_deg: 16.0,
            inter_site_distance_m: 1000.0,
            ue_height_m: 1.5,
            rsrp_coverage_threshold_dbm: -60.0,
            sinr_quality_threshold_db: 0.0,
            tx_power_dbm: 46.0,
            vertical_beamwidth_deg: 10.0,
            horizontal_beamwidth_deg: 65.0,
            max_antenna_gain_dbi: 15.0,
            noise_floor_dbm: -104.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn n_cells(&self) -> usize {
        self.n_base_stations * self.sectors_per_station
    }

    pub fn tilt_span(&self) -> f64 {
        self.max_tilt_deg - self.min_tilt_deg
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and > 0, got {v}")))
            }
        }
        fn finite(field: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, "must be finite"))
            }
        }
        for (field, v) in [
            ("n_base_stations", self.n_base_stations),
            ("sectors_per_station", self.sectors_per_station),
            ("n_ues", self.n_ues),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be > 0"));
            }
        }
        positive("carrier_freq_hz", self.carrier_freq_hz)?;
        positive("traffic_volume_mbps", self.traffic_volume_mbps)?;
        positive("antenna_height_m", self.antenna_height_m)?;
        positive("inter_site_distance_m", self.inter_site_distance_m)?;
        positive("vertical_beamwidth_deg", self.vertical_beamwidth_deg)?;
        positive("horizontal_beamwidth_deg", self.horizontal_beamwidth_deg)?;
        if !(self.ue_height_m.is_finite() && self.ue_height_m >= 0.0) {
            return Err(Error::config("ue_height_m", "must be finite and >= 0"));
        }
        finite("rsrp_coverage_threshold_dbm", self.rsrp_coverage_threshold_dbm)?;
        finite("sinr_quality_threshold_db", self.sinr_quality_threshold_db)?;
        finite("tx_power_dbm", self.tx_power_dbm)?;
        finite("max_antenna_gain_dbi", self.max_antenna_gain_dbi)?;
        finite("noise_floor_dbm", self.noise_floor_dbm)?;
        for (field, v) in [
            ("min_tilt_deg", self.min_tilt_deg),
            ("max_tilt_deg", self.max_tilt_deg),
        ] {
            if !(0.0..=90.0).contains(&v) {
                return Err(Error::config(field, format!("must lie in [0, 90], got {v}")));
            }
        }
        if self.min_tilt_deg > self.max_tilt_deg {
            return Err(Error::config(
                "min_tilt_deg",
                format!(
                    "must not exceed max_tilt_deg ({} > {})",
                    self.min_tilt_deg, self.max_tilt_deg
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub site_positions: Vec<Point>,
    pub cell_positions: Vec<Point>,
    pub cell_azimuths_deg: Vec<f64>,
    pub ue_positions: Vec<Point>,
}

impl NetworkLayout {
    pub fn n_cells(&self) -> usize {
        self.cell_positions.len()
    }

    /// Whether `p` lies in the hexagonal service area of some site.
    pub fn in_service_area(&self, p: Point, inter_site_distance_m: f64) -> bool {
        self.site_positions.iter().any(|s| {
            in_hexagon(
                Point {
                    x: p.x - s.x,
                    y: p.y - s.y,
                },
                inter_site_distance_m,
            )
        })
    }

    /// Relabel cells: cell `i` of the result is cell `perm[i]` of `self`.
    pub fn permute_cells(&self, perm: &[usize]) -> NetworkLayout {
        NetworkLayout {
            site_positions: self.site_positions.clone(),
            cell_positions: perm.iter().map(|&i| self.cell_positions[i]).collect(),
            cell_azimuths_deg: perm.iter().map(|&i| self.cell_azimuths_deg[i]).collect(),
            ue_positions: self.ue_positions.clone(),
        }
    }
}

// Hexagon centred at the origin whose flat sides face the six lattice
// neighbours at distance `isd`.
fn in_hexagon(p: Point, isd: f64) -> bool {
    let apothem = isd / 2.0 + 1e-9;
    [0.0f64, 60.0, 120.0].iter().all(|deg| {
        let (s, c) = deg.to_radians().sin_cos();
        (p.x * c + p.y * s).abs() <= apothem
    })
}

/// Axial hex coordinates ordered by ring, then counter-clockwise from 0°.
fn hex_lattice(n: usize) -> Vec<(i64, i64)> {
    let mut coords = vec![(0i64, 0i64)];
    let mut ring = 1i64;
    while coords.len() < n {
        let mut ring_coords = Vec::new();
        for q in -ring..=ring {
            for r in -ring..=ring {
                let s = -q - r;
                if q.abs().max(r.abs()).max(s.abs()) == ring {
                    ring_coords.push((q, r));
                }
            }
        }
        ring_coords.sort_by(|a, b| {
            let angle = |&(q, r): &(i64, i64)| {
                let (x, y) = axial_to_xy(q, r, 1.0);
                let a = y.atan2(x);
                if a < -1e-12 {
                    a + std::f64::consts::TAU
                } else {
                    a.max(0.0)
                }
            };
            angle(a).total_cmp(&angle(b))
        });
        coords.extend(ring_coords);
        ring += 1;
    }
    coords.truncate(n);
    coords
}

fn axial_to_xy(q: i64, r: i64, isd: f64) -> (f64, f64) {
    let (q, r) = (q as f64, r as f64);
    (isd * (q + r / 2.0), isd * r * 3f64.sqrt() / 2.0)
}

pub fn build_layout(config: &SimConfig) -> Result<NetworkLayout> {
    config.validate()?;
    let isd = config.inter_site_distance_m;
    let site_positions: Vec<Point> = hex_lattice(config.n_base_stations)
        .into_iter()
        .map(|(q, r)| {
            let (x, y) = axial_to_xy(q, r, isd);
            Point { x, y }
        })
        .collect();

    let mut cell_positions = Vec::with_capacity(config.n_cells());
    let mut cell_azimuths_deg = Vec::with_capacity(config.n_cells());
    let sector_step = 360.0 / config.sectors_per_station as f64;
    for site in &site_positions {
        for s in 0..config.sectors_per_station {
            cell_positions.push(*site);
            cell_azimuths_deg.push(s as f64 * sector_step);
        }
    }

    let mut rng = stream_rng(config.seed, stream::LAYOUT, 0);
    let half_w = isd / 2.0;
    let half_h = isd / 3f64.sqrt();
    let mut ue_positions = Vec::with_capacity(config.n_ues);
    while ue_positions.len() < config.n_ues {
        let site = site_positions[rng.gen_range(0..site_positions.len())];
        let p = Point {
            x: rng.gen_range(-half_w..=half_w),
            y: rng.gen_range(-half_h..=half_h),
        };
        if in_hexagon(p, isd) {
            ue_positions.push(Point {
                x: site.x + p.x,
                y: site.y + p.y,
            });
        }
    }

    Ok(NetworkLayout {
        site_positions,
        cell_positions,
        cell_azimuths_deg,
        ue_positions,
    })
}

/// Parabolic sector-antenna attenuation in dB, each plane capped separately.
pub fn pattern_loss(vertical_off_deg: f64, horizontal_off_deg: f64, config: &SimConfig) -> f64 {
    vertical_loss(vertical_off_deg, config.vertical_beamwidth_deg)
        + horizontal_loss(horizontal_off_deg, config.horizontal_beamwidth_deg)
}

#[inline]
fn vertical_loss(off_deg: f64, beamwidth_deg: f64) -> f64 {
    let x = off_deg / beamwidth_deg;
    (12.0 * x * x).min(VERTICAL_SIDELOBE_DB)
}

#[inline]
fn horizontal_loss(off_deg: f64, beamwidth_deg: f64) -> f64 {
    let x = off_deg / beamwidth_deg;
    (12.0 * x * x).min(HORIZONTAL_MAX_ATTENUATION_DB)
}

/// Urban-macro log-distance pathloss at 2 GHz; distances below 1 m are clamped.
pub fn pathloss(distance_m: f64, _config: &SimConfig) -> f64 {
    128.1 + 37.6 * (distance_m.max(1.0) / 1000.0).log10()
}

fn wrap_degrees(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltVector(Vec<f64>);

impl TiltVector {
    pub fn new(tilts_deg: Vec<f64>, config: &SimConfig) -> Result<Self> {
        let v = TiltVector(tilts_deg);
        v.check(config)?;
        Ok(v)
    }

    pub fn uniform(tilt_deg: f64, config: &SimConfig) -> Result<Self> {
        Self::new(vec![tilt_deg; config.n_cells()], config)
    }

    pub fn check(&self, config: &SimConfig) -> Result<()> {
        if self.0.len() != config.n_cells() {
            return Err(Error::Contract(format!(
                "tilt vector has {} entries, network has {} cells",
                self.0.len(),
                config.n_cells()
            )));
        }
        for (c, &t) in self.0.iter().enumerate() {
            if !(t.is_finite() && t >= config.min_tilt_deg && t <= config.max_tilt_deg) {
                return Err(Error::Domain(format!(
                    "tilt {t} of cell {c} outside [{}, {}]",
                    config.min_tilt_deg, config.max_tilt_deg
                )));
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-cell risk KPIs; high values mean high risk.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, Deserialize)]
pub struct CellKpis {
    pub cov: f64,
    pub cap: f64,
    pub qual: f64,
}

impl CellKpis {
    pub fn new(cov: f64, cap: f64, qual: f64) -> Result<Self> {
        let k = CellKpis { cov, cap, qual };
        k.check()?;
        Ok(k)
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("cov", self.cov), ("cap", self.cap), ("qual", self.qual)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("KPI {name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cov, self.cap, self.qual]
    }

    /// Sum of squared risks, the argument of the reward's logarithm.
    pub fn squared_risk(&self) -> f64 {
        self.cov * self.cov + self.cap * self.cap + self.qual * self.qual
    }
}

/// Tilt-independent link terms for every (UE, cell) pair.
///
/// Only the vertical pattern term depends on the tilt, so everything else is
/// folded into `static_dbm` once per layout.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    n_cells: usize,
    n_ues: usize,
    static_dbm: Vec<f64>,
    elevation_deg: Vec<f64>,
    /// Cell whose footprint each UE belongs to for coverage and quality.
    nominal_cell: Vec<usize>,
    nominal_count: Vec<usize>,
}

impl Simulator {
    pub fn new(layout: &NetworkLayout, config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let n_cells = layout.n_cells();
        if n_cells != config.n_cells() || layout.cell_azimuths_deg.len() != n_cells {
            return Err(Error::Contract(format!(
                "layout has {n_cells} cells, configuration expects {}",
                config.n_cells()
            )));
        }
        let n_ues = layout.ue_positions.len();
        let dh = config.antenna_height_m - config.ue_height_m;
        let mut static_dbm = Vec::with_capacity(n_ues * n_cells);
        let mut elevation_deg = Vec::with_capacity(n_ues * n_cells);
        for ue in &layout.ue_positions {
            for (cell, az) in layout.cell_positions.iter().zip(&layout.cell_azimuths_deg) {
                let dx = ue.x - cell.x;
                let dy = ue.y - cell.y;
                let d2 = dx.hypot(dy);
                let d3 = d2.hypot(dh);
                let bearing = dy.atan2(dx).to_degrees();
                let h_off = wrap_degrees(bearing - az);
                static_dbm.push(
                    config.tx_power_dbm + config.max_antenna_gain_dbi
                        - pathloss(d3, config)
                        - horizontal_loss(h_off, config.horizontal_beamwidth_deg),
                );
                elevation_deg.push(dh.atan2(d2).to_degrees());
            }
        }
        let reference_tilt = 0.5 * (config.min_tilt_deg + config.max_tilt_deg);
        let mut nominal_cell = Vec::with_capacity(n_ues);
        let mut nominal_count = vec![0usize; n_cells];
        for ue in 0..n_ues {
            let row = ue * n_cells;
            let mut best = 0usize;
            let mut best_dbm = f64::NEG_INFINITY;
            for c in 0..n_cells {
                let rx = static_dbm[row + c]
                    - vertical_loss(elevation_deg[row + c] - reference_tilt, config.vertical_beamwidth_deg);
                if rx > best_dbm {
                    best_dbm = rx;
                    best = c;
                }
            }
            nominal_cell.push(best);
            nominal_count[best] += 1;
        }
        Ok(Self {
            config: config.clone(),
            n_cells,
            n_ues,
            static_dbm,
            elevation_deg,
            nominal_cell,
            nominal_count,
        })
    }

    pub fn from_config(config: &SimConfig) -> Result<Self> {
        Self::new(&build_layout(config)?, config)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of UEs in each cell's nominal footprint: the UEs the cell
    /// serves best when every cell sits at the mid-range tilt.
    pub fn nominal_counts(&self) -> &[usize] {
        &self.nominal_count
    }

    pub fn kpis(&self, tilts: &TiltVector) -> Result<Vec<CellKpis>> {
        tilts.check(&self.config)?;
        let tilts = tilts.as_slice();
        let cfg = &self.config;
        let noise_mw = db_to_linear(cfg.noise_floor_dbm);
        let mut attached = vec![0usize; self.n_cells];
        let mut uncovered = vec![0usize; self.n_cells];
        let mut poor_quality = vec![0usize; self.n_cells];
        let mut rx_mw = vec![0.0; self.n_cells];

        for ue in 0..self.n_ues {
            let row = ue * self.n_cells;
            let mut best = 0usize;
            let mut best_dbm = f64::NEG_INFINITY;
            for c in 0..self.n_cells {
                let rx = self.static_dbm[row + c]
                    - vertical_loss(
                        self.elevation_deg[row + c] - tilts[c],
                        cfg.vertical_beamwidth_deg,
                    );
                if rx > best_dbm {
                    best_dbm = rx;
                    best = c;
                }
                rx_mw[c] = db_to_linear(rx);
            }
            let interference: f64 = rx_mw
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != best)
                .map(|(_, p)| p)
                .sum();
            let sinr_db = 10.0 * (rx_mw[best] / (interference + noise_mw)).log10();
            attached[best] += 1;
            let home = self.nominal_cell[ue];
            if best_dbm < cfg.rsrp_coverage_threshold_dbm {
                uncovered[home] += 1;
            }
            if sinr_db < cfg.sinr_quality_threshold_db {
                poor_quality[home] += 1;
            }
        }

        let load_scale = self.n_cells as f64 / (2.0 * self.n_ues as f64);
        Ok((0..self.n_cells)
            .map(|c| {
                let home = self.nominal_count[c];
                let frac = |k: usize| if home == 0 { 0.0 } else { k as f64 / home as f64 };
                CellKpis {
                    cov: frac(uncovered[c]).clamp(0.0, 1.0),
                    cap: (attached[c] as f64 * load_scale).clamp(0.0, 1.0),
                    qual: frac(poor_quality[c]).clamp(0.0, 1.0),
                }
            })
            .collect())
    }
}

#[inline]
fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One-shot KPI evaluation. Repeated evaluation on a fixed layout should go
/// through [`Simulator`], which caches the tilt-independent terms.
pub fn compute_kpis(
    layout: &NetworkLayout,
    tilts: &TiltVector,
    config: &SimConfig,
) -> Result<Vec<CellKpis>> {
    Simulator::new(layout, config)?.kpis(tilts)
}
