//! Precomputed single-change success probabilities over a normalized grid.
//!
//! Only relative motion matters in the event model, so six raw parameters
//! collapse to four normalized coordinates:
//!
//! * `d_hat` — relative swept distance `|Δv|·d/v1` over the median headway,
//! * `g_hat` — critical gap over the median headway,
//! * `sigma` — log-scale of the headway distribution,
//! * `t_hat` — drift distance spent changing lanes, `t·|Δv|`, over the median.
//!
//! Cells are estimated by [`simulate_base_case`] on the canonical problem
//! (median headway 1, ego speed 1, unit drift), then cleaned up by isotonic
//! regression so the stored values are non-decreasing along `d_hat` and
//! non-increasing along `g_hat` despite Monte Carlo noise.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::base_case::simulate_base_case;
use super::LaneParams;
use crate::error::{Error, Result};
use crate::headway::LogNormalHeadway;

/// On-disk format version; bumped on any layout change.
pub const TABLE_FORMAT_VERSION: u32 = 1;

/// The four axis grids, each strictly increasing with at least two nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableGrids {
    pub d_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    pub t_hat: Vec<f64>,
}

impl TableGrids {
    /// Default grids: log-like spacing where the surface curves fastest,
    /// dense enough along `g_hat` and `sigma` that the per-gap acceptance
    /// probability moves only moderately across one cell.
    pub fn default_grids() -> Self {
        Self {
            d_hat: vec![
                0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0,
            ],
            g_hat: vec![0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            sigma: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1],
            t_hat: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }

    pub fn cell_count(&self) -> usize {
        self.d_hat.len() * self.g_hat.len() * self.sigma.len() * self.t_hat.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("d_hat", &self.d_hat),
            ("g_hat", &self.g_hat),
            ("sigma", &self.sigma),
            ("t_hat", &self.t_hat),
        ] {
            if axis.len() < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {name} needs at least 2 nodes, has {}",
                    axis.len()
                )));
            }
            for w in axis.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::InvalidGrid(format!(
                        "axis {name} must be strictly increasing, saw {} then {}",
                        w[0], w[1]
                    )));
                }
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGrid(format!("axis {name} has non-finite nodes")));
            }
        }
        Ok(())
    }
}

/// What the isotonic clean-up did to the raw Monte Carlo estimates.
#[derive(Debug, Clone, Copy, Default)]
pub struct IsotonicReport {
    /// Largest absolute change applied to any cell.
    pub max_correction: f64,
    /// Alternating projection passes until stable.
    pub passes: usize,
}

/// Normalized single-change success probabilities with multilinear
/// interpolation. Values are stored row-major with `d_hat` slowest.
///
/// Queries do not interpolate the stored surface directly, for two reasons.
/// It is discontinuous along `d_hat = t_hat`: below that sheet the change
/// cannot finish in time (probability exactly zero), at it the
/// immediate-acceptance share P(straddling gap >= g_hat) appears at once.
/// And past the sheet the failure probability decays roughly exponentially
/// with the number of gaps swept, so a linear chord between the log-spaced
/// nodes undershoots the saturating curve. Queries therefore add the share
/// in closed form and blend the conditional residual failure
/// `1 - residual / (1 - share)` geometrically (linear in log space), which
/// is exact for exponential decay and keeps every monotonicity guarantee.
/// `log_residual_failure` caches the per-node decomposition; it is derived,
/// never persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCaseTable {
    grids: TableGrids,
    values: Vec<f64>,
    log_residual_failure: Vec<f64>,
    trials_per_cell: u64,
    master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one cell, independent of build schedule.
fn cell_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ (index as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Canonical problem for one cell: median headway 1, ego speed 1, unit drift.
fn canonical_cell(d_hat: f64, g_hat: f64, sigma: f64, t_hat: f64, trials: u64, seed: u64) -> f64 {
    let lane = LaneParams {
        v: 2.0,
        headway: LogNormalHeadway::new(0.0, sigma),
        g: g_hat,
        t: t_hat,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_base_case(d_hat, 1.0, &lane, trials, &mut rng)
}

/// Equal-weight pool-adjacent-violators, non-decreasing.
fn pava_non_decreasing(y: &mut [f64]) {
    let n = y.len();
    let mut mean = Vec::with_capacity(n);
    let mut count: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let mut m = y[i];
        let mut c = 1usize;
        while let Some(&last) = mean.last() {
            if last > m {
                let lc = count.pop().unwrap();
                let lm = mean.pop().unwrap();
                m = (m * c as f64 + lm * lc as f64) / (c + lc) as f64;
                c += lc;
            } else {
                break;
            }
        }
        mean.push(m);
        count.push(c);
    }
    let mut pos = 0;
    for (m, c) in mean.iter().zip(&count) {
        y[pos..pos + c].fill(*m);
        pos += c;
    }
}

impl BaseCaseTable {
    /// Build the table: one independently seeded Monte Carlo stream per cell
    /// (deterministic regardless of schedule), then isotonic clean-up along
    /// the monotone axes.
    pub fn build(grids: TableGrids, trials_per_cell: u64, master_seed: u64) -> Result<(Self, IsotonicReport)> {
        grids.validate()?;
        if trials_per_cell == 0 {
            return Err(Error::Config("trials_per_cell must be positive".into()));
        }
        let (nd, ng, ns, nt) = (
            grids.d_hat.len(),
            grids.g_hat.len(),
            grids.sigma.len(),
            grids.t_hat.len(),
        );
        let raw: Vec<f64> = (0..grids.cell_count())
            .into_par_iter()
            .map(|idx| {
                let it = idx % nt;
                let is = (idx / nt) % ns;
                let ig = (idx / (nt * ns)) % ng;
                let id = idx / (nt * ns * ng);
                canonical_cell(
                    grids.d_hat[id],
                    grids.g_hat[ig],
                    grids.sigma[is],
                    grids.t_hat[it],
                    trials_per_cell,
                    cell_seed(master_seed, idx),
                )
            })
            .collect();

        let mut values = raw.clone();
        let mut passes = 0;
        // Alternate the two monotonicity projections until stable.
        loop {
            passes += 1;
            let before = values.clone();
            // non-decreasing along d_hat
            let d_stride = ng * ns * nt;
            for rest in 0..d_stride {
                let mut line: Vec<f64> = (0..nd).map(|i| values[i * d_stride + rest]).collect();
                pava_non_decreasing(&mut line);
                for (i, v) in line.into_iter().enumerate() {
                    values[i * d_stride + rest] = v;
                }
            }
            // non-increasing along g_hat
            let g_stride = ns * nt;
            for id in 0..nd {
                for rest in 0..g_stride {
                    let base = id * ng * g_stride + rest;
                    let mut line: Vec<f64> =
                        (0..ng).map(|j| -values[base + j * g_stride]).collect();
                    pava_non_decreasing(&mut line);
                    for (j, v) in line.into_iter().enumerate() {
                        values[base + j * g_stride] = -v;
                    }
                }
            }
            let delta = values
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if delta < 1e-12 || passes >= 100 {
                break;
            }
        }
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        let max_correction = values
            .iter()
            .zip(&raw)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        let mut table = Self {
            grids,
            values,
            log_residual_failure: Vec::new(),
            trials_per_cell,
            master_seed,
        };
        table.validate()?;
        table.rebuild_interpolant();
        Ok((table, IsotonicReport { max_correction, passes }))
    }

    /// Per-node log conditional residual failure. The residual is the stored
    /// value minus the immediate-acceptance share where finishing is
    /// feasible at all, floored at zero (Monte Carlo noise can undershoot
    /// the share slightly); the conditional failure is what is left of the
    /// non-immediate mass.
    fn rebuild_interpolant(&mut self) {
        const RF_FLOOR: f64 = 1e-15;
        let (nd, ng, ns, nt) = (
            self.grids.d_hat.len(),
            self.grids.g_hat.len(),
            self.grids.sigma.len(),
            self.grids.t_hat.len(),
        );
        let clearance: Vec<f64> = (0..ng * ns)
            .map(|jk| {
                let headway = LogNormalHeadway::new(0.0, self.grids.sigma[jk % ns]);
                super::straddling_gap_clearance(&headway, self.grids.g_hat[jk / ns])
            })
            .collect();
        self.log_residual_failure = vec![0.0; self.values.len()];
        for id in 0..nd {
            for ig in 0..ng {
                for is in 0..ns {
                    for it in 0..nt {
                        let idx = self.index(id, ig, is, it);
                        let feasible = self.grids.d_hat[id] >= self.grids.t_hat[it];
                        let share = if feasible { clearance[ig * ns + is] } else { 0.0 };
                        let residual = (self.values[idx] - share).max(0.0);
                        let rf = if 1.0 - share < RF_FLOOR {
                            // the immediate share saturates the cell
                            1.0
                        } else {
                            1.0 - residual / (1.0 - share)
                        };
                        self.log_residual_failure[idx] = rf.clamp(RF_FLOOR, 1.0).ln();
                    }
                }
            }
        }
    }

    pub fn grids(&self) -> &TableGrids {
        &self.grids
    }

    pub fn trials_per_cell(&self) -> u64 {
        self.trials_per_cell
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn index(&self, id: usize, ig: usize, is: usize, it: usize) -> usize {
        ((id * self.grids.g_hat.len() + ig) * self.grids.sigma.len() + is) * self.grids.t_hat.len()
            + it
    }

    /// Stored value at a grid node.
    pub fn value_at(&self, id: usize, ig: usize, is: usize, it: usize) -> f64 {
        self.values[self.index(id, ig, is, it)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multilinear interpolation of the stored values over the four axes.
    /// Coordinates outside the grids clamp to the boundary. Prefer
    /// [`BaseCaseTable::lookup`] for physical queries; near `d_hat = t_hat`
    /// the raw surface is discontinuous and direct interpolation smears it.
    pub fn interpolate(&self, d_hat: f64, g_hat: f64, sigma: f64, t_hat: f64) -> f64 {
        self.interpolate_array(&self.values, d_hat, g_hat, sigma, t_hat, true)
    }

    /// Collapse the log-residual-failure surface at fixed (g_hat, sigma,
    /// t_hat) into one value per d_hat node, for repeated lookups against
    /// the same lane. Returns the line and a copy of the d_hat axis.
    pub(crate) fn collapse_failure_line(
        &self,
        g_hat: f64,
        sigma: f64,
        t_hat: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let (j0, wg) = bracket(&self.grids.g_hat, g_hat);
        let (k0, ws) = bracket(&self.grids.sigma, sigma);
        let (l0, wt) = bracket(&self.grids.t_hat, t_hat);
        let line = (0..self.grids.d_hat.len())
            .map(|i| {
                let mut acc = 0.0;
                for (dj, fg) in [(0, 1.0 - wg), (1, wg)] {
                    if fg == 0.0 {
                        continue;
                    }
                    for (dk, fs) in [(0, 1.0 - ws), (1, ws)] {
                        if fs == 0.0 {
                            continue;
                        }
                        for (dl, ft) in [(0, 1.0 - wt), (1, wt)] {
                            if ft == 0.0 {
                                continue;
                            }
                            acc += fg
                                * fs
                                * ft
                                * self.log_residual_failure
                                    [self.index(i, j0 + dj, k0 + dk, l0 + dl)];
                        }
                    }
                }
                acc
            })
            .collect();
        (line, self.grids.d_hat.clone())
    }

    fn interpolate_array(
        &self,
        array: &[f64],
        d_hat: f64,
        g_hat: f64,
        sigma: f64,
        t_hat: f64,
        clamp_unit: bool,
    ) -> f64 {
        let (i0, wd) = bracket(&self.grids.d_hat, d_hat);
        let (j0, wg) = bracket(&self.grids.g_hat, g_hat);
        let (k0, ws) = bracket(&self.grids.sigma, sigma);
        let (l0, wt) = bracket(&self.grids.t_hat, t_hat);
        let mut acc = 0.0;
        for (di, fd) in [(0, 1.0 - wd), (1, wd)] {
            if fd == 0.0 {
                continue;
            }
            for (dj, fg) in [(0, 1.0 - wg), (1, wg)] {
                if fg == 0.0 {
                    continue;
                }
                for (dk, fs) in [(0, 1.0 - ws), (1, ws)] {
                    if fs == 0.0 {
                        continue;
                    }
                    for (dl, ft) in [(0, 1.0 - wt), (1, wt)] {
                        if ft == 0.0 {
                            continue;
                        }
                        acc += fd
                            * fg
                            * fs
                            * ft
                            * array[self.index(i0 + di, j0 + dj, k0 + dk, l0 + dl)];
                    }
                }
            }
        }
        if clamp_unit {
            acc.clamp(0.0, 1.0)
        } else {
            acc
        }
    }

    /// Check all structural invariants: grid shape, value range, and the two
    /// monotonicity guarantees.
    pub fn validate(&self) -> Result<()> {
        self.grids.validate()?;
        if self.values.len() != self.grids.cell_count() {
            return Err(Error::TableFormat(format!(
                "value count {} does not match grid cell count {}",
                self.values.len(),
                self.grids.cell_count()
            )));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::TableFormat("trials_per_cell must be positive".into()));
        }
        for &v in &self.values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::TableFormat(format!("value {v} outside [0, 1]")));
            }
        }
        let tol = 1e-9;
        let (nd, ng, ns, nt) = (
            self.grids.d_hat.len(),
            self.grids.g_hat.len(),
            self.grids.sigma.len(),
            self.grids.t_hat.len(),
        );
        for id in 0..nd.saturating_sub(1) {
            for ig in 0..ng {
                for is in 0..ns {
                    for it in 0..nt {
                        if self.value_at(id + 1, ig, is, it) < self.value_at(id, ig, is, it) - tol {
                            return Err(Error::TableFormat(
                                "values decrease along the d_hat axis".into(),
                            ));
                        }
                    }
                }
            }
        }
        for ig in 0..ng.saturating_sub(1) {
            for id in 0..nd {
                for is in 0..ns {
                    for it in 0..nt {
                        if self.value_at(id, ig + 1, is, it) > self.value_at(id, ig, is, it) + tol {
                            return Err(Error::TableFormat(
                                "values increase along the g_hat axis".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile {
            format_version: TABLE_FORMAT_VERSION,
            d_hat: self.grids.d_hat.clone(),
            g_hat: self.grids.g_hat.clone(),
            sigma: self.grids.sigma.clone(),
            t_hat: self.grids.t_hat.clone(),
            trials_per_cell: self.trials_per_cell,
            master_seed: self.master_seed,
            values: self.values.clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        if file.format_version != TABLE_FORMAT_VERSION {
            return Err(Error::TableFormat(format!(
                "unsupported format version {} (expected {TABLE_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let mut table = Self {
            grids: TableGrids {
                d_hat: file.d_hat,
                g_hat: file.g_hat,
                sigma: file.sigma,
                t_hat: file.t_hat,
            },
            values: file.values,
            log_residual_failure: Vec::new(),
            trials_per_cell: file.trials_per_cell,
            master_seed: file.master_seed,
        };
        table.validate()?;
        table.rebuild_interpolant();
        Ok(table)
    }
}

/// Bracketing index and weight for one axis, clamped to the boundary.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let hi = axis.partition_point(|&a| a <= x);
    let lo = hi - 1;
    ((lo), (x - axis[lo]) / (axis[hi] - axis[lo]))
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format_version: u32,
    d_hat: Vec<f64>,
    g_hat: Vec<f64>,
    sigma: Vec<f64>,
    t_hat: Vec<f64>,
    trials_per_cell: u64,
    master_seed: u64,
    values: Vec<f64>,
}
