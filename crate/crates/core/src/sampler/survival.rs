//! Counting-process bookkeeping for the gamma-process Cox model.
//!
//! The grid is the sorted set of unique event times `t_1 < ... < t_M`. Subject
//! `i` is at risk at `t_m` when `time_i >= t_m` and contributes `dN_i(t_m) = 1`
//! at the grid point equal to its event time.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SurvivalGrid {
    grid_times: Vec<f64>,
    /// Right end of the last interval.
    end_time: f64,
    prior_increments: Vec<f64>,
    /// Events at each grid point.
    event_counts: Vec<usize>,
    /// Number of grid points `<= time_i`, i.e. how many intervals subject `i`
    /// is at risk for.
    at_risk_points: Vec<usize>,
    /// Grid index of subject `i`'s event, if it had one.
    event_index: Vec<Option<usize>>,
}

impl SurvivalGrid {
    /// Builds the grid and the prior mean increments `r * (t_m+1 - t_m)`.
    ///
    /// The last interval ends at the largest observed time; when that is
    /// itself the last event time the interval is given the mean spacing of the
    /// grid so its prior increment stays positive.
    pub fn new(time: &[f64], event: &[bool], r: f64) -> Result<Self> {
        if time.len() != event.len() {
            return Err(Error::DimensionMismatch {
                what: "event indicator length",
                expected: time.len(),
                got: event.len(),
            });
        }
        let mut grid_times: Vec<f64> = time
            .iter()
            .zip(event)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        grid_times.sort_by(f64::total_cmp);
        grid_times.dedup();
        if grid_times.is_empty() {
            return Err(Error::invalid("survival outcome", "no observed events"));
        }
        let m = grid_times.len();
        let last = grid_times[m - 1];
        let max_time = time.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let end_time = if max_time > last {
            max_time
        } else {
            let spacing = if m > 1 {
                (last - grid_times[0]) / (m - 1) as f64
            } else {
                last
            };
            last + spacing
        };
        let prior_increments: Vec<f64> = (0..m)
            .map(|k| {
                let next = if k + 1 < m { grid_times[k + 1] } else { end_time };
                r * (next - grid_times[k])
            })
            .collect();

        let mut event_counts = vec![0usize; m];
        let mut at_risk_points = Vec::with_capacity(time.len());
        let mut event_index = Vec::with_capacity(time.len());
        for (&t, &e) in time.iter().zip(event) {
            let k = grid_times.partition_point(|&g| g <= t);
            at_risk_points.push(k);
            if e {
                event_counts[k - 1] += 1;
                event_index.push(Some(k - 1));
            } else {
                event_index.push(None);
            }
        }
        Ok(SurvivalGrid {
            grid_times,
            end_time,
            prior_increments,
            event_counts,
            at_risk_points,
            event_index,
        })
    }

    pub fn len(&self) -> usize {
        self.grid_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_times.is_empty()
    }

    pub fn grid_times(&self) -> &[f64] {
        &self.grid_times
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// `dΛ*_m`.
    pub fn prior_increments(&self) -> &[f64] {
        &self.prior_increments
    }

    /// `sum_i dN_i(t_m)`.
    pub fn event_counts(&self) -> &[usize] {
        &self.event_counts
    }

    /// `Y_i(t_m)`.
    pub fn at_risk(&self, i: usize, m: usize) -> bool {
        m < self.at_risk_points[i]
    }

    /// `dN_i(t_m)`.
    pub fn d_n(&self, i: usize, m: usize) -> u32 {
        u32::from(self.event_index[i] == Some(m))
    }


    /// `sum_i Y_i(t_m) exp(eta_i)` for every grid point.
    pub fn risk_sums(&self, eta: &[f64]) -> Vec<f64> {
        self.risk_totals(eta.iter().map(|e| e.exp()))
    }

    /// `sum_i Y_i(t_m) v_i` for every grid point.
    pub fn risk_totals(&self, values: impl IntoIterator<Item = f64>) -> Vec<f64> {
        let m = self.len();
        // subjects leave the risk set after grid point at_risk_points[i] - 1
        let mut exits = vec![0.0; m + 1];
        for (&k, v) in self.at_risk_points.iter().zip(values) {
            exits[k] += v;
        }
        let mut sums = vec![0.0; m];
        let mut acc = 0.0;
        for k in (0..m).rev() {
            acc += exits[k + 1];
            sums[k] = acc;
        }
        sums
    }

    /// Shape of each increment's conditional, `c0 dΛ*_m + sum_i dN_i(t_m)`.
    pub fn posterior_shapes(&self, c0: f64) -> Vec<f64> {
        self.prior_increments
            .iter()
            .zip(&self.event_counts)
            .map(|(&prior, &d)| c0 * prior + d as f64)
            .collect()
    }

    /// Cumulative baseline hazard at each subject's observed time.
    pub fn cumulative_at_subjects(&self, increments: &[f64]) -> Vec<f64> {
        let mut prefix = Vec::with_capacity(increments.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &d in increments {
            acc += d;
            prefix.push(acc);
        }
        self.at_risk_points.iter().map(|&k| prefix[k]).collect()
    }

    /// Gamma shape and rate of each increment's full conditional:
    /// `Gamma(c0 dΛ*_m + sum_i dN_i(t_m), c0 + sum_i Y_i(t_m) exp(eta_i))`.
    pub fn increment_conditionals(&self, eta: &[f64], c0: f64) -> Vec<(f64, f64)> {
        self.risk_sums(eta)
            .into_iter()
            .zip(self.posterior_shapes(c0))
            .map(|(s, shape)| (shape, c0 + s))
            .collect()
    }

    /// Nelson–Aalen cumulative hazard at the end of follow-up.
    pub fn nelson_aalen_total(&self) -> f64 {
        let zeros = vec![0.0; self.at_risk_points.len()];
        self.risk_sums(&zeros)
            .iter()
            .zip(&self.event_counts)
            .map(|(&at_risk, &d)| d as f64 / at_risk)
            .sum()
    }
}
