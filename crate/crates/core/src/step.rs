//! Exact arithmetic on piecewise-constant right-continuous step functions.
//!
//! `StepFn` is the carrier for every CDF in the crate: true reward CDFs,
//! off-policy estimates (which may leave [0, 1] before clipping), and
//! conditional model CDFs. Distances are computed on merged breakpoint grids
//! and at left limits, never by sampling, so bound-coverage tests see exact
//! values.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Reward support `[0, D]`. The lower end is fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    /// Upper end `D`, in reward units.
    pub upper: f64,
}

impl SupportInterval {
    pub fn new(upper: f64) -> Result<Self, Error> {
        if !upper.is_finite() || upper <= 0.0 {
            return Err(Error::InvalidSupport { upper });
        }
        Ok(Self { upper })
    }

    #[must_use]
    pub fn contains(&self, t: f64) -> bool {
        (0.0..=self.upper).contains(&t)
    }
}

/// Piecewise-constant right-continuous function.
///
/// The function equals `base` on `(-inf, breakpoints[0])` and `values[j]` on
/// `[breakpoints[j], breakpoints[j+1])`. Breakpoints are strictly increasing
/// and `values.len() == breakpoints.len()`.
///
/// A (sub-)CDF here is a `StepFn` whose sequence `base, values[0], ...,
/// values[m-1]` is nondecreasing within [0, 1]. True CDFs always have
/// `base == 0`; estimator outputs may carry `base > 0`, which encodes
/// completion mass sitting at the lower end of the reward support. A terminal
/// value below 1 marks a sub-CDF (mass deficit, located at the support's
/// upper end by every risk integral in this crate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFn {
    pub base: f64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFn {
    /// Builds a validated step function.
    pub fn new(base: f64, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, Error> {
        let f = Self {
            base,
            breakpoints,
            values,
        };
        f.validate()?;
        Ok(f)
    }

    /// The constant function `c`.
    #[must_use]
    pub fn constant(c: f64) -> Self {
        Self {
            base: c,
            breakpoints: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Checks the structural invariants (finiteness, strictly increasing
    /// breakpoints, matching lengths). Deserialized values must pass through
    /// here before use.
    pub fn validate(&self) -> Result<(), Error> {
        if self.breakpoints.len() != self.values.len() {
            return Err(Error::ValueCountMismatch {
                n_breakpoints: self.breakpoints.len(),
                n_values: self.values.len(),
            });
        }
        if !self.base.is_finite() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                place: "step function value",
            });
        }
        if self.breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::BadBreakpoints);
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadBreakpoints);
        }
        Ok(())
    }

    /// Right-continuous evaluation: `base` below the first breakpoint, else
    /// the value at the largest breakpoint `<= t`.
    #[must_use]
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        if idx == 0 {
            self.base
        } else {
            self.values[idx - 1]
        }
    }

    /// Value after the last breakpoint (`base` for constant functions).
    #[must_use]
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&self.base)
    }

    /// True when `base, values...` is nondecreasing and stays within [0, 1].
    #[must_use]
    pub fn is_cdf(&self) -> bool {
        if !(0.0..=1.0).contains(&self.base) {
            return false;
        }
        let mut prev = self.base;
        for &v in &self.values {
            if !(0.0..=1.0).contains(&v) || v < prev {
                return false;
            }
            prev = v;
        }
        true
    }

    /// Drops breakpoints whose value equals the preceding segment's value.
    #[must_use]
    pub fn normalized(&self) -> Self {
        let mut breakpoints = Vec::with_capacity(self.breakpoints.len());
        let mut values = Vec::with_capacity(self.values.len());
        let mut prev = self.base;
        for (&t, &v) in self.breakpoints.iter().zip(&self.values) {
            if v != prev {
                breakpoints.push(t);
                values.push(v);
                prev = v;
            }
        }
        Self {
            base: self.base,
            breakpoints,
            values,
        }
    }

    /// Builds a cumulative step function from point masses: the result starts
    /// at `base` and jumps by the aggregated mass at each distinct position.
    /// Positions are compared exactly; coincident masses add.
    #[must_use]
    pub fn from_jumps(base: f64, mut jumps: Vec<(f64, f64)>) -> Self {
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints = Vec::with_capacity(jumps.len());
        let mut values = Vec::with_capacity(jumps.len());
        let mut level = base;
        let mut i = 0;
        while i < jumps.len() {
            let t = jumps[i].0;
            let mut mass = 0.0;
            while i < jumps.len() && jumps[i].0 == t {
                mass += jumps[i].1;
                i += 1;
            }
            level += mass;
            breakpoints.push(t);
            values.push(level);
        }
        Self {
            base,
            breakpoints,
            values,
        }
        .normalized()
    }

    /// Point masses of a (sub-)CDF: positive `base` becomes mass at `0.0`,
    /// each breakpoint contributes its jump. Any terminal deficit is not
    /// included; callers decide where missing mass lives.
    #[must_use]
    pub fn jump_masses(&self) -> Vec<(f64, f64)> {
        let mut atoms = Vec::with_capacity(self.values.len() + 1);
        if self.base > 0.0 {
            atoms.push((0.0, self.base));
        }
        let mut prev = self.base;
        for (&t, &v) in self.breakpoints.iter().zip(&self.values) {
            let mass = v - prev;
            if mass != 0.0 {
                match atoms.last_mut() {
                    Some(last) if last.0 == t => last.1 += mass,
                    _ => atoms.push((t, mass)),
                }
            }
            prev = v;
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }

    /// Pointwise `min(max(f, 0), 1)`; equal adjacent values are merged.
    #[must_use]
    pub fn clip_unit(&self) -> Self {
        Self {
            base: self.base.clamp(0.0, 1.0),
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
        .normalized()
    }

    /// Running maximum followed by clipping to [0, 1]. The output is always a
    /// valid (sub-)CDF, and its sup-norm error against any proper CDF never
    /// exceeds the input's.
    #[must_use]
    pub fn monotonize_clip(&self) -> Self {
        let mut running = self.base;
        let base = running.clamp(0.0, 1.0);
        let values = self
            .values
            .iter()
            .map(|&v| {
                running = running.max(v);
                running.clamp(0.0, 1.0)
            })
            .collect();
        Self {
            base,
            breakpoints: self.breakpoints.clone(),
            values,
        }
        .normalized()
    }

    /// Coarsens a proper CDF to `m` equal point masses placed at the
    /// quantiles `(2j - 1) / (2m)`. The sup-norm error is at most `1 / (2m)`.
    pub fn quantile_step_approx(&self, m: usize) -> Result<Self, Error> {
        if !self.is_cdf() {
            return Err(Error::NotACdf {
                reason: "values are not nondecreasing within [0, 1]",
            });
        }
        let terminal = self.terminal();
        if (terminal - 1.0).abs() > 1e-9 {
            return Err(Error::UnassignedMass { terminal });
        }
        if m == 0 {
            return Err(Error::InvalidRiskParameter {
                reason: "quantile approximation needs m >= 1".to_string(),
            });
        }
        let mut breakpoints: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for j in 1..=m {
            let q = (2 * j - 1) as f64 / (2 * m) as f64;
            let idx = self.values.partition_point(|&v| v < q);
            let s = if self.values.is_empty() {
                // Constant base within 1e-9 of 1: a degenerate CDF with all
                // mass already below every breakpoint; place the atom at 0.
                0.0
            } else {
                self.breakpoints[idx.min(self.breakpoints.len() - 1)]
            };
            // Cumulative mass is the exact count ratio j / m, so repeated
            // atoms collapse without accumulating float error.
            let v = j as f64 / m as f64;
            match breakpoints.last() {
                Some(&last) if last == s => *values.last_mut().expect("nonempty") = v,
                _ => {
                    breakpoints.push(s);
                    values.push(v);
                }
            }
        }
        Ok(Self {
            base: 0.0,
            breakpoints,
            values,
        })
    }

    /// Exact pointwise linear combination `sum_i coeff_i * f_i` over the
    /// merged breakpoint grid. Terms are accumulated left to right at every
    /// grid point, so the result is deterministic.
    #[must_use]
    pub fn linear_combination(terms: &[(f64, &StepFn)]) -> Self {
        let mut grid: Vec<f64> = terms
            .iter()
            .flat_map(|(_, f)| f.breakpoints.iter().copied())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let base = terms.iter().map(|(c, f)| c * f.base).sum();
        let values = grid
            .iter()
            .map(|&t| terms.iter().map(|(c, f)| c * f.eval(t)).sum())
            .collect();
        Self {
            base,
            breakpoints: grid,
            values,
        }
        .normalized()
    }

    /// Exact `sup_t |f(t) - g(t)|`, evaluated on the merged breakpoint grid
    /// and at every left limit.
    #[must_use]
    pub fn sup_norm_distance(&self, other: &StepFn) -> f64 {
        let mut best = (self.base - other.base).abs();
        let mut i = 0;
        let mut j = 0;
        let mut fv = self.base;
        let mut gv = other.base;
        while i < self.breakpoints.len() || j < other.breakpoints.len() {
            let tf = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
            let tg = other.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
            if tf <= tg {
                fv = self.values[i];
                i += 1;
            }
            if tg <= tf {
                gv = other.values[j];
                j += 1;
            }
            let d = (fv - gv).abs();
            if d > best {
                best = d;
            }
        }
        best
    }
}

/// Exact `int_0^D |f(t) - g(t)| dt` between two (sub-)CDFs, summed over the
/// constant segments of the merged grid.
///
/// A sub-CDF is implicitly completed by mass at the support's upper end,
/// which leaves the integral unchanged; the value is then the transport
/// cost between the completed distributions.
pub fn wasserstein1(f: &StepFn, g: &StepFn, support: SupportInterval) -> Result<f64, Error> {
    for h in [f, g] {
        if !h.is_cdf() {
            return Err(Error::NotACdf {
                reason: "values are not nondecreasing within [0, 1]",
            });
        }
        if let Some(&t) = h
            .breakpoints
            .iter()
            .find(|&&t| !support.contains(t))
        {
            return Err(Error::OutsideSupport {
                t,
                upper: support.upper,
            });
        }
    }
    let mut total = 0.0;
    let mut pos = 0.0;
    let mut i = 0;
    let mut j = 0;
    let mut fv = f.base;
    let mut gv = g.base;
    loop {
        let tf = f.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
        let tg = g.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
        let t = tf.min(tg);
        if t >= support.upper {
            break;
        }
        if t > pos {
            total += (fv - gv).abs() * (t - pos);
            pos = t;
        }
        if tf <= tg {
            fv = f.values[i];
            i += 1;
        }
        if tg <= tf {
            gv = g.values[j];
            j += 1;
        }
    }
    if pos < support.upper {
        total += (fv - gv).abs() * (support.upper - pos);
    }
    Ok(total)
}
