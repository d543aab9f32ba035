use crate::error::{Error, Result};

/// Quadrature rule used for every integral over grid nodes.
///
/// `Gregory` is the composite trapezoid corrected at both ends (weights
/// 3/8, 7/6, 23/24), fourth order; intervals with fewer than five panels fall
/// back to the closed Newton-Cotes rule with the same number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    Trapezoid,
    #[default]
    Gregory,
}

impl Quadrature {
    /// Convergence order of the composite rule.
    pub fn order(self) -> u32 {
        match self {
            Quadrature::Trapezoid => 2,
            Quadrature::Gregory => 4,
        }
    }

    /// Weights for an interval of `panels` steps, returned as end
    /// corrections: node `k` carries weight `1 + left[k]` or
    /// `1 + right[panels - k]`; interior nodes carry 1.  For short intervals
    /// `left` covers every node and `right` is empty.
    pub fn rule(self, panels: usize) -> Rule {
        match (self, panels) {
            (_, 0) => Rule { left: &[], right: &[] },
            (Quadrature::Trapezoid, _) | (Quadrature::Gregory, 1) => Rule {
                left: &[-0.5],
                right: &[-0.5],
            },
            (Quadrature::Gregory, 2) => Rule {
                left: &SIMPSON,
                right: &[],
            },
            (Quadrature::Gregory, 3) => Rule {
                left: &SIMPSON38,
                right: &[],
            },
            (Quadrature::Gregory, 4) => Rule {
                left: &BOOLE,
                right: &[],
            },
            (Quadrature::Gregory, _) => Rule {
                left: &GREGORY,
                right: &GREGORY,
            },
        }
    }

    /// Full weight of node `k` in an interval of `panels` steps.
    pub fn weight(self, panels: usize, k: usize) -> f64 {
        let r = self.rule(panels);
        if panels == 0 {
            return 0.0;
        }
        let mut w = 1.0;
        if k < r.left.len() {
            w += r.left[k];
        }
        if panels - k < r.right.len() {
            w += r.right[panels - k];
        }
        w
    }
}

// corrections relative to unit weight
const SIMPSON: [f64; 3] = [1.0 / 3.0 - 1.0, 4.0 / 3.0 - 1.0, 1.0 / 3.0 - 1.0];
const SIMPSON38: [f64; 4] = [3.0 / 8.0 - 1.0, 9.0 / 8.0 - 1.0, 9.0 / 8.0 - 1.0, 3.0 / 8.0 - 1.0];
const BOOLE: [f64; 5] = [
    14.0 / 45.0 - 1.0,
    64.0 / 45.0 - 1.0,
    24.0 / 45.0 - 1.0,
    64.0 / 45.0 - 1.0,
    14.0 / 45.0 - 1.0,
];
const GREGORY: [f64; 3] = [3.0 / 8.0 - 1.0, 7.0 / 6.0 - 1.0, 23.0 / 24.0 - 1.0];

#[derive(Debug, Clone, Copy)]
pub struct Rule {
    pub left: &'static [f64],
    pub right: &'static [f64],
}

impl Rule {
    /// Nodes (offset from the interval start) whose weight differs from 1,
    /// with the difference.  At most six entries.
    pub fn corrections(&self, panels: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let left = self.left.iter().enumerate().map(|(k, &c)| (k, c));
        let right = self
            .right
            .iter()
            .enumerate()
            .map(move |(k, &c)| (panels - k, c));
        left.chain(right)
    }
}

/// Uniform discretization of `[t_min, t_max]`, shared by every two-time
/// object of one computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_min: f64,
    t_max: f64,
    n_points: usize,
    quadrature: Quadrature,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("n_points = {n_points} < 2")));
        }
        if !(t_min.is_finite() && t_max.is_finite()) || t_max <= t_min {
            return Err(Error::InvalidGrid(format!(
                "interval [{t_min}, {t_max}] is empty or not finite"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            n_points,
            quadrature: Quadrature::default(),
        })
    }

    pub fn with_quadrature(mut self, q: Quadrature) -> Self {
        self.quadrature = q;
        self
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_points - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.t_max
        } else {
            self.t_min + i as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.time(i)).collect()
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Cumulative integrals `∫_{t_0}^{t_i} f` for every node `i`.
    pub fn cumulative(&self, f: &[f64]) -> Vec<f64> {
        cumulative_generic(self, f, 0.0)
    }

    /// Complex-valued variant of [`TimeGrid::cumulative`].
    pub fn cumulative_c(&self, f: &[crate::C64]) -> Vec<crate::C64> {
        cumulative_generic(self, f, crate::C64::new(0.0, 0.0))
    }
}

fn cumulative_generic<T>(grid: &TimeGrid, f: &[T], zero: T) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    assert_eq!(f.len(), grid.len());
    let h = grid.step();
    let q = grid.quadrature();
    let mut prefix = zero;
    let mut out = Vec::with_capacity(f.len());
    for i in 0..f.len() {
        prefix = prefix + f[i];
        let mut s = prefix;
        for (k, c) in q.rule(i).corrections(i) {
            s = s + f[k] * c;
        }
        out.push(if i == 0 { zero } else { s * h });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for q in [Quadrature::Trapezoid, Quadrature::Gregory] {
            for panels in 1..12 {
                let s: f64 = (0..=panels).map(|k| q.weight(panels, k)).sum();
                assert!((s - panels as f64).abs() < 1e-13, "{q:?} {panels}");
            }
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn gregory_integrates_cubics_exactly() {
        let g = TimeGrid::new(0.0, 2.0, 17).unwrap();
        let f: Vec<f64> = g.times().iter().map(|t| t * t * t - 2.0 * t + 1.0).collect();
        let c = g.cumulative(&f);
        // a single trapezoid panel is only exact to first order
        for (i, t) in g.times().iter().enumerate().skip(2) {
            let exact = t.powi(4) / 4.0 - t * t + t;
            assert!((c[i] - exact).abs() < 1e-12, "node {i}");
        }
    }

    #[test]
    fn gregory_converges_at_fourth_order() {
        let err = |n: usize| {
            let g = TimeGrid::new(0.0, 3.0, n).unwrap();
            let f: Vec<f64> = g.times().iter().map(|t| (2.0 * t).sin()).collect();
            let c = g.cumulative(&f);
            (c[n - 1] - (1.0 - 6f64.cos()) / 2.0).abs()
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 12.0 && ratio < 24.0, "ratio {ratio}");
    }
}
