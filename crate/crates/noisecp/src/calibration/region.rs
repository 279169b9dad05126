//! Confidence regions for the off-diagonal entries of `V`.

use nalgebra::DMatrix;

use crate::contamination::BlockStructure;
use crate::error::{Error, Result};

const TOL: f64 = 1e-12;

/// Simultaneous bounds `v_low <= V <= v_upp` on the off-diagonal entries of
/// `V`, holding with probability at least `1 - alpha_v`, together with an
/// a-priori bound `v_bar` on their magnitudes. Diagonal entries are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRegion {
    k: usize,
    v_low: DMatrix<f64>,
    v_upp: DMatrix<f64>,
    v_bar: DMatrix<f64>,
    alpha_v: f64,
    zeta_upp: Vec<f64>,
}

impl NoiseRegion {
    /// When `zeta_upp` is `None` each row uses its widest band, `max_l (v_upp - v_low)`.
    pub fn new(
        v_low: DMatrix<f64>,
        v_upp: DMatrix<f64>,
        v_bar: DMatrix<f64>,
        alpha_v: f64,
        zeta_upp: Option<Vec<f64>>,
    ) -> Result<Self> {
        let k = v_low.nrows();
        for m in [&v_low, &v_upp, &v_bar] {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::DimensionMismatch { expected: k, got: m.ncols() });
            }
        }
        if !(0.0..1.0).contains(&alpha_v) {
            return Err(Error::RegionInvariantViolation(format!("alpha_v {alpha_v} outside [0,1)")));
        }
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                let (lo, up, bar) = (v_low[(a, b)], v_upp[(a, b)], v_bar[(a, b)].abs());
                if !(lo <= up + TOL) {
                    return Err(Error::RegionInvariantViolation(format!("low > upp at ({a},{b})")));
                }
                if lo.abs() > bar + TOL || up.abs() > bar + TOL {
                    return Err(Error::RegionInvariantViolation(format!("a-priori bound exceeded at ({a},{b})")));
                }
            }
        }
        let mut region = Self { k, v_low, v_upp, v_bar, alpha_v, zeta_upp: Vec::new() };
        region.zeta_upp = match zeta_upp {
            Some(z) => {
                if z.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, got: z.len() });
                }
                if z.iter().any(|x| !(*x >= 0.0)) {
                    return Err(Error::RegionInvariantViolation("negative zeta".into()));
                }
                z
            }
            None => (0..k).map(|a| region.max_width(a)).collect(),
        };
        Ok(region)
    }

    /// The zero-width region at a known `V`.
    pub fn degenerate(v: &DMatrix<f64>) -> Result<Self> {
        Self::new(v.clone(), v.clone(), v.abs(), 0.0, Some(vec![0.0; v.nrows()]))
    }

    /// Region implied by an interval `[xi_low, xi_upp]` for `xi = eps / (1 - eps)`
    /// under randomized response with noisy frequencies `rho_tilde`. `xi_bar`
    /// is an a-priori upper bound on `xi`.
    pub fn from_rr_interval(
        xi_low: f64,
        xi_upp: f64,
        xi_bar: f64,
        rho_tilde: &[f64],
        alpha_v: f64,
    ) -> Result<Self> {
        check_interval(xi_low, xi_upp, xi_bar)?;
        let k = rho_tilde.len();
        let kf = k as f64;
        if let Some(a) = (0..k).find(|&a| !(kf * rho_tilde[a] + xi_bar * (kf * rho_tilde[a] - 1.0) > 0.0)) {
            return Err(Error::RegionInvariantViolation(format!(
                "xi bound {xi_bar} incompatible with noisy frequency {} of label {a}",
                rho_tilde[a]
            )));
        }
        // V_kl is decreasing in xi, so the endpoints map to the bounds.
        let v = |xi: f64| {
            DMatrix::from_fn(k, k, |a, b| {
                if a == b {
                    0.0
                } else {
                    -xi * rho_tilde[b] / (kf * rho_tilde[a] + xi * (kf * rho_tilde[a] - 1.0))
                }
            })
        };
        let (v_low, v_upp, v_bar) = (v(xi_upp), v(xi_low), v(xi_bar));
        // V_upp - V is proportional to rho_tilde[l] within a row
        let zeta = (0..k)
            .map(|a| {
                let others = (0..k).filter(|&b| b != a);
                let hi = others.clone().map(|b| rho_tilde[b]).fold(f64::MIN, f64::max);
                let lo = others.map(|b| rho_tilde[b]).fold(f64::MAX, f64::min);
                let b = if a == 0 { 1 } else { 0 };
                (v_upp[(a, b)] - v_low[(a, b)]) / rho_tilde[b] * (hi - lo)
            })
            .collect();
        Self::new(v_low, v_upp, v_bar, alpha_v, Some(zeta))
    }

    /// Region implied by intervals on `xi` and `nu` for the two-level model
    /// with uniform frequencies.
    pub fn from_two_level_interval(
        k: usize,
        (xi_low, xi_upp): (f64, f64),
        (nu_low, nu_upp): (f64, f64),
        xi_bar: f64,
        alpha_v: f64,
    ) -> Result<Self> {
        let blocks = BlockStructure::new(k)?;
        check_interval(xi_low, xi_upp, xi_bar)?;
        if !(0.0 <= nu_low && nu_low <= nu_upp && nu_upp <= 1.0) {
            return Err(Error::RegionInvariantViolation(format!("bad nu interval [{nu_low}, {nu_upp}]")));
        }
        let kf = k as f64;
        let within = |xi: f64, nu: f64| -(xi / kf) * (1.0 + nu * (1.0 + 2.0 * xi)) / (1.0 + nu * xi);
        let cross = |xi: f64, nu: f64| -(xi / kf) * (1.0 - nu) / (1.0 + nu * xi);
        let fill = |w: f64, c: f64| {
            DMatrix::from_fn(k, k, |a, b| {
                if a == b {
                    0.0
                } else if blocks.same_block(a, b) {
                    w
                } else {
                    c
                }
            })
        };
        let v_upp = fill(within(xi_low, nu_low), cross(xi_low, nu_upp));
        let v_low = fill(within(xi_upp, nu_upp), cross(xi_upp, nu_low));
        let v_bar = fill(-2.0 * xi_bar / kf, -xi_bar / kf);
        let (xl, xu, nl, nu) = (xi_low, xi_upp, nu_low, nu_upp);
        // spread between within-block and cross-block gaps over the box
        let g = |xi: f64, n: f64| xi * n * (1.0 + xi) / (1.0 + n * xi);
        let zeta = 2.0 / kf * (g(xu, nu) - g(xl, nl)).abs()
            + xl / kf * (nu - nl) * (1.0 + xl) / ((1.0 + nl * xl) * (1.0 + nu * xl));
        Self::new(v_low, v_upp, v_bar, alpha_v, Some(vec![zeta.max(0.0); k]))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn v_low(&self) -> &DMatrix<f64> {
        &self.v_low
    }

    pub fn v_upp(&self) -> &DMatrix<f64> {
        &self.v_upp
    }

    pub fn v_bar(&self) -> &DMatrix<f64> {
        &self.v_bar
    }

    pub fn alpha_v(&self) -> f64 {
        self.alpha_v
    }

    pub fn zeta_upp(&self, k: usize) -> f64 {
        self.zeta_upp[k]
    }

    pub fn width(&self, k: usize, l: usize) -> f64 {
        self.v_upp[(k, l)] - self.v_low[(k, l)]
    }

    /// Widest band in row `k`.
    pub fn max_width(&self, k: usize) -> f64 {
        (0..self.k).filter(|&l| l != k).map(|l| self.width(k, l)).fold(0.0, f64::max)
    }

    /// Whether the off-diagonal entries of `v` lie inside the region.
    pub fn contains(&self, v: &DMatrix<f64>) -> bool {
        (0..self.k).all(|a| {
            (0..self.k)
                .filter(|&b| b != a)
                .all(|b| self.v_low[(a, b)] - TOL <= v[(a, b)] && v[(a, b)] <= self.v_upp[(a, b)] + TOL)
        })
    }
}

fn check_interval(low: f64, upp: f64, bar: f64) -> Result<()> {
    if !(0.0 <= low && low <= upp && upp <= bar + TOL && bar.is_finite()) {
        return Err(Error::RegionInvariantViolation(format!("bad xi interval [{low}, {upp}] with bound {bar}")));
    }
    Ok(())
}
