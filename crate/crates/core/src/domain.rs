//! Integration domains and the quadratic feasibility penalties on nodes and
//! weights.
//!
//! Every penalty entry depends on a single decision variable, so the
//! penalty Jacobian is diagonal in the decision-vector layout.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::Family;
use crate::error::{Error, Result};

/// Default lower bound enforced on weights.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Box,
    GaussianUnbounded,
}

/// Axis-aligned box of infeasible points.
///
/// A node inside the box is pushed out through the nearest face among
/// `penalty_axes`: the entry for that axis is `scale * depth^2`, where
/// `depth` is the distance to the face. With all axes listed the penalty is
/// continuous and vanishes on the region boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRegion {
    pub ranges: Vec<(f64, f64)>,
    #[serde(default)]
    pub penalty_axes: Vec<usize>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl PenaltyRegion {
    pub fn new(ranges: Vec<(f64, f64)>) -> Self {
        let penalty_axes = (0..ranges.len()).collect();
        PenaltyRegion {
            ranges,
            penalty_axes,
            scale: 1.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.ranges
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &v)| lo < v && v < hi)
    }

    fn axes(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        if self.penalty_axes.is_empty() {
            Box::new(0..self.ranges.len())
        } else {
            Box::new(self.penalty_axes.iter().copied())
        }
    }

    /// `(axis, depth, d depth / d x_axis)` of the exit face, if inside.
    fn exit(&self, x: &[f64]) -> Option<(usize, f64, f64)> {
        if !self.contains(x) {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for a in self.axes() {
            let (lo, hi) = self.ranges[a];
            let (depth, slope) = if x[a] - lo <= hi - x[a] {
                (x[a] - lo, 1.0)
            } else {
                (hi - x[a], -1.0)
            };
            if best.is_none_or(|b| depth < b.1) {
                best = Some((a, depth, slope));
            }
        }
        best
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.ranges.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.ranges.len(),
            });
        }
        if self.ranges.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument("region ranges need lo < hi".into()));
        }
        if let Some(&a) = self.penalty_axes.iter().find(|&&a| a >= dim) {
            return Err(Error::AxisOutOfRange { axis: a, dim });
        }
        if !(self.scale > 0.0) {
            return Err(Error::InvalidArgument("region scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Feasible box in basis coordinates (empty for unbounded domains).
    pub bounds: Vec<(f64, f64)>,
    pub weight_family: Family,
    pub forbidden_regions: Vec<PenaltyRegion>,
    pub weight_floor: f64,
    dim: usize,
}

impl DomainSpec {
    /// `[-1, 1]^d` with the given bounded family.
    pub fn reference_box(dim: usize, family: Family) -> Self {
        Self::with_bounds(family, vec![(-1.0, 1.0); dim]).expect("valid reference box")
    }

    pub fn with_bounds(family: Family, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("domain needs d >= 1".into()));
        }
        if bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument("box bounds need lo < hi".into()));
        }
        Ok(DomainSpec {
            kind: DomainKind::Box,
            dim: bounds.len(),
            bounds,
            weight_family: family,
            forbidden_regions: Vec::new(),
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        })
    }

    /// `R^d` with the standard normal weight.
    pub fn gaussian(dim: usize) -> Self {
        DomainSpec {
            kind: DomainKind::GaussianUnbounded,
            bounds: Vec::new(),
            weight_family: Family::HermiteProbabilist,
            forbidden_regions: Vec::new(),
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            dim,
        }
    }

    /// Natural domain of a classical family.
    pub fn for_family(dim: usize, family: Family) -> Self {
        match family.support() {
            Some((lo, hi)) => Self::with_bounds(family, vec![(lo, hi); dim]).expect("valid box"),
            None => {
                let mut g = Self::gaussian(dim);
                g.weight_family = family;
                g
            }
        }
    }

    pub fn with_regions(mut self, regions: Vec<PenaltyRegion>) -> Result<Self> {
        for r in &regions {
            r.validate(self.dim)?;
        }
        self.forbidden_regions = regions;
        Ok(self)
    }

    pub fn with_weight_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidArgument("weight floor must be positive".into()));
        }
        self.weight_floor = floor;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Penalty value and derivative for coordinate `axis` of the node `x`.
    fn coord_penalty(&self, x: &[f64], axis: usize) -> (f64, f64) {
        let mut val = 0.0;
        let mut der = 0.0;
        if self.kind == DomainKind::Box {
            let (lo, hi) = self.bounds[axis];
            let v = x[axis];
            if v > hi {
                val += (v - hi) * (v - hi);
                der += 2.0 * (v - hi);
            } else if v < lo {
                val += (lo - v) * (lo - v);
                der -= 2.0 * (lo - v);
            }
        }
        for r in &self.forbidden_regions {
            if let Some((a, depth, slope)) = r.exit(x) {
                if a == axis {
                    val += r.scale * depth * depth;
                    der += r.scale * 2.0 * depth * slope;
                }
            }
        }
        (val, der)
    }

    fn weight_penalty(&self, w: f64) -> (f64, f64) {
        let v = self.weight_floor - w;
        if v > 0.0 {
            (v * v, -2.0 * v)
        } else {
            (0.0, 0.0)
        }
    }

    /// True when the node lies in the box (if any) and outside every region.
    pub fn is_feasible(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|j| self.coord_penalty(x, j).0 == 0.0)
            && !self.forbidden_regions.iter().any(|r| r.contains(x))
    }

    pub fn in_forbidden_region(&self, x: &[f64]) -> bool {
        self.forbidden_regions.iter().any(|r| r.contains(x))
    }

    /// Moves `x` onto the exit face of any region containing it, returning
    /// the axes that were moved. The result lies on region boundaries, which
    /// count as feasible.
    pub fn project_out_of_regions(&self, x: &mut [f64]) -> Vec<usize> {
        let mut moved = Vec::new();
        for _ in 0..=self.forbidden_regions.len() {
            let Some(r) = self.forbidden_regions.iter().find(|r| r.contains(x)) else {
                break;
            };
            let (a, _, slope) = r.exit(x).expect("contained point has an exit");
            let (lo, hi) = r.ranges[a];
            x[a] = if slope > 0.0 { lo } else { hi };
            if !moved.contains(&a) {
                moved.push(a);
            }
        }
        moved
    }

    /// Scaled root of the summed per-axis region penalties at `x`, the form
    /// used for plotting composite-region penalties.
    pub fn aggregate_region_penalty(&self, x: &[f64], factor: f64) -> f64 {
        let s: f64 = (0..self.dim).map(|j| self.coord_penalty(x, j).0).sum();
        factor * s.sqrt()
    }

    /// Loads forbidden regions from the JSON region-file format.
    pub fn read_regions(path: &Path) -> Result<Vec<PenaltyRegion>> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-coordinate node penalties, node-major (`n * d` entries).
pub fn node_penalties(domain: &DomainSpec, coords: &[f64]) -> Vec<f64> {
    let d = domain.dim;
    let mut out = Vec::with_capacity(coords.len());
    for x in coords.chunks_exact(d) {
        for j in 0..d {
            out.push(domain.coord_penalty(x, j).0);
        }
    }
    out
}

/// `(max(0, floor - w_j))^2` for every weight.
pub fn weight_penalties(domain: &DomainSpec, weights: &[f64]) -> Vec<f64> {
    weights.iter().map(|&w| domain.weight_penalty(w).0).collect()
}

/// Diagonal Jacobian of all `(d + 1) n` penalties with respect to the
/// decision vector `(coords, weights)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyJacobian {
    pub diag: Vec<f64>,
}

impl PenaltyJacobian {
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag))
    }
}

/// Penalty values and their diagonal Jacobian in one pass.
pub fn penalties_with_jacobian(domain: &DomainSpec, coords: &[f64], weights: &[f64]) -> (Vec<f64>, PenaltyJacobian) {
    let d = domain.dim;
    let mut val = Vec::with_capacity(coords.len() + weights.len());
    let mut diag = Vec::with_capacity(coords.len() + weights.len());
    for x in coords.chunks_exact(d) {
        for j in 0..d {
            let (v, g) = domain.coord_penalty(x, j);
            val.push(v);
            diag.push(g);
        }
    }
    for &w in weights {
        let (v, g) = domain.weight_penalty(w);
        val.push(v);
        diag.push(g);
    }
    (val, PenaltyJacobian { diag })
}

pub fn penalty_jacobian(domain: &DomainSpec, coords: &[f64], weights: &[f64]) -> PenaltyJacobian {
    penalties_with_jacobian(domain, coords, weights).1
}

/// `P^2 = sum_j P_j^2` over node and weight penalties.
pub fn total_penalty_sq(domain: &DomainSpec, coords: &[f64], weights: &[f64]) -> f64 {
    penalties_with_jacobian(domain, coords, weights)
        .0
        .iter()
        .map(|p| p * p)
        .sum()
}

/// The "U" test geometry on `[-1, 1]^2`: the slot between the two uprights
/// plus a box approximation of the rounded bowl beneath it.
pub fn u_shape_regions() -> Vec<PenaltyRegion> {
    vec![
        PenaltyRegion::new(vec![(-0.4, 0.4), (-0.35, 0.95)]),
        PenaltyRegion::new(vec![(-0.4, 0.4), (-0.5, -0.35)]),
        PenaltyRegion::new(vec![(-0.3, 0.3), (-0.62, -0.5)]),
        PenaltyRegion::new(vec![(-0.15, 0.15), (-0.72, -0.62)]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(d: usize) -> DomainSpec {
        DomainSpec::reference_box(d, Family::Legendre)
    }

    #[test]
    fn box_coordinate_penalties() {
        let dom = unit_box(1);
        assert_eq!(node_penalties(&dom, &[1.5]), vec![0.25]);
        assert_eq!(node_penalties(&dom, &[0.0]), vec![0.0]);
        assert_eq!(node_penalties(&dom, &[-1.25]), vec![0.0625]);
    }

    #[test]
    fn u_shape_slot_penalty() {
        let dom = unit_box(2)
            .with_regions(vec![PenaltyRegion::new(vec![(-0.4, 0.4), (-0.35, 0.95)])])
            .unwrap();
        let p = node_penalties(&dom, &[0.2, 0.0]);
        assert_relative_eq!(p[0], 0.04, epsilon = 1e-15);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn weight_penalty_values() {
        let dom = unit_box(1);
        let p = weight_penalties(&dom, &[0.5, -0.1, 0.0]);
        assert_eq!(p[0], 0.0);
        assert_relative_eq!(p[1], (1e-6f64 + 0.1).powi(2), epsilon = 1e-18);
        assert_relative_eq!(p[2], 1e-12, epsilon = 1e-24);
    }

    #[test]
    fn gaussian_domain_has_no_node_penalties() {
        let dom = DomainSpec::gaussian(2);
        assert!(node_penalties(&dom, &[50.0, -80.0]).iter().all(|&p| p == 0.0));
        assert!(weight_penalties(&dom, &[-1.0])[0] > 0.0);
    }

    #[test]
    fn jacobian_examples() {
        let dom = unit_box(2);
        let j = penalty_jacobian(&dom, &[0.1, -0.2], &[0.5]);
        assert!(j.diag.iter().all(|&g| g == 0.0));
        let j = penalty_jacobian(&dom, &[1.5, 0.0], &[0.5]);
        assert_relative_eq!(j.diag[0], 1.0);
        assert_eq!(j.to_dense().nrows(), 3);
    }

    fn fd_check(dom: &DomainSpec, coords: &[f64], weights: &[f64]) {
        let (_, jac) = penalties_with_jacobian(dom, coords, weights);
        let h = 1e-7;
        let mut flat: Vec<f64> = coords.iter().chain(weights).copied().collect();
        let nc = coords.len();
        for k in 0..flat.len() {
            let orig = flat[k];
            flat[k] = orig + h;
            let (p1, _) = penalties_with_jacobian(dom, &flat[..nc], &flat[nc..]);
            flat[k] = orig - h;
            let (p0, _) = penalties_with_jacobian(dom, &flat[..nc], &flat[nc..]);
            flat[k] = orig;
            let fd = (p1[k] - p0[k]) / (2.0 * h);
            assert!((fd - jac.diag[k]).abs() <= 1e-6, "entry {k}: {fd} vs {}", jac.diag[k]);
            // Off-diagonal entries vanish.
            for (m, (a, b)) in p1.iter().zip(&p0).enumerate() {
                if m != k {
                    assert!(((a - b) / (2.0 * h)).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn jacobian_vs_finite_differences() {
        let dom = unit_box(2).with_regions(u_shape_regions()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let coords: Vec<f64> = (0..6).map(|_| rng.random_range(-1.6..1.6)).collect();
            let weights: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            fd_check(&dom, &coords, &weights);
        }
    }

    #[test]
    fn zero_on_feasible_set() {
        let dom = unit_box(2).with_regions(u_shape_regions()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut count = 0;
        while count < 1000 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            if dom.forbidden_regions.iter().any(|r| r.contains(&x)) {
                continue;
            }
            count += 1;
            assert!(node_penalties(&dom, &x).iter().all(|&p| p == 0.0));
            assert!(dom.is_feasible(&x));
        }
    }

    #[test]
    fn continuous_across_boundaries() {
        let dom = unit_box(2).with_regions(u_shape_regions()).unwrap();
        let eps = 1e-8;
        // Box face, region side face, region top face.
        for (x, axis) in [([1.0, 0.0], 0usize), ([0.4, 0.3], 0), ([0.0, 0.95], 1)] {
            let (mut a, mut b) = (x, x);
            a[axis] -= eps;
            b[axis] += eps;
            let (pa, ja) = penalties_with_jacobian(&dom, &a, &[1.0]);
            let (pb, jb) = penalties_with_jacobian(&dom, &b, &[1.0]);
            for k in 0..2 {
                assert!((pa[k] - pb[k]).abs() <= 1e-14);
                assert!((ja.diag[k] - jb.diag[k]).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn sum_of_squares_identity() {
        let dom = unit_box(2);
        let coords = [1.5, -1.2, 0.3, 2.0];
        let weights = [-0.1, 0.2];
        let mut want = 0.0;
        for p in node_penalties(&dom, &coords)
            .iter()
            .chain(&weight_penalties(&dom, &weights))
        {
            want += p * p;
        }
        assert_relative_eq!(total_penalty_sq(&dom, &coords, &weights), want);
    }

    #[test]
    fn region_validation() {
        let bad = PenaltyRegion::new(vec![(0.5, 0.1), (0.0, 1.0)]);
        assert!(unit_box(2).with_regions(vec![bad]).is_err());
        let wrong_dim = PenaltyRegion::new(vec![(0.0, 1.0)]);
        assert!(unit_box(2).with_regions(vec![wrong_dim]).is_err());
    }

    #[test]
    fn region_json() {
        let text = r#"[{"ranges": [[-0.4, 0.4], [-0.35, 0.95]], "penalty_axes": [0], "scale": 10.0}]"#;
        let regions: Vec<PenaltyRegion> = serde_json::from_str(text).unwrap();
        assert_eq!(regions[0].penalty_axes, vec![0]);
        assert_eq!(regions[0].scale, 10.0);
        let d = unit_box(2).with_regions(regions).unwrap();
        let p = node_penalties(&d, &[0.0, 0.9]);
        assert_relative_eq!(p[0], 10.0 * 0.16, epsilon = 1e-14);
        assert_eq!(p[1], 0.0);
    }
}
