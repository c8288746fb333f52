//! Smooth partition of unity `{θ_{j,k}}`, `ψ_k` over the balls of one level.
//!
//! With `w = Σ_j θ̃_{j,k}`, the weights are `θ_{j,k} = η(w)·θ̃_{j,k}/w` and
//! `ψ_k = 1 − η(w)`. Since `η(t) = t` on `[0, 1/2]` and `η = 1` on `[1, ∞)`,
//! `ψ_k` vanishes wherever some `θ̃_{j,k} = 1`, i.e. on `V_k^9`.

use crate::geom::Vector;
use crate::nets::{scale, Ccbp};

/// Quintic smoothstep `s³(10 − 15s + 6s²)` on `[0, 1]`, clamped outside,
/// with its first and second derivatives.
pub fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s2 = s * s;
        let v = s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
        let dv = 30.0 * s2 * (1.0 - s) * (1.0 - s);
        let d2v = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        (v, dv, d2v)
    }
}

/// Radial and normalizing profiles of the partition.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BumpProfile;

impl BumpProfile {
    /// `θ(ρ)`: 1 on `[0, 9]`, `1 − smoothstep(ρ − 9)` on `[9, 10]`, 0 beyond.
    pub fn theta(&self, rho: f64) -> (f64, f64, f64) {
        let (v, dv, d2v) = smoothstep(rho - 9.0);
        (1.0 - v, -dv, -d2v)
    }

    /// `η(t)`: `t` on `[0, 1/2]`, `1/2 + p(2t − 1)/2` on `[1/2, 1]` with the
    /// Hermite quintic `p(u) = u + 4u³ − 7u⁴ + 3u⁵` (`p(0) = 0`, `p'(0) = 1`,
    /// `p''(0) = 0`, `p(1) = 1`, `p'(1) = p''(1) = 0`), and 1 beyond.
    pub fn eta(&self, t: f64) -> (f64, f64, f64) {
        if t <= 0.5 {
            (t, 1.0, 0.0)
        } else if t >= 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            let u = 2.0 * t - 1.0;
            let u2 = u * u;
            let p = u + u2 * u * (4.0 - 7.0 * u + 3.0 * u2);
            let dp = 1.0 + u2 * (12.0 - 28.0 * u + 15.0 * u2);
            let d2p = u * (24.0 - 84.0 * u + 60.0 * u2);
            (0.5 + 0.5 * p, dp, 2.0 * d2p)
        }
    }
}

/// `θ̃(y) = θ(|y − center|/r)` and its gradient.
pub fn theta_tilde_at(center: &Vector, r: f64, y: &Vector) -> (f64, Vector) {
    let delta = y - center;
    let dist = delta.norm();
    let rho = dist / r;
    let (v, dv, _) = BumpProfile.theta(rho);
    if dv == 0.0 || dist == 0.0 {
        return (v, Vector::zeros(y.len()));
    }
    (v, delta * (dv / (dist * r)))
}

/// `θ̃_{j,k}(y)`.
pub fn theta_tilde(ccbp: &Ccbp, k: usize, j: usize, y: &Vector) -> f64 {
    theta_tilde_at(ccbp.center(k, j), scale(k), y).0
}

/// One nonzero weight of the partition at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTerm {
    pub index: usize,
    pub raw: f64,
    pub theta: f64,
    pub grad: Vector,
}

/// Partition of unity at a point of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub terms: Vec<PartitionTerm>,
    pub psi: f64,
    pub psi_grad: Vector,
    /// `w = Σ_j θ̃_{j,k}(y)`.
    pub raw_sum: f64,
}

impl Partition {
    pub fn theta_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.theta).sum()
    }
}

/// Weights `θ_{j,k}(y)` for the centers with `|y − x_{j,k}| < 10r_k`,
/// `ψ_k(y)`, and their gradients.
pub fn partition(ccbp: &Ccbp, k: usize, y: &Vector) -> Partition {
    let n = y.len();
    let rk = scale(k);
    let mut raws: Vec<(usize, f64, Vector)> = Vec::new();
    for j in ccbp.centers_within_open(k, y, 10.0 * rk) {
        let (v, g) = theta_tilde_at(ccbp.center(k, j), rk, y);
        if v > 0.0 {
            raws.push((j, v, g));
        }
    }
    let w: f64 = raws.iter().map(|r| r.1).sum();
    if w == 0.0 {
        return Partition { terms: Vec::new(), psi: 1.0, psi_grad: Vector::zeros(n), raw_sum: 0.0 };
    }
    let mut w_grad = Vector::zeros(n);
    for (_, _, g) in &raws {
        w_grad += g;
    }
    let (eta, deta, _) = BumpProfile.eta(w);
    let terms = if w <= 0.5 {
        raws.into_iter().map(|(index, raw, grad)| PartitionTerm { index, raw, theta: raw, grad }).collect()
    } else {
        raws.into_iter()
            .map(|(index, raw, grad)| {
                let theta = eta * raw / w;
                let g = (&w_grad * (deta * raw) + &grad * eta) / w - &w_grad * (eta * raw / (w * w));
                PartitionTerm { index, raw, theta, grad: g }
            })
            .collect()
    };
    Partition { terms, psi: 1.0 - eta, psi_grad: w_grad * (-deta), raw_sum: w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{vector, AffinePlane};
    use crate::nets::MultiscaleNet;
    use approx::assert_abs_diff_eq;

    fn ccbp_from(centers: Vec<Vector>) -> Ccbp {
        let net = MultiscaleNet::from_centers(2, vec![centers]).unwrap();
        Ccbp::parallel_to(net, AffinePlane::coordinate(2, 1).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn profiles_hit_their_plateaus_exactly() {
        assert_eq!(BumpProfile.theta(9.0).0, 1.0);
        assert_eq!(BumpProfile.theta(10.0).0, 0.0);
        assert_eq!(BumpProfile.eta(1.0).0, 1.0);
        assert_eq!(BumpProfile.eta(0.5).0, 0.5);
        // η is C² across both junctions.
        let e = 1e-7;
        for t in [0.5, 1.0] {
            let (l, r) = (BumpProfile.eta(t - e), BumpProfile.eta(t + e));
            assert!((l.1 - r.1).abs() < 1e-5 && (l.2 - r.2).abs() < 1e-4);
        }
        for i in 0..=1000 {
            let t = 0.5 + i as f64 / 2000.0;
            assert!(BumpProfile.eta(t).1 >= 0.0);
        }
    }

    #[test]
    fn theta_tilde_gradient_matches_differences() {
        let c = vector(&[0.0, 0.0]);
        let y = vector(&[9.5 * 0.6, 9.5 * 0.8]);
        let (v, g) = theta_tilde_at(&c, 1.0, &y);
        assert_abs_diff_eq!(v, 1.0 - smoothstep(0.5).0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        let h = 1e-6;
        for a in 0..2 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[a] += h;
            ym[a] -= h;
            let fd = (theta_tilde_at(&c, 1.0, &yp).0 - theta_tilde_at(&c, 1.0, &ym).0) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-6);
        }
        assert_eq!(theta_tilde_at(&c, 1.0, &vector(&[10.0, 0.0])).0, 0.0);
        assert_eq!(theta_tilde_at(&c, 1.0, &c).0, 1.0);
    }

    #[test]
    fn isolated_and_empty_configurations() {
        let ccbp = ccbp_from(vec![vector(&[0.0, 0.0])]);
        let p = partition(&ccbp, 0, &vector(&[0.0, 0.0]));
        assert_eq!((p.terms[0].theta, p.psi), (1.0, 0.0));
        let far = partition(&ccbp, 0, &vector(&[10.5, 0.0]));
        assert!(far.terms.is_empty() && far.psi == 1.0);
    }

    #[test]
    fn overlapping_pair_sums_to_one_with_correct_gradients() {
        let ccbp = ccbp_from(vec![vector(&[0.0, 0.0]), vector(&[1.5, 0.0])]);
        for y in [vector(&[10.6, 0.3]), vector(&[5.0, 8.9]), vector(&[-9.4, 0.2]), vector(&[11.0, 0.0])] {
            let p = partition(&ccbp, 0, &y);
            assert!((p.theta_sum() + p.psi - 1.0).abs() < 1e-14);
            let h = 1e-6;
            for a in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[a] += h;
                ym[a] -= h;
                let (pp, pm) = (partition(&ccbp, 0, &yp), partition(&ccbp, 0, &ym));
                let fd_psi = (pp.psi - pm.psi) / (2.0 * h);
                assert!((fd_psi - p.psi_grad[a]).abs() < 1e-6);
                for t in &p.terms {
                    let at = |q: &Partition| q.terms.iter().find(|s| s.index == t.index).map_or(0.0, |s| s.theta);
                    let fd = (at(&pp) - at(&pm)) / (2.0 * h);
                    assert!((fd - t.grad[a]).abs() < 1e-6, "{fd} vs {}", t.grad[a]);
                }
            }
        }
    }
}
