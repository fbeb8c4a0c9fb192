//! Independent reference computations for the test suites.
//!
//! Nothing here calls into the library's kinematics; each oracle rebuilds
//! the quantity from first principles so a shared bug cannot hide.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector2};

pub type V2 = Vector2<f64>;

/// Walks the chain from the head: each segment is a rigid link of length
/// `2l` whose center sits `l` from both of its joints. Returns segment
/// centers, segment headings and the joints between segments.
pub fn walk_chain(l: f64, deflections: &[f64]) -> (Vec<V2>, Vec<f64>, Vec<V2>) {
    let mut centers = vec![V2::zeros()];
    let mut headings: Vec<f64> = vec![0.0];
    let mut joints = Vec::new();
    for d in deflections {
        let c = *centers.last().unwrap();
        let h = *headings.last().unwrap();
        let joint = c - l * V2::new(h.cos(), h.sin());
        // a positive deflection bends the rest of the chain toward +y,
        // i.e. it turns the following segment clockwise
        let next_h = h - d;
        centers.push(joint - l * V2::new(next_h.cos(), next_h.sin()));
        headings.push(next_h);
        joints.push(joint);
    }
    (centers, headings, joints)
}

/// Central finite difference of segment centers under constant deflection
/// rates `ddot` (rates of the deflection, i.e. `-θ̇`).
pub fn fd_center_velocity(l: f64, deflections: &[f64], ddot: &[f64], i: usize, h: f64) -> V2 {
    let plus: Vec<f64> = deflections.iter().zip(ddot).map(|(d, r)| d + h * r).collect();
    let minus: Vec<f64> = deflections.iter().zip(ddot).map(|(d, r)| d - h * r).collect();
    (walk_chain(l, &plus).0[i - 1] - walk_chain(l, &minus).0[i - 1]) / (2.0 * h)
}

/// Rigid twist `(vx, vy, ω)` at the origin from a generic linear
/// least-squares solve (Cholesky on the normal equations) of `v_i = (vx - ω y_i, vy + ω x_i)`.
pub fn lsq_twist(points: &[V2], velocities: &[V2]) -> (f64, f64, f64) {
    let n = points.len();
    let mut a = DMatrix::zeros(2 * n, 3);
    let mut b = DVector::zeros(2 * n);
    for (k, (p, v)) in points.iter().zip(velocities).enumerate() {
        a[(2 * k, 0)] = 1.0;
        a[(2 * k, 2)] = -p.y;
        a[(2 * k + 1, 1)] = 1.0;
        a[(2 * k + 1, 2)] = p.x;
        b[2 * k] = v.x;
        b[2 * k + 1] = v.y;
    }
    let ata = a.transpose() * &a;
    let x = ata.cholesky().expect("full-rank points").solve(&(a.transpose() * b));
    (x[0], x[1], x[2])
}

/// Distance from point `q` to the line through `p` with direction `dir`.
pub fn point_line_distance(q: V2, p: V2, dir: V2) -> f64 {
    let d = dir.normalize();
    let r = q - p;
    (r.x * d.y - r.y * d.x).abs()
}

/// M-shape segment centers along `y_m`: `(3, 1, -1, -3)·l·cos(θ'/2)`.
pub fn m_centers_y(l: f64, theta_m: f64) -> [f64; 4] {
    let c = ((std::f64::consts::PI - theta_m) / 2.0).cos();
    [3.0 * l * c, l * c, -l * c, -3.0 * l * c]
}

/// Closed-form response of a proportional loop around a rate-limited
/// integrator: slews at `rate_limit` until `kp·e` drops below it, then
/// decays exponentially. Returns the time to enter a band of `frac·e0`.
pub fn p_loop_settling_time(e0: f64, kp: f64, rate_limit: f64, frac: f64) -> f64 {
    let knee = rate_limit / kp;
    let band = frac * e0;
    if e0 <= band {
        return 0.0;
    }
    if knee <= band {
        return (e0 - band) / rate_limit;
    }
    let slew = if e0 > knee { (e0 - knee) / rate_limit } else { 0.0 };
    slew + (e0.min(knee) / band).ln() / kp
}
