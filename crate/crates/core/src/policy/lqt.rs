//! Waypoint planning between consecutive tool poses: finite-horizon linear
//! quadratic tracking on a per-coordinate double integrator, then a short
//! moving-average smoother.

use serde::{Deserialize, Serialize};

use crate::sim::ToolPose;

/// Waypoints per planned segment, both endpoints included.
pub const WAYPOINTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqtConfig {
    /// Running weight on the tracking error.
    pub tracking: f64,
    /// Running weight on the acceleration input.
    pub effort: f64,
    /// Terminal weight on the position error.
    pub terminal_position: f64,
    /// Terminal weight on the velocity.
    pub terminal_velocity: f64,
    /// Moving-average window, odd.
    pub smooth_window: usize,
}

impl Default for LqtConfig {
    fn default() -> Self {
        Self { tracking: 1.0, effort: 1e-3, terminal_position: 1e8, terminal_velocity: 1e4, smooth_window: 5 }
    }
}

type M2 = [[f64; 2]; 2];

/// Feedback gains `u_k = −K_k·[e_k, v_k]` for `steps` steps of unit total
/// duration, from the backward Riccati recursion.
pub fn riccati_gains(cfg: &LqtConfig, steps: usize) -> Vec<[f64; 2]> {
    let dt = 1.0 / steps as f64;
    let a: M2 = [[1.0, dt], [0.0, 1.0]];
    let b = [0.5 * dt * dt, dt];
    let mut p: M2 = [[cfg.terminal_position, 0.0], [0.0, cfg.terminal_velocity]];
    let mut gains = vec![[0.0; 2]; steps];
    for k in (0..steps).rev() {
        // P·B and Bᵀ·P·B.
        let pb = [p[0][0] * b[0] + p[0][1] * b[1], p[1][0] * b[0] + p[1][1] * b[1]];
        let s = cfg.effort + b[0] * pb[0] + b[1] * pb[1];
        // Bᵀ·P·A, a row vector.
        let bpa = [pb[0] * a[0][0] + pb[1] * a[1][0], pb[0] * a[0][1] + pb[1] * a[1][1]];
        let kk = [bpa[0] / s, bpa[1] / s];
        gains[k] = kk;
        // A − B·K.
        let acl: M2 = [[a[0][0] - b[0] * kk[0], a[0][1] - b[0] * kk[1]], [a[1][0] - b[1] * kk[0], a[1][1] - b[1] * kk[1]]];
        // P ← Q + Aᵀ·P·(A − B·K).
        let pa = mat_mul(&p, &acl);
        let at = [[a[0][0], a[1][0]], [a[0][1], a[1][1]]];
        let mut next = mat_mul(&at, &pa);
        next[0][0] += cfg.tracking;
        // Symmetrize against round-off drift.
        let off = 0.5 * (next[0][1] + next[1][0]);
        next[0][1] = off;
        next[1][0] = off;
        p = next;
    }
    gains
}

fn mat_mul(x: &M2, y: &M2) -> M2 {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

/// Closed-loop positions of one coordinate driven from `start` (at rest)
/// towards `goal`; `steps + 1` values.
pub fn track_scalar(gains: &[[f64; 2]], start: f64, goal: f64) -> Vec<f64> {
    let dt = 1.0 / gains.len() as f64;
    let (mut e, mut v) = (start - goal, 0.0);
    let mut out = Vec::with_capacity(gains.len() + 1);
    out.push(start);
    for k in gains {
        let u = -(k[0] * e + k[1] * v);
        e += dt * v + 0.5 * dt * dt * u;
        v += dt * u;
        out.push(goal + e);
    }
    out
}

/// [`WAYPOINTS`] poses from `from` to `to`. When `previous` (the prior
/// segment, ending at `from`) is given, the smoother reads across the seam.
pub fn plan_trajectory(from: &ToolPose, to: &ToolPose, previous: Option<&[ToolPose]>, cfg: &LqtConfig) -> Vec<ToolPose> {
    debug_assert_eq!(from.kind, to.kind);
    let gains = riccati_gains(cfg, WAYPOINTS - 1);
    let dims = from.as_slice().len();
    let columns: Vec<Vec<f64>> = (0..dims).map(|d| track_scalar(&gains, from.as_slice()[d], to.as_slice()[d])).collect();

    let seam: Vec<&[f64]> = match previous {
        Some(prev) if prev.len() > 1 && prev.last().map(|p| p.as_slice()) == Some(from.as_slice()) => {
            prev[..prev.len() - 1].iter().map(|p| p.as_slice()).collect()
        }
        _ => Vec::new(),
    };
    let half = cfg.smooth_window / 2;
    let n = WAYPOINTS;
    (0..n)
        .map(|i| {
            if i == 0 {
                return *from;
            }
            // Symmetric window, shrunk at the end so the goal is kept.
            let r = half.min(n - 1 - i);
            let values: Vec<f64> = (0..dims)
                .map(|d| {
                    // Averaging offsets from the centre keeps constant runs exact.
                    let centre = columns[d][i];
                    let mut sum = 0.0;
                    let mut count = 0;
                    for j in i as isize - r as isize..=(i + r) as isize {
                        let v = if j >= 0 {
                            Some(columns[d][j as usize])
                        } else {
                            seam.len().checked_sub(j.unsigned_abs()).map(|s| seam[s][d])
                        };
                        if let Some(v) = v {
                            sum += v - centre;
                            count += 1;
                        }
                    }
                    centre + sum / count as f64
                })
                .collect();
            ToolPose::new(from.kind, &values).expect("finite waypoints")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ToolKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: the open-loop LQ problem as one least-squares
    /// solve over all inputs, `min ‖W^{1/2}(x(u) − goal)‖² + r‖u‖²`.
    fn batch_lq(cfg: &LqtConfig, steps: usize, start: f64, goal: f64) -> Vec<f64> {
        let dt = 1.0 / steps as f64;
        // e_k = e0 + Σ_{j<k} (k−j−0.5)·dt²·u_j and v_k = Σ_{j<k} dt·u_j.
        let pos = |k: usize, j: usize| if j < k { (k - j) as f64 * dt * dt - 0.5 * dt * dt } else { 0.0 };
        let vel = |k: usize, j: usize| if j < k { dt } else { 0.0 };
        let e0 = start - goal;
        let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new(); // (weight, coeffs, offset)
        for k in 1..steps {
            rows.push((cfg.tracking, (0..steps).map(|j| pos(k, j)).collect(), e0));
        }
        rows.push((cfg.terminal_position, (0..steps).map(|j| pos(steps, j)).collect(), e0));
        rows.push((cfg.terminal_velocity, (0..steps).map(|j| vel(steps, j)).collect(), 0.0));
        let mut h = vec![vec![0.0; steps]; steps];
        let mut g = vec![0.0; steps];
        for (w, c, off) in &rows {
            for a in 0..steps {
                g[a] -= w * c[a] * off;
                for b in 0..steps {
                    h[a][b] += w * c[a] * c[b];
                }
            }
        }
        for (a, row) in h.iter_mut().enumerate() {
            row[a] += cfg.effort;
        }
        let u = solve(h, g);
        (0..=steps).map(|k| goal + e0 + (0..steps).map(|j| pos(k, j) * u[j]).sum::<f64>()).collect()
    }

    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            x[r] = (b[r] - (r + 1..n).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
        }
        x
    }

    fn pin(v: [f64; 3]) -> ToolPose {
        ToolPose::new(ToolKind::RollingPin, &v).unwrap()
    }

    #[test]
    fn riccati_matches_batch_least_squares() {
        // Moderate terminal weights keep the dense solve well conditioned.
        let cfg = LqtConfig { terminal_position: 1e4, terminal_velocity: 1e2, ..LqtConfig::default() };
        let gains = riccati_gains(&cfg, 20);
        let ours = track_scalar(&gains, 0.3, 0.7);
        let oracle = batch_lq(&cfg, 20, 0.3, 0.7);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_endpoints_give_constant_waypoints() {
        let p = pin([0.4, 0.5, 0.2]);
        let w = plan_trajectory(&p, &p, None, &LqtConfig::default());
        assert_eq!(w.len(), WAYPOINTS);
        assert!(w.iter().all(|q| *q == p));
    }

    #[test]
    fn endpoints_match_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..1.0)).collect();
            let (pa, pb) = (ToolPose::new(ToolKind::DualFlats, &a).unwrap(), ToolPose::new(ToolKind::DualFlats, &b).unwrap());
            let w = plan_trajectory(&pa, &pb, None, &LqtConfig::default());
            assert_eq!(w.len(), WAYPOINTS);
            assert_eq!(w[0], pa);
            assert!(w[WAYPOINTS - 1].as_slice().iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-3));
            // Spacing stays within a few times the uniform step.
            let total = pa.distance(&pb);
            assert!(w.windows(2).all(|s| s[0].distance(&s[1]) <= 0.1 * total + 1e-12));
        }
    }

    #[test]
    fn one_dimensional_approach_is_monotone() {
        for (a, b) in [(0.3, 0.7), (0.65, 0.35), (0.5, 0.52)] {
            let w = plan_trajectory(&pin([a, 0.5, 0.2]), &pin([b, 0.5, 0.2]), None, &LqtConfig::default());
            let xs: Vec<f64> = w.iter().map(|p| p.as_slice()[0]).collect();
            let sign = (b - a).signum();
            // Monotone up to the peak, then a settle of at most 5%.
            let peak = (0..xs.len()).max_by(|&i, &j| (sign * xs[i]).total_cmp(&(sign * xs[j]))).unwrap();
            assert!(xs[..=peak].windows(2).all(|s| sign * (s[1] - s[0]) >= -1e-12));
            let overshoot = xs.iter().map(|x| sign * (x - b)).fold(f64::NEG_INFINITY, f64::max);
            assert!(overshoot <= 0.05 * (b - a).abs());
        }
    }

    #[test]
    fn smoother_reads_the_previous_segment() {
        let cfg = LqtConfig::default();
        let (a, b, c) = (pin([0.3, 0.5, 0.2]), pin([0.6, 0.5, 0.2]), pin([0.4, 0.5, 0.2]));
        let first = plan_trajectory(&a, &b, None, &cfg);
        let end = *first.last().unwrap();
        let alone = plan_trajectory(&end, &c, None, &cfg);
        let blended = plan_trajectory(&end, &c, Some(&first), &cfg);
        assert_eq!(blended[0], end);
        assert_ne!(blended[1], alone[1]);
        assert_eq!(blended[WAYPOINTS - 1], alone[WAYPOINTS - 1]);
        // A tail that does not end at the start point is ignored.
        assert_eq!(plan_trajectory(&a, &c, Some(&first), &cfg), plan_trajectory(&a, &c, None, &cfg));
    }
}
