//! Gauss–Legendre rules and the near-field kernel integrals built on them.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[a, b]` with panels graded geometrically
/// toward `a` (ratio 1/2), suited to integrands that grow toward `a`.
pub fn graded_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(order);
    let mut breaks = vec![a];
    let total: f64 = (0..panels)
        .map(|k| 0.5f64.powi((panels - 1 - k) as i32))
        .sum();
    let mut acc = 0.0;
    for k in 0..panels {
        acc += 0.5f64.powi((panels - 1 - k) as i32);
        breaks.push(a + (b - a) * acc / total);
    }
    let mut rule = Vec::with_capacity(panels * order);
    for win in breaks.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in xs.iter().zip(&ws) {
            rule.push((mid + half * x, half * w));
        }
    }
    rule
}

/// `∫_{cell} |z|^{−N−sp} dz` over the unit cell centred at lattice offset `k ≠ 0`.
pub fn unit_cell_kernel_integral(dim: usize, sp: f64, k: [i64; 2]) -> f64 {
    const PANELS: usize = 4;
    const ORDER: usize = 8;
    let rule_for = |c: i64| -> Vec<(f64, f64)> {
        let c = c as f64;
        if c > 0.0 {
            graded_rule(c - 0.5, c + 0.5, PANELS, ORDER)
        } else if c < 0.0 {
            graded_rule(c + 0.5, c - 0.5, PANELS, ORDER)
                .into_iter()
                .map(|(x, w)| (x, -w))
                .collect()
        } else {
            // symmetric cell straddling the axis: grade toward the centre from both sides
            let mut r = graded_rule(0.0, 0.5, PANELS, ORDER);
            r.extend(
                graded_rule(0.0, -0.5, PANELS, ORDER)
                    .into_iter()
                    .map(|(x, w)| (x, -w)),
            );
            r
        }
    };
    let expo = -(dim as f64 + sp);
    if dim == 1 {
        let c = k[0].unsigned_abs() as f64;
        return ((c - 0.5).powf(-sp) - (c + 0.5).powf(-sp)) / sp;
    }
    let rx = rule_for(k[0]);
    let ry = rule_for(k[1]);
    let mut sum = 0.0;
    for &(y, wy) in &ry {
        for &(x, wx) in &rx {
            sum += wx * wy * (x * x + y * y).powf(0.5 * expo);
        }
    }
    sum
}

/// Volume of the unit ball in `ℝ^N`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// `∫_{|y|>R} |y|^{−N−sp} dy = (N·ω_N / sp)·R^{−sp}`.
pub fn tail_integral(dim: usize, sp: f64, radius: f64) -> f64 {
    dim as f64 * unit_ball_volume(dim) / sp * radius.powf(-sp)
}
