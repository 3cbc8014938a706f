//! Fits the low-dimensional similarity curve `1 / (1 + a d^(2b))`.

const GRID_POINTS: usize = 300;
const GRID_MAX: f64 = 3.0;

fn target(d: f64, min_dist: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist)).exp()
    }
}

fn grid() -> impl Iterator<Item = f64> {
    (1..=GRID_POINTS).map(|i| GRID_MAX * i as f64 / GRID_POINTS as f64)
}

/// Sum of squared residuals of the curve against the target over `(0, 3]`.
pub fn curve_sse(a: f64, b: f64, min_dist: f64) -> f64 {
    grid()
        .map(|d| (1.0 / (1.0 + a * d.powf(2.0 * b)) - target(d, min_dist)).powi(2))
        .sum()
}

/// Least-squares `(a, b)` by Levenberg-Marquardt from `(1, 1)`.
pub fn curve_params(min_dist: f64) -> (f64, f64) {
    assert!(min_dist > 0.0, "min_dist must be positive");
    let xs: Vec<f64> = grid().collect();
    let ys: Vec<f64> = xs.iter().map(|&d| target(d, min_dist)).collect();
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut sse = curve_sse(a, b, min_dist);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        // Normal equations of the 2-parameter problem.
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let r = 1.0 / den - y;
            let ja = -p / (den * den);
            let jb = -a * p * 2.0 * x.ln() / (den * den);
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut improved = false;
        while lambda < 1e12 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + da, b + db);
            if na > 0.0 && nb > 0.0 {
                let nsse = curve_sse(na, nb, min_dist);
                if nsse < sse {
                    let done = (sse - nsse) <= 1e-15 * sse.max(1e-300);
                    a = na;
                    b = nb;
                    sse = nsse;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = !done;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}
