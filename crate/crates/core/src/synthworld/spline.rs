//! Natural cubic spline over non-uniform knots, evaluated with exact first
//! and second derivatives. Beyond the end knots it extends linearly.

use crate::geom::Point2;

#[derive(Debug, Clone)]
struct Spline1 {
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline1 {
    fn fit(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[j] = 2.0 * (h0 + h1);
                upper[j] = h1;
                rhs[j] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for j in 1..k {
                let lower = x[j + 1] - x[j];
                let w = lower / diag[j - 1];
                diag[j] -= w * upper[j - 1];
                rhs[j] -= w * rhs[j - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
            }
        }
        Self { y: y.to_vec(), m }
    }

    /// (value, first derivative, second derivative) on interval `i`.
    fn eval_in(&self, x: &[f64], i: usize, t: f64) -> (f64, f64, f64) {
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }
}

/// Planar spline through timestamped positions.
#[derive(Debug, Clone)]
pub struct Spline2 {
    t: Vec<f64>,
    x: Spline1,
    y: Spline1,
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub pos: Point2,
    pub vel: Point2,
    pub acc: Point2,
}

impl Spline2 {
    /// Requires at least one knot and strictly increasing times.
    pub fn fit(t: &[f64], p: &[Point2]) -> Self {
        assert!(!t.is_empty() && t.len() == p.len());
        let xs: Vec<f64> = p.iter().map(|q| q.x).collect();
        let ys: Vec<f64> = p.iter().map(|q| q.y).collect();
        Self {
            t: t.to_vec(),
            x: Spline1::fit(t, &xs),
            y: Spline1::fit(t, &ys),
        }
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> Kinematics {
        let n = self.t.len();
        if n == 1 {
            return Kinematics {
                pos: Point2::new(self.x.y[0], self.y.y[0]),
                vel: Point2::ZERO,
                acc: Point2::ZERO,
            };
        }
        let (i, tc) = if t <= self.t[0] {
            (0, self.t[0])
        } else if t >= self.t[n - 1] {
            (n - 2, self.t[n - 1])
        } else {
            (self.t.partition_point(|&k| k <= t) - 1, t)
        };
        let (px, vx, ax) = self.x.eval_in(&self.t, i, tc);
        let (py, vy, ay) = self.y.eval_in(&self.t, i, tc);
        let vel = Point2::new(vx, vy);
        if tc != t {
            // Linear extension outside the knots.
            return Kinematics {
                pos: Point2::new(px, py) + vel * (t - tc),
                vel,
                acc: Point2::ZERO,
            };
        }
        Kinematics {
            pos: Point2::new(px, py),
            vel,
            acc: Point2::new(ax, ay),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_and_reproduces_lines() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1 + (i % 3) as f64 * 0.01).collect();
        let p: Vec<Point2> = t.iter().map(|&s| Point2::new(2.0 * s - 1.0, -0.5 * s)).collect();
        let s = Spline2::fit(&t, &p);
        for (ti, pi) in t.iter().zip(&p) {
            let k = s.eval(*ti);
            assert!(k.pos.dist(*pi) < 1e-12);
            assert!((k.vel.x - 2.0).abs() < 1e-9 && (k.vel.y + 0.5).abs() < 1e-9);
            assert!(k.acc.norm() < 1e-8);
        }
        let out = s.eval(5.0);
        assert!((out.pos.x - 9.0).abs() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let p: Vec<Point2> = t.iter().map(|&s| Point2::new(s.sin(), (2.0 * s).cos())).collect();
        let s = Spline2::fit(&t, &p);
        let h = 1e-6;
        for &tq in &[0.33, 1.01, 2.2] {
            let k = s.eval(tq);
            let fd = (s.eval(tq + h).pos - s.eval(tq - h).pos) / (2.0 * h);
            assert!((k.vel - fd).norm() < 1e-6);
            let fdd = (s.eval(tq + h).vel - s.eval(tq - h).vel) / (2.0 * h);
            assert!((k.acc - fdd).norm() < 1e-5);
        }
    }
}
