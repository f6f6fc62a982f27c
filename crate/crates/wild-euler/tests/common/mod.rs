#![allow(dead_code)]

use wild_euler::iteration::Grid;
use wild_euler::stochastic::FlowFields;

/// Exact steady Euler solution with a passively rotating tracer: angular
/// velocity Ω(r) = A(1 − r²/R²)⁴ about `center`, pressure
/// p = −A²R²/18·(1 − r²/R²)⁹, tracer a bump of radius ρ at `blob` carried
/// rigidly on each circle.
pub struct Vortex {
    pub center: [f64; 2],
    pub radius: f64,
    /// Peak speed max_r rΩ(r).
    pub speed: f64,
    pub blob: [f64; 2],
    pub blob_radius: f64,
}

impl Vortex {
    pub fn centered(extent: f64, radius: f64) -> Self {
        let c = 0.5 * extent;
        Self { center: [c, c], radius, speed: 1.0, blob: [c + 0.45 * radius, c], blob_radius: 0.5 * radius }
    }

    fn amplitude(&self) -> f64 {
        // max of r(1 − r²/R²)⁴ is at r = R/3.
        self.speed / (self.radius / 3.0 * (8.0f64 / 9.0).powi(4))
    }

    pub fn omega(&self, r: f64) -> f64 {
        let w = 1.0 - (r / self.radius).powi(2);
        if w <= 0.0 { 0.0 } else { self.amplitude() * w.powi(4) }
    }

    /// (b, p) at (t, x); velocity into `v`.
    pub fn eval(&self, t: f64, x: &[f64], v: &mut [f64]) -> (f64, f64) {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let r = (dx * dx + dy * dy).sqrt();
        let om = self.omega(r);
        v[0] = -om * dy;
        v[1] = om * dx;
        let w = 1.0 - (r / self.radius).powi(2);
        let a = self.amplitude();
        let p = if w <= 0.0 { 0.0 } else { -a * a * self.radius * self.radius / 18.0 * w.powi(9) };
        let (s, c) = (-om * t).sin_cos();
        let (bx, by) = (self.center[0] + c * dx - s * dy, self.center[1] + s * dx + c * dy);
        let d2 = ((bx - self.blob[0]).powi(2) + (by - self.blob[1]).powi(2)) / self.blob_radius.powi(2);
        let b = if d2 < 1.0 { (1.0 - d2).powi(4) } else { 0.0 };
        (b, p)
    }

    pub fn fields(&self, grid: Grid) -> FlowFields {
        FlowFields::from_fn(grid, |t, x, v| self.eval(t, x, v))
    }
}
