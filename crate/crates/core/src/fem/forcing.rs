use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters `θ = (a, b, c, d)` of the benchmark forcing family; `d` is the
/// Dirichlet value on `y = ±3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ForcingParams {
    pub const A_RANGE: (f64, f64) = (-4.0, 4.0);
    pub const B_RANGE: (f64, f64) = (-3.0, 3.0);
    pub const C_RANGE: (f64, f64) = (0.0, 3.0);
    pub const D_RANGE: (f64, f64) = (-2.0, 2.0);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// `f_θ(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        eval_forcing(self, x, y)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

/// `a·sin(bx)cos(cy) + b·cos(ax)sin(cy) + c·exp(a·cos(bx)sin(cy)) + (a·x³ − b·y³)/(x² + c·y² + 1)`
pub fn eval_forcing(p: &ForcingParams, x: f64, y: f64) -> f64 {
    let ForcingParams { a, b, c, .. } = *p;
    a * (b * x).sin() * (c * y).cos()
        + b * (a * x).cos() * (c * y).sin()
        + c * (a * (b * x).cos() * (c * y).sin()).exp()
        + (a * x.powi(3) - b * y.powi(3)) / (x * x + c * y * y + 1.0)
}

/// Draws θ uniformly from the benchmark ranges; a pure function of `seed`.
pub fn sample_forcing(seed: u64) -> ForcingParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| rng.gen_range(lo..hi);
    let a = draw(ForcingParams::A_RANGE);
    let b = draw(ForcingParams::B_RANGE);
    let c = draw(ForcingParams::C_RANGE);
    let d = draw(ForcingParams::D_RANGE);
    ForcingParams { a, b, c, d }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_vanish() {
        let p = ForcingParams::new(0.0, 0.0, 0.0, 0.0);
        for &(x, y) in &[(0.0, 0.0), (1.3, -2.2), (-3.0, 3.0)] {
            assert_eq!(p.eval(x, y), 0.0);
        }
    }

    #[test]
    fn origin_with_only_a() {
        assert_eq!(ForcingParams::new(1.0, 0.0, 0.0, 0.0).eval(0.0, 0.0), 0.0);
    }

    #[test]
    fn matches_transcribed_formula() {
        // Value from an independent scalar transcription of the formula
        // (python: a*sin(b*x)*cos(c*y) + b*cos(a*x)*sin(c*y)
        //   + c*exp(a*cos(b*x)*sin(c*y)) + (a*x**3 - b*y**3)/(x**2 + c*y**2 + 1)).
        let p = ForcingParams::new(-2.5, -2.5, 1.0, 0.0);
        let expected = 7.888_064_046_144_813_8;
        let got = p.eval(1.0, 1.0);
        assert!(((got - expected) / expected).abs() < 1e-12, "{got}");
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_forcing(42), sample_forcing(42));
        assert_ne!(sample_forcing(42), sample_forcing(43));
    }

    #[test]
    fn sample_moments_and_ranges() {
        let draws: Vec<_> = (0..10_000).map(sample_forcing).collect();
        let mean_a = draws.iter().map(|p| p.a).sum::<f64>() / draws.len() as f64;
        assert!(mean_a.abs() < 0.07, "mean a = {mean_a}");
        assert!(draws.iter().all(|p| (0.0..=3.0).contains(&p.c)));
        assert!(draws.iter().all(|p| (-4.0..=4.0).contains(&p.a)));
        assert!(draws.iter().all(|p| (-3.0..=3.0).contains(&p.b)));
        assert!(draws.iter().all(|p| (-2.0..=2.0).contains(&p.d)));
    }
}
