use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{bicubic_resample, bicubic_resample_transpose, conv2d, maxpool2, relu, Tensor4};
use crate::error::Error;
use crate::fem::{Field, Grid};

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Field {
    let grid = Grid::new(n).unwrap();
    Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, channels: usize, scale: f64) -> NetParams {
    let config = NetConfig {
        channels,
        ..NetConfig::default()
    };
    let mut p = NetParams::zeros(&config);
    p.values_mut().iter_mut().for_each(|v| *v = scale * rng.gen_range(-1.0..1.0));
    p
}

fn small_config() -> NetConfig {
    NetConfig {
        channels: 4,
        ..NetConfig::default()
    }
}

#[test]
fn zero_params_reduce_to_bicubic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hr = random_field(&mut rng, 24);
    let out = forward(&NetParams::zeros(&small_config()), &hr).unwrap();
    assert_eq!(out, bicubic_downscale(&hr).unwrap());
    assert_eq!(out.grid().n(), 6);

    let c = Field::constant(*hr.grid(), 0.37);
    let out = forward(&NetParams::zeros(&small_config()), &c).unwrap();
    assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-14));
}

#[test]
fn forward_matches_stagewise_recomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hr = random_field(&mut rng, 16);
    let params = random_params(&mut rng, 3, 0.3);
    let x = Tensor4::from_field(&hr);
    let (w1, b1) = params.layer(0);
    let (w2, b2) = params.layer(1);
    let (w3, b3) = params.layer(2);
    let s1 = maxpool2(&relu(&conv2d(&x, w1, b1, 3).unwrap())).unwrap();
    let s2 = maxpool2(&relu(&conv2d(&s1, w2, b2, 3).unwrap())).unwrap();
    let s3 = conv2d(&s2, w3, b3, 1).unwrap();
    let resid = bicubic_resample(&s3, 4, 4).unwrap();
    let base = bicubic_resample(&x, 4, 4).unwrap();
    let out = forward(&params, &hr).unwrap();
    for k in 0..16 {
        let expect = base.data()[k] + resid.data()[k];
        assert!((out.data()[k] - expect).abs() < 1e-14);
    }
}

#[test]
fn forward_rejects_bad_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hr = random_field(&mut rng, 18);
    assert!(matches!(forward(&NetParams::zeros(&small_config()), &hr), Err(Error::Shape(_))));
}

#[test]
fn log_likelihood_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hr = random_field(&mut rng, 16);
    let params = random_params(&mut rng, 2, 0.2);
    let pred = forward(&params, &hr).unwrap();
    assert_eq!(log_likelihood(&params, &hr, &pred, 0.01).unwrap(), 0.0);

    let mut bumped = pred.clone();
    bumped.data_mut()[5] += 0.3;
    let ll = log_likelihood(&params, &hr, &bumped, 0.1).unwrap();
    assert!((ll - (-0.09 / 0.02)).abs() < 1e-10);

    let lr = random_field(&mut rng, 4);
    let eps = 0.05;
    // independent norm routine
    let r2: f64 = lr.data().iter().zip(pred.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let expect = -0.5 * r2 / (eps * eps);
    let got = log_likelihood(&params, &hr, &lr, eps).unwrap();
    assert!(((got - expect) / expect).abs() < 1e-12);
    assert!(log_likelihood(&params, &hr, &lr, 0.0).is_err());
}

#[test]
fn zero_residual_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hr = random_field(&mut rng, 16);
    let params = random_params(&mut rng, 2, 0.2);
    let lr = forward(&params, &hr).unwrap();
    let g = loglik_gradients(&params, &hr, &lr, 0.01, true).unwrap();
    assert!(g.hr.data().iter().all(|&v| v == 0.0));
    assert!(g.params.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_params_gradient_is_bicubic_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let hr = random_field(&mut rng, 16);
    let lr = random_field(&mut rng, 4);
    let eps = 0.1;
    let params = NetParams::zeros(&small_config());
    let pred = bicubic_downscale(&hr).unwrap();
    let resid: Vec<f64> = lr.data().iter().zip(pred.data()).map(|(a, b)| (a - b) / (eps * eps)).collect();
    let expect = bicubic_resample_transpose(&Tensor4::new([1, 1, 4, 4], resid).unwrap(), 16, 16).unwrap();
    let got = grad_loglik_wrt_hr(&params, &hr, &lr, eps).unwrap();
    for (a, b) in got.data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }
}

fn fd_check(f: &dyn Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], coords: impl Iterator<Item = usize>) {
    for k in coords {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += 1e-5;
        xm[k] -= 1e-5;
        let num = (f(&xp) - f(&xm)) / 2e-5;
        let err = (grad[k] - num).abs() / grad[k].abs().max(num.abs()).max(1e-6);
        assert!(err < 1e-5, "coord {k}: analytic {} numeric {num}", grad[k]);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hr = random_field(&mut rng, 16);
    let lr = random_field(&mut rng, 4);
    let params = random_params(&mut rng, 3, 0.4);
    let eps = 0.2;
    let g = loglik_gradients(&params, &hr, &lr, eps, true).unwrap();
    let grid = *hr.grid();
    let f_hr = |x: &[f64]| log_likelihood(&params, &Field::new(grid, x.to_vec()).unwrap(), &lr, eps).unwrap();
    fd_check(&f_hr, hr.data(), g.hr.data(), 0..hr.len());
    let f_p = |p: &[f64]| log_likelihood(&NetParams::new(params.layers().to_vec(), p.to_vec()).unwrap(), &hr, &lr, eps).unwrap();
    fd_check(&f_p, params.values(), &g.params, 0..params.len());
}

#[test]
fn param_gradient_is_additive_over_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let hr = random_field(&mut rng, 16);
    let lr = random_field(&mut rng, 4);
    let params = random_params(&mut rng, 2, 0.3);
    let g = grad_loglik_wrt_params(&params, &hr, &lr, 0.1).unwrap();
    let g2 = grad_loglik_wrt_params(&params, &hr, &lr, 0.1).unwrap();
    let summed: Vec<f64> = g.iter().zip(&g2).map(|(a, b)| a + b).collect();
    for (s, a) in summed.iter().zip(&g) {
        assert_eq!(*s, 2.0 * a);
    }
}

#[test]
fn init_is_exact_bicubic_and_deterministic() {
    let config = NetConfig::default();
    let p = init_params(11, &config);
    assert_eq!(p, init_params(11, &config));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hr = random_field(&mut rng, 32);
    let a = forward(&p, &hr).unwrap();
    let b = bicubic_downscale(&hr).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-15);

    let hash = |p: &NetParams| {
        let mut h = DefaultHasher::new();
        p.layer(0).0.iter().chain(p.layer(1).0).for_each(|v| v.to_bits().hash(&mut h));
        h.finish()
    };
    assert_ne!(hash(&p), hash(&init_params(12, &config)));
    let (w3, b3) = p.layer(2);
    assert!(w3.iter().chain(b3).all(|&v| v == 0.0));
    let bound = 1.0 / 3.0;
    assert!(p.layer(0).0.iter().all(|v| v.abs() <= bound));
    assert!(p.layer(0).0.iter().any(|&v| v != 0.0));
}

#[test]
fn checkpoint_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.psrn");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = random_params(&mut rng, 16, 1.0);
    save_checkpoint(&params, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.layers(), params.layers());
    assert!(back.values().iter().zip(params.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::LengthMismatch { .. })));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));

    let mut bad = bytes.clone();
    bad[4] = 2;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));

    assert!(matches!(load_checkpoint(dir.path().join("absent.psrn")), Err(Error::MissingFile(_))));
}

#[test]
fn checkpoint_header_layout() {
    let p = NetParams::zeros(&NetConfig {
        channels: 2,
        ..NetConfig::default()
    });
    let bytes = encode_checkpoint(&p);
    assert_eq!(&bytes[..4], b"PSRN");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    let dims: Vec<u32> = bytes[12..60].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(dims, vec![2, 1, 3, 3, 2, 2, 3, 3, 1, 2, 3, 3]);
    let count = u64::from_le_bytes(bytes[60..68].try_into().unwrap());
    assert_eq!(count as usize, p.len());
    assert_eq!(bytes.len(), 68 + 8 * p.len());
}

proptest! {
    #[test]
    fn zeroed_output_layer_is_pure_bicubic(seed in 0u64..1000, scale in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = random_params(&mut rng, 3, scale);
        let off = params.layer_offset(2);
        params.values_mut()[off..].iter_mut().for_each(|v| *v = 0.0);
        let hr = random_field(&mut rng, 16);
        let a = forward(&params, &hr).unwrap();
        let b = bicubic_downscale(&hr).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-15);
    }

    #[test]
    fn checkpoint_bytes_roundtrip(values in proptest::collection::vec(proptest::num::f64::ANY, 30)) {
        let layers = NetParams::architecture(1);
        let params = NetParams::new(layers, values).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&params), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(encode_checkpoint(&back), encode_checkpoint(&params));
    }
}
