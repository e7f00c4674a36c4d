mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnp_core::image::{avgpool, stride_sample, ImageGrid};
use tnp_core::metrics::{kl_vs_gaussian, mse, psnr, ssim, ssim_grad};
use tnp_core::qtt::{
    build_prolongation_mpo, build_prolongation_mpo_1d, dequantize, morton_index, prolong_image, prolong_image_dense,
    quantize,
};
use tnp_core::tensor::{mpo_apply, mse_core_gradients, tt_contract, tt_round, tt_svd, DenseTensor, TtCore, TtFormat};
use tnp_core::tnp::purification_loss_and_grad;

fn with_core(tt: &TtFormat, k: usize, data: &[f64]) -> TtFormat {
    let mut cores = tt.cores().to_vec();
    let (l, n, r) = cores[k].shape();
    cores[k] = TtCore::new(l, n, r, data.to_vec()).unwrap();
    TtFormat::new(cores).unwrap()
}

#[test]
fn random_contraction_matches_index_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tt = random_tt(&mut rng, &[4, 4, 4, 4], 5);
    let dense = tt_contract(&tt).unwrap();
    assert_eq!(dense.shape(), &[4, 4, 4, 4]);
    for (a, b) in dense.data().iter().zip(brute_contract(&tt)) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn full_rank_svd_of_random_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = DenseTensor::from_fn(vec![8, 8, 8], |_| rng.random_range(-1.0..1.0)).unwrap();
    let tt = tt_svd(&x, 64, 0.0).unwrap();
    assert!(rel_err(tt_contract(&tt).unwrap().data(), x.data()) <= 1e-8);
}

#[test]
fn rounding_matches_dense_truncation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let modes = [4, 4, 4, 4];
    let mut tt = random_tt(&mut rng, &modes, 8);
    while tt.ranks()[1..4].iter().any(|&r| r < 8) {
        tt = random_tt(&mut rng, &modes, 8);
    }
    let dense = tt_contract(&tt).unwrap();
    let rounded = tt_round(&tt, 4, 0.0).unwrap();
    let svd = tt_svd(&dense, 4, 0.0).unwrap();
    let e_round = rel_err(tt_contract(&rounded).unwrap().data(), dense.data());
    let e_svd = rel_err(tt_contract(&svd).unwrap().data(), dense.data());
    assert!(e_round > 0.0);
    assert!((e_round - e_svd).abs() <= 1e-8, "{e_round} vs {e_svd}");
}

#[test]
fn random_operator_on_three_binary_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let op = random_mpo(&mut rng, &[2, 2, 2], &[2, 2, 2], 2);
        let tt = random_tt(&mut rng, &[2, 2, 2], 3);
        let (rows, cols, m) = brute_mpo_matrix(&op);
        let want = matvec(&m, rows, cols, &brute_contract(&tt));
        let got = brute_contract(&mpo_apply(&op, &tt).unwrap());
        assert!(rel_err(&got, &want) <= 1e-10);
    }
}

#[test]
fn core_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let tt = random_tt(&mut rng, &[2, 2, 2], 3);
        let target: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |t: &TtFormat| -> f64 {
            0.5 * brute_contract(t)
                .iter()
                .zip(&target)
                .map(|(y, x)| (y - x) * (y - x))
                .sum::<f64>()
        };
        let residual: Vec<f64> = brute_contract(&tt).iter().zip(&target).map(|(y, x)| y - x).collect();
        let grads = mse_core_gradients(&tt, &DenseTensor::new(vec![2, 2, 2], residual).unwrap()).unwrap();
        for (k, g) in grads.iter().enumerate() {
            let fd = central_diff(tt.cores()[k].data(), 1e-5, |d| loss(&with_core(&tt, k, d)));
            assert!(max_entry_rel(g.data(), &fd, 1e-6) <= 1e-4, "core {k}");
        }
    }
}

#[test]
fn prolonging_ones_leaves_a_half_at_the_end() {
    let ones = TtFormat::new(vec![TtCore::new(1, 2, 1, vec![1.0, 1.0]).unwrap(); 3]).unwrap();
    let up = brute_contract(&mpo_apply(&build_prolongation_mpo_1d(3).unwrap(), &ones).unwrap());
    let mut want = vec![1.0; 16];
    want[15] = 0.5;
    assert_eq!(up, want);
}

#[test]
fn prolonging_a_vector_of_four() {
    let v = [0.3, -1.2, 2.0, 0.7];
    let tt = tt_svd(&DenseTensor::new(vec![2, 2], v.to_vec()).unwrap(), 4, 0.0).unwrap();
    let got = brute_contract(&mpo_apply(&build_prolongation_mpo_1d(2).unwrap(), &tt).unwrap());
    for (g, row) in got.iter().zip(P_4_TO_8) {
        let want: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
        assert!((g - want).abs() <= 1e-12);
    }
}

#[test]
fn prolonged_constant_plane_follows_the_kronecker_oracle() {
    let d = 3;
    let v = 0.6;
    let img = ImageGrid::filled(8, 8, 1, v).unwrap();
    let q = quantize(&img).unwrap();
    let tt = tt_svd(q.tensor(), 64, 0.0).unwrap();
    let up = prolong_image(&tt, 64, 0.0).unwrap();
    let plane = tnp_core::qtt::dequantize_plane(&brute_contract(&up), d + 1);
    let want = interp_plane(img.data(), d);
    for r in 0..16 {
        for c in 0..16 {
            let w = want[r * 16 + c];
            assert!((plane[r * 16 + c] - w).abs() <= 1e-10);
            let expect = match (r == 15, c == 15) {
                (false, false) => v,
                (true, true) => v / 4.0,
                _ => v / 2.0,
            };
            assert!((w - expect).abs() <= 1e-15);
        }
    }
}

#[test]
fn operator_matches_dense_prolongation_on_random_planes() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for d in 1..=4 {
        let n = 1usize << d;
        let img = random_image(&mut rng, n, n, 1);
        let tt = tt_svd(quantize(&img).unwrap().tensor(), 1 << 12, 0.0).unwrap();
        let up = prolong_image(&tt, 1 << 12, 0.0).unwrap();
        let got = tnp_core::qtt::dequantize_plane(&brute_contract(&up), d + 1);
        let want = interp_plane(img.data(), d);
        assert!(rel_err(&got, &want) <= 1e-8, "d = {d}");
        let dense = prolong_image_dense(&img).unwrap();
        assert!(rel_err(dense.data(), &want) <= 1e-12);
    }
}

#[test]
fn two_dimensional_operator_is_the_kronecker_square() {
    let (rows, cols, p1) = brute_mpo_matrix(&build_prolongation_mpo_1d(2).unwrap());
    let (rows2, cols2, p2) = brute_mpo_matrix(&build_prolongation_mpo(2).unwrap());
    assert_eq!((rows2, cols2), (rows * rows, cols * cols));
    // Quantized mode k of the image carries (row bit, column bit) at that
    // scale, so entries factor as P[row] · P[col] in bit-interleaved order.
    let bits = |mut flat: usize, n: usize| {
        let (mut a, mut b) = (0, 0);
        for _ in 0..n {
            let digit = flat % 4;
            flat /= 4;
            a = (a >> 1) | ((digit / 2) << (n - 1));
            b = (b >> 1) | ((digit % 2) << (n - 1));
        }
        (a, b)
    };
    for r in 0..rows2 {
        let (or, oc) = bits(r, 3);
        for c in 0..cols2 {
            let (ir, ic) = bits(c, 2);
            assert_eq!(p2[r * cols2 + c], p1[or * cols + ir] * p1[oc * cols + ic]);
        }
    }
}

fn pooled_prolongation(d: usize, seed: u64) -> (ImageGrid, ImageGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1usize << d;
    let img = random_image(&mut rng, n, n, 1);
    let tt = tt_svd(quantize(&img).unwrap().tensor(), 1 << 12, 0.0).unwrap();
    let up = dequantize(
        &tnp_core::qtt::QuantizedTensor::new(tt_contract(&prolong_image(&tt, 1 << 12, 0.0).unwrap()).unwrap()).unwrap(),
    )
    .unwrap();
    (img, avgpool(&up, 1).unwrap())
}

#[test]
#[ignore = "fails: pooling the interpolated image blends each sample 3:1 with its lower and right neighbours, so interior errors are of the order of the local differences"]
fn pooled_prolongation_returns_interior_samples() {
    let (img, back) = pooled_prolongation(4, 21);
    let n = img.width();
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            assert!((back.get(0, r, c) - img.get(0, r, c)).abs() <= 1e-6, "({r}, {c})");
        }
    }
}

#[test]
fn pooled_prolongation_is_a_three_to_one_blend() {
    for (d, seed) in [(2, 22), (3, 23), (5, 24)] {
        let (img, back) = pooled_prolongation(d, seed);
        let n = img.width();
        let at = |r: usize, c: usize| if r < n && c < n { img.get(0, r, c) } else { 0.0 };
        for r in 0..n {
            for c in 0..n {
                let want = (9.0 * at(r, c) + 3.0 * at(r + 1, c) + 3.0 * at(r, c + 1) + at(r + 1, c + 1)) / 16.0;
                assert!((back.get(0, r, c) - want).abs() <= 1e-10, "d {d} ({r}, {c})");
            }
        }
    }
}

#[test]
fn pooled_block_means_and_stride_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let img = random_image(&mut rng, 16, 16, 1);
    let pooled = avgpool(&img, 2).unwrap();
    let strided = stride_sample(&img, 2).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    s += img.get(0, 4 * i + a, 4 * j + b);
                }
            }
            assert!((pooled.get(0, i, j) - s / 16.0).abs() <= 1e-12);
            assert_eq!(strided.get(0, i, j), img.get(0, 4 * i, 4 * j));
        }
    }
}

#[test]
fn mse_core_gradients_pass_fd_on_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..10 {
        let modes = random_modes(&mut rng, 256);
        let tt = random_tt(&mut rng, &modes, 3);
        let len: usize = modes.iter().product();
        let target: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let residual: Vec<f64> = brute_contract(&tt).iter().zip(&target).map(|(y, x)| y - x).collect();
        let grads = mse_core_gradients(&tt, &DenseTensor::new(modes.clone(), residual).unwrap()).unwrap();
        for (k, g) in grads.iter().enumerate() {
            let fd = central_diff(tt.cores()[k].data(), 1e-5, |d| {
                0.5 * brute_contract(&with_core(&tt, k, d))
                    .iter()
                    .zip(&target)
                    .map(|(y, x)| (y - x) * (y - x))
                    .sum::<f64>()
            });
            assert!(max_entry_rel(g.data(), &fd, 1e-6) <= 1e-4);
        }
    }
}

#[test]
fn purification_loss_gradient_by_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n = 8;
    let x = random_image(&mut rng, n, n, 1);
    let y = random_image(&mut rng, n, n, 1);
    let p = random_image(&mut rng, n, n, 1);
    let ds = ImageGrid::from_fn(n, n, 1, |_, _, _| rng.random_range(-0.1..0.1)).unwrap();
    let (_, g) = purification_loss_and_grad(&x, &y, &ds, &p).unwrap();
    let fd = central_diff(y.data(), 1e-5, |v| {
        let yy = ImageGrid::new_unbounded(n, n, 1, v.to_vec()).unwrap();
        purification_loss_and_grad(&x, &yy, &ds, &p).unwrap().0
    });
    assert!(max_entry_rel(g.data(), &fd, 1e-8) <= 1e-4);
}

#[test]
fn ssim_gradient_on_colour_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x = random_image(&mut rng, 16, 16, 3);
    let y = random_image(&mut rng, 16, 16, 3);
    let (_, g) = ssim_grad(&x, &y).unwrap();
    let fd = central_diff(x.data(), 1e-5, |v| {
        ssim(&ImageGrid::new_unbounded(16, 16, 3, v.to_vec()).unwrap(), &y)
            .unwrap()
            .value
    });
    assert!(max_entry_rel(g.data(), &fd, 1e-6) <= 1e-4);
}

fn arb_tt() -> impl Strategy<Value = TtFormat> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = random_modes(&mut rng, 4096);
        random_tt(&mut rng, &modes, 4)
    })
}

fn arb_plane(min_d: usize, max_d: usize) -> impl Strategy<Value = ImageGrid> {
    (min_d..=max_d, any::<u64>()).prop_map(|(d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_image(&mut rng, 1 << d, 1 << d, 1)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contraction_equals_index_loop(tt in arb_tt()) {
        let got = tt_contract(&tt).unwrap();
        prop_assert!(rel_err(got.data(), &brute_contract(&tt)) <= 1e-10);
    }

    #[test]
    fn operator_rank_law_and_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=4);
        let ins: Vec<usize> = (0..d).map(|_| rng.random_range(1..=3)).collect();
        let outs: Vec<usize> = (0..d).map(|_| rng.random_range(1..=3)).collect();
        let op = random_mpo(&mut rng, &outs, &ins, 3);
        let tt = random_tt(&mut rng, &ins, 3);
        let out = mpo_apply(&op, &tt).unwrap();
        let want: Vec<usize> = op.ranks().iter().zip(tt.ranks()).map(|(a, b)| a * b).collect();
        prop_assert_eq!(out.ranks(), want);
        let (rows, cols, m) = brute_mpo_matrix(&op);
        let dense = matvec(&m, rows, cols, &brute_contract(&tt));
        prop_assert!(rel_err(&brute_contract(&out), &dense) <= 1e-10);
    }

    #[test]
    fn svd_second_pass_adds_no_error(tt in arb_tt(), cap in 1usize..6) {
        let dense = tt_contract(&tt).unwrap();
        let once = tt_contract(&tt_svd(&dense, cap, 0.0).unwrap()).unwrap();
        let twice = tt_contract(&tt_svd(&once, cap, 0.0).unwrap()).unwrap();
        let scale = once.norm().max(1e-300);
        let drift = once.sub(&twice).unwrap().norm() / scale;
        prop_assert!(drift <= 1e-12, "drift {}", drift);
    }

    #[test]
    fn rounding_at_full_rank_is_exact(tt in arb_tt()) {
        let rounded = tt_round(&tt, 64, 0.0).unwrap();
        prop_assert!(rel_err(&brute_contract(&rounded), &brute_contract(&tt)) <= 1e-10);
    }

    #[test]
    fn quantization_is_a_bijection(img in arb_plane(1, 7)) {
        let d = img.resolution_index().unwrap();
        let q = quantize(&img).unwrap();
        let n = 1usize << d;
        for r in 0..n {
            for c in 0..n {
                prop_assert_eq!(morton_index(r, c, d), morton_oracle(r, c, d));
                prop_assert_eq!(q.tensor().data()[morton_oracle(r, c, d)], img.get(0, r, c));
            }
        }
        prop_assert_eq!(dequantize(&q).unwrap(), img);
    }

    #[test]
    fn pooling_commutes_with_quantization(img in arb_plane(2, 7)) {
        let q = quantize(&img).unwrap().mean_last_mode().unwrap();
        let (got, want) = (dequantize(&q).unwrap(), avgpool(&img, 1).unwrap());
        prop_assert_eq!(got.data(), want.data());
    }

    #[test]
    fn stride_sampling_only_selects(img in arb_plane(1, 6), levels in 0usize..3) {
        prop_assume!(img.height() >> levels >= 1);
        let s = stride_sample(&img, levels).unwrap();
        let step = 1usize << levels;
        for r in 0..s.height() {
            for c in 0..s.width() {
                prop_assert_eq!(s.get(0, r, c), img.get(0, r * step, c * step));
            }
        }
    }

    #[test]
    fn ssim_is_symmetric(seed in any::<u64>(), n in 4usize..24, c in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_image(&mut rng, n, n, c);
        let y = random_image(&mut rng, n, n, c);
        let a = ssim(&x, &y).unwrap().value;
        let b = ssim(&y, &x).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn psnr_is_the_log_of_mse(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_image(&mut rng, 9, 7, 2);
        let y = random_image(&mut rng, 9, 7, 2);
        prop_assert_eq!(psnr(&x, &y).unwrap(), 10.0 * (1.0 / mse(&x, &y).unwrap()).log10());
    }

    #[test]
    fn kl_is_nonnegative(values in prop::collection::vec(-10.0f64..10.0, 2..400), bins in 1usize..200) {
        prop_assume!(values.iter().any(|&v| v != values[0]));
        let kl = kl_vs_gaussian(&values, bins).unwrap();
        prop_assert!(kl.is_finite() && kl >= 0.0);
    }
}
