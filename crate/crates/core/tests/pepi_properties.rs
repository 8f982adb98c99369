//! PE/PI layers against an explicitly assembled block weight matrix, and the
//! permutation properties the block structure implies.

use pepi_core::nn::{Activation, InitSpec};
use pepi_core::pepi::{
    build_effective_matrix, count_parameters, pepi_layer_forward, pi_readout, ArchSpec, ScaledModel, SubMatrixPair,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Naive oracle: assemble the `(aK) x (bK)` matrix with `S` on the diagonal
/// blocks and `O` elsewhere, multiply, add the shared bias to every block.
fn dense_oracle(s: &[f64], o: &[f64], bias: &[f64], a: usize, b: usize, blocks: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = blocks.len();
    let mut w = vec![vec![0.0; b * k]; a * k];
    for bi in 0..k {
        for bj in 0..k {
            let src = if bi == bj { s } else { o };
            for r in 0..a {
                for c in 0..b {
                    w[bi * a + r][bj * b + c] = src[r * b + c];
                }
            }
        }
    }
    let x: Vec<f64> = blocks.concat();
    let y: Vec<f64> = w.iter().enumerate().map(|(r, row)| {
        row.iter().zip(&x).map(|(wv, xv)| wv * xv).sum::<f64>() + bias[r % a]
    }).collect();
    y.chunks(a).map(<[f64]>::to_vec).collect()
}

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_pair(rng: &mut ChaCha8Rng, b: usize, a: usize) -> SubMatrixPair<f64> {
    SubMatrixPair::from_parts(b, a, random_vec(rng, a * b), random_vec(rng, a * b), random_vec(rng, a)).unwrap()
}

fn random_stack(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<SubMatrixPair<f64>> {
    dims.windows(2).map(|w| random_pair(rng, w[0], w[1])).collect()
}

fn run_stack(stack: &[SubMatrixPair<f64>], blocks: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let last = stack.len() - 1;
    stack.iter().enumerate().fold(blocks.to_vec(), |h, (i, p)| {
        let act = if i == last { Activation::Identity } else { Activation::Relu };
        pepi_layer_forward(p, &h, act).unwrap().0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn layer_matches_block_matrix(a in 1usize..=8, b in 1usize..=8, k in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, b, a);
        let blocks: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, b)).collect();
        let (fast, _) = pepi_layer_forward(&pair, &blocks, Activation::Identity).unwrap();
        let slow = dense_oracle(pair.s(), pair.o(), pair.bias(), a, b, &blocks);
        let lib = build_effective_matrix(&pair, k).unwrap().apply(&blocks.concat()).unwrap();
        for (i, (f, s)) in fast.iter().flatten().zip(slow.iter().flatten()).enumerate() {
            prop_assert!(rel_close(*f, *s, 1e-5), "element {i}: {f} vs {s}");
            prop_assert!(rel_close(lib[i], *s, 1e-5), "library matrix element {i}: {} vs {s}", lib[i]);
        }
    }

    #[test]
    fn f32_layer_matches_block_matrix(a in 1usize..=8, b in 1usize..=8, k in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, b, a);
        let blocks: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, b)).collect();
        let blocks32: Vec<Vec<f32>> = blocks.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect();
        let pair32 = pair.cast::<f32>();
        let as64 = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
        let (fast, _) = pepi_layer_forward(&pair32, &blocks32, Activation::Identity).unwrap();
        let rounded: Vec<Vec<f64>> = blocks32.iter().map(|v| as64(v)).collect();
        let slow = dense_oracle(&as64(pair32.s()), &as64(pair32.o()), &as64(pair32.bias()), a, b, &rounded);
        for (f, s) in fast.iter().flatten().zip(slow.iter().flatten()) {
            prop_assert!(rel_close(f64::from(*f), *s, 1e-5), "{f} vs {s}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stack_is_permutation_equivariant(
        depth in 1usize..=4,
        width in 1usize..=8,
        k in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=width)).collect();
        let stack = random_stack(&mut rng, &dims);
        let blocks: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, dims[0])).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| blocks[p].clone()).collect();
        let out = run_stack(&stack, &blocks);
        let out_perm = run_stack(&stack, &permuted);
        for (i, &p) in perm.iter().enumerate() {
            for (x, y) in out_perm[i].iter().zip(&out[p]) {
                prop_assert!(rel_close(*x, *y, 1e-5), "block {i}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn readout_ignores_neighbour_order(
        depth in 1usize..=4,
        width in 1usize..=8,
        k in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=width)).collect();
        let stack = random_stack(&mut rng, &dims);
        let blocks: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, dims[0])).collect();
        let mut neighbours: Vec<usize> = (1..k).collect();
        neighbours.shuffle(&mut rng);
        let permuted: Vec<Vec<f64>> =
            std::iter::once(0).chain(neighbours).map(|p| blocks[p].clone()).collect();
        let y = pi_readout(&run_stack(&stack, &blocks), 0).unwrap();
        let y_perm = pi_readout(&run_stack(&stack, &permuted), 0).unwrap();
        for (x, z) in y.iter().zip(&y_perm) {
            prop_assert!(rel_close(*x, *z, 1e-5), "{x} vs {z}");
        }
    }
}

#[test]
fn single_view_layer_is_a_dense_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pair = random_pair(&mut rng, 3, 2);
    let h = random_vec(&mut rng, 3);
    let (out, _) = pepi_layer_forward(&pair, std::slice::from_ref(&h), Activation::Identity).unwrap();
    for (r, &got) in out[0].iter().enumerate() {
        let expect: f64 = (0..3).map(|c| pair.s()[r * 3 + c] * h[c]).sum::<f64>() + pair.bias()[r];
        assert!((got - expect).abs() < 1e-12);
    }
}

#[test]
fn model_readout_is_invariant_to_neighbour_order() {
    let arch = ArchSpec { in_channels: 1, side: 16, conv_channels: vec![2, 3], hidden: vec![6, 5], classes: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let init = InitSpec::Uniform { r: 0.4 };
    let model = ScaledModel::<f64>::with_inits(&arch, 4, init, init, &mut rng).unwrap();
    let views: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 256)).collect();
    let refs = |order: &[usize]| order.iter().map(|&i| views[i].as_slice()).collect::<Vec<_>>();
    let (y, _) = model.forward(&refs(&[0, 1, 2, 3])).unwrap();
    let (y2, _) = model.forward(&refs(&[0, 3, 1, 2])).unwrap();
    for (a, b) in y.iter().zip(&y2) {
        assert!(rel_close(*a, *b, 1e-9), "{a} vs {b}");
    }
}

#[test]
fn trainable_count_is_scale_free_and_ratio_is_half_k_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = ScaledModel::<f32>::new(&ArchSpec::mnist(), 1, &mut rng).unwrap();
    let base = count_parameters(&model, 1);
    for k in 1..=7usize {
        let r = count_parameters(&model, k);
        assert_eq!(r.trainable, base.trainable);
        assert_eq!(r.pepi_trainable_weights, base.pepi_trainable_weights);
        // exact rational comparison: effective * 2 == trainable * K^2
        assert_eq!(2 * r.pepi_effective_weights, r.pepi_trainable_weights * (k * k) as u64);
    }
}
