use alanet::attention::{Alcm, Lasb, Lcam, Lsca, Lsct, Mfdm, MfdmConfig};
use alanet::params::{Init, ParamStore};
use alanet::suite::{module_checks, SuiteOptions};
use alanet::{Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, &mut rng).unwrap()
}

fn zero_all(store: &mut ParamStore) {
    for t in store.tensors_mut() {
        t.data_mut().fill(0.0);
    }
}

fn row_sums(t: &Tensor) -> Vec<f64> {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(|r| r.iter().sum()).collect()
}

#[test]
fn lcam_with_zero_weights_is_one_and_a_half_times_input() {
    let mut store = ParamStore::new();
    let lcam = Lcam::new(&mut store, &mut Init::new(1), "lcam", 2);
    zero_all(&mut store);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let f = g.constant(Tensor::new([2, 1, 1], vec![0.5, -2.0]).unwrap());
    let l = g.constant(Tensor::new([1, 2], vec![0.3, 0.9]).unwrap());
    let (out, state) = lcam.forward(&mut g, &p, f, Some(l)).unwrap();
    let state = state.unwrap();
    assert_eq!(g.value(state.sigma).data(), &[0.5, 0.5]);
    assert_eq!(g.value(state.lang_gate).data(), &[0.5, 0.5]);
    assert_eq!(g.value(out).data(), &[0.75, -3.0]);
}

#[test]
fn bypass_paths_are_bit_exact_over_100_seeds() {
    for seed in 0..100 {
        let mut store = ParamStore::new();
        let mut init = Init::new(seed);
        let lcam = Lcam::new(&mut store, &mut init, "lcam", 6);
        let lsca = Lsca::new(&mut store, &mut init, "lsca", 6);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x = rand_t(&[6, 3, 5], seed + 7);
        let f = g.constant(x.clone());

        let (out, state) = lcam.forward(&mut g, &p, f, None).unwrap();
        assert!(state.is_none());
        let gate = lcam.channel_gate(&mut g, &p, f).unwrap();
        let a = g.value(gate).data().to_vec();
        let hw = 15;
        let want = Tensor::from_fn([6, 3, 5], |i| x.data()[i] * a[i / hw] + x.data()[i]).unwrap();
        assert!(g.value(out).bit_eq(&want), "lcam seed {seed}");

        let (out, state) = lsca.forward(&mut g, &p, f, None).unwrap();
        assert!(state.is_none());
        assert!(g.value(out).bit_eq(&x), "lsca seed {seed}");
    }
}

#[test]
fn lcam_competition_weights_are_complements() {
    for seed in 0..30 {
        let mut store = ParamStore::new();
        let lcam = Lcam::new(&mut store, &mut Init::new(seed), "lcam", 8);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let f = g.constant(rand_t(&[8, 4, 4], seed).map(|v| 4.0 * v));
        let l = g.constant(rand_t(&[1, 8], seed + 1).map(|v| 4.0 * v));
        let (_, state) = lcam.forward(&mut g, &p, f, Some(l)).unwrap();
        let st = state.unwrap();
        assert_eq!(g.shape(st.similarity), &[8, 8]);
        let sig = g.value(st.sigma).data();
        let comp = g.value(st.complement).data();
        for (s, c) in sig.iter().zip(comp) {
            assert!(*s > 0.0 && *s < 1.0);
            assert_eq!(s + c, 1.0);
        }
    }
}

#[test]
fn lcam_language_influence_grows_with_similarity() {
    // Scaling the language row scales the similarity scores; the language
    // weight of each channel moves monotonically with its score.
    let mut store = ParamStore::new();
    let lcam = Lcam::new(&mut store, &mut Init::new(3), "lcam", 4);
    for id in [lcam.proj_lang.bias, lcam.proj_img.bias] {
        store.get_mut(id).data_mut().fill(0.0);
    }
    let x = rand_t(&[4, 2, 2], 1).map(|v| v + 1.5);
    let lang = rand_t(&[1, 4], 2);
    let sigma_at = |k: f64| {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let f = g.constant(x.clone());
        let l = g.constant(lang.map(|v| k * v));
        let st = lcam.forward(&mut g, &p, f, Some(l)).unwrap().1.unwrap();
        (g.value(st.scores).data().to_vec(), g.value(st.sigma).data().to_vec())
    };
    let (s1, g1) = sigma_at(1.0);
    let (s2, g2) = sigma_at(2.0);
    for c in 0..4 {
        assert!((s2[c] - 2.0 * s1[c]).abs() < 1e-12);
        assert_eq!(s1[c] > 0.0, g2[c] > g1[c]);
    }
}

#[test]
fn alcm_saturated_gate_selects_one_projection() {
    let mut store = ParamStore::new();
    let alcm = Alcm::new(&mut store, &mut Init::new(5), "alcm", 4);
    store.get_mut(alcm.gate.weight).data_mut().fill(0.0);
    for (bias, pick_lang) in [(60.0, true), (-60.0, false)] {
        store.get_mut(alcm.gate.bias).data_mut().fill(bias);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let f = g.constant(rand_t(&[4, 3, 3], 1));
        let l = g.constant(rand_t(&[1, 4], 2));
        let (out, st) = alcm.forward(&mut g, &p, f, l).unwrap();
        let target = if pick_lang { st.lang_proj } else { st.image_proj };
        assert!(g.value(out).max_abs_diff(g.value(target)).unwrap() < 1e-12);
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn alcm_calibration_moves_towards_image_projection() {
    let mut held = 0;
    let trials = 200;
    for seed in 0..trials {
        let mut store = ParamStore::new();
        let alcm = Alcm::new(&mut store, &mut Init::new(seed), "alcm", 8);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let f = g.constant(rand_t(&[8, 4, 4], seed + 1));
        let l = g.constant(rand_t(&[1, 8], seed + 2));
        let (out, st) = alcm.forward(&mut g, &p, f, l).unwrap();
        let pi = g.value(st.image_proj).data();
        let sig = g.value(st.sigma).data();
        assert!(sig.iter().all(|s| *s > 0.0 && *s < 1.0));
        if cosine(g.value(out).data(), pi) >= cosine(g.value(st.lang_proj).data(), pi) {
            held += 1;
        }
    }
    // Per-channel gates make this a tendency rather than a theorem.
    assert!(held as f64 >= 0.9 * trials as f64, "{held}/{trials}");
}

#[test]
fn lsca_attention_rows_are_stochastic() {
    for (seed, c, h, w) in [(0, 2, 1, 1), (1, 4, 3, 2), (2, 8, 4, 4), (3, 5, 2, 7)] {
        let mut store = ParamStore::new();
        let lsca = Lsca::new(&mut store, &mut Init::new(seed), "lsca", c);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let f = g.constant(rand_t(&[c, h, w], seed + 10).map(|v| 3.0 * v));
        let l = g.constant(rand_t(&[1, c], seed + 11).map(|v| 3.0 * v));
        let (out, st) = lsca.forward(&mut g, &p, f, Some(l)).unwrap();
        let st = st.unwrap();
        assert_eq!(g.shape(out), &[c, h, w]);
        assert_eq!(g.shape(st.combined), &[h * w, c]);
        for m in [st.global_attn, st.local_attn, st.combined] {
            for s in row_sums(g.value(m)) {
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn lsca_one_pixel_product_by_hand() {
    let mut store = ParamStore::new();
    let lsca = Lsca::new(&mut store, &mut Init::new(9), "lsca", 2);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let f = g.constant(Tensor::new([2, 1, 1], vec![0.4, -1.1]).unwrap());
    let l = g.constant(Tensor::new([1, 2], vec![0.7, 0.2]).unwrap());
    let st = lsca.forward(&mut g, &p, f, Some(l)).unwrap().1.unwrap();
    let a = g.value(st.local_attn).data().to_vec();
    let b = g.value(st.global_attn).data().to_vec();
    let prod = [a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3]];
    let got = g.value(st.combined).data();
    assert!((got[0] - prod[0]).abs() < 1e-15 && (got[1] - prod[1]).abs() < 1e-15);
    assert!((prod[0] + prod[1] - 1.0).abs() < 1e-12);
}

#[test]
fn lsct_identity_without_language_or_feed_forward() {
    for (c, h, w) in [(2, 4, 4), (8, 3, 5), (4, 1, 1)] {
        let mut store = ParamStore::new();
        let lsct = Lsct::new(&mut store, &mut Init::new(2), "lsct", c, true);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x = rand_t(&[c, h, w], 5);
        let f = g.constant(x.clone());
        let out = lsct.forward(&mut g, &p, f, None).unwrap();
        assert!(g.value(out).bit_eq(&x));
        let l = g.constant(rand_t(&[1, c], 6));
        let out = lsct.forward(&mut g, &p, f, Some(l)).unwrap();
        assert_eq!(g.shape(out), &[c, h, w]);
        // a single position normalises to zero, so attention has nothing to add
        assert_eq!(g.value(out).bit_eq(&x), h * w == 1);
    }
}

#[test]
fn mfdm_with_zero_kernels_returns_inputs() {
    for c in [8, 16] {
        let mut store = ParamStore::new();
        let mfdm = Mfdm::new(&mut store, &mut Init::new(4), "mfdm", c, &MfdmConfig::default()).unwrap();
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let (a, b) = (rand_t(&[c, 5, 5], 1), rand_t(&[c, 5, 5], 2));
        let (ft, fr) = (g.constant(a.clone()), g.constant(b.clone()));
        let (t, r) = mfdm.forward(&mut g, &p, ft, fr).unwrap();
        assert_eq!(g.shape(t), &[c, 5, 5]);
        assert_eq!(g.shape(r), &[c, 5, 5]);
        assert!(!g.value(t).bit_eq(&a));

        zero_all(&mut store);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let (ft, fr) = (g.constant(a.clone()), g.constant(b.clone()));
        let (t, r) = mfdm.forward(&mut g, &p, ft, fr).unwrap();
        assert!(g.value(t).bit_eq(&a));
        assert!(g.value(r).bit_eq(&b));
    }
}

#[test]
fn mfdm_identity_kernel_against_ones() {
    let mut store = ParamStore::new();
    let mfdm = Mfdm::new(&mut store, &mut Init::new(8), "mfdm", 3, &MfdmConfig::new(vec![1])).unwrap();
    let conv = &mfdm.t_convs[0];
    let eye = Tensor::from_fn([3, 3, 1, 1], |i| (i / 3 == i % 3) as u8 as f64).unwrap();
    *store.get_mut(conv.weight) = eye;
    store.get_mut(conv.bias).data_mut().fill(0.0);

    let x = rand_t(&[3, 4, 4], 3);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let ft = g.constant(x.clone());
    let fr = g.constant(Tensor::full([3, 4, 4], 1.0).unwrap());
    let (t, _) = mfdm.forward(&mut g, &p, ft, fr).unwrap();
    let fused = mfdm.t_fuse.forward(&mut g, &p, ft).unwrap();
    let want = g.add(fused, ft).unwrap();
    assert!(g.value(t).max_abs_diff(g.value(want)).unwrap() < 1e-15);
}

fn lasb_parts(
    lasb: &Lasb,
    g: &mut Graph,
    p: &alanet::params::Bound,
    ft: Var,
    fr: Var,
    lt: Option<Var>,
    lr: Option<Var>,
) -> (Var, Var) {
    let (t, _) = lasb.lcam_t.forward(g, p, ft, lt).unwrap();
    let (r, _) = lasb.lcam_r.forward(g, p, fr, lr).unwrap();
    lasb.mfdm.forward(g, p, t, r).unwrap()
}

#[test]
fn lasb_composes_per_stream_language() {
    let mut store = ParamStore::new();
    let lasb = Lasb::new(&mut store, &mut Init::new(6), "lasb", 8, &MfdmConfig::default()).unwrap();
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let ft = g.constant(rand_t(&[8, 4, 4], 1));
    let fr = g.constant(rand_t(&[8, 4, 4], 2));
    let lt = g.constant(rand_t(&[1, 8], 3));
    let lr = g.constant(rand_t(&[1, 8], 4));
    for (a, b) in [(None, None), (Some(lt), None), (None, Some(lr)), (Some(lt), Some(lr))] {
        let (t, r) = lasb.forward(&mut g, &p, ft, fr, a, b).unwrap();
        let (wt, wr) = lasb_parts(&lasb, &mut g, &p, ft, fr, a, b);
        assert!(g.value(t).bit_eq(g.value(wt)));
        assert!(g.value(r).bit_eq(g.value(wr)));
    }
    // The transmission caption alone leaves the reflection gate on its visual path.
    let (_, none) = lasb.lcam_r.forward(&mut g, &p, fr, None).unwrap();
    assert!(none.is_none());
    let (t_partial, _) = lasb.forward(&mut g, &p, ft, fr, Some(lt), None).unwrap();
    let (t_none, _) = lasb.forward(&mut g, &p, ft, fr, None, None).unwrap();
    assert!(!g.value(t_partial).bit_eq(g.value(t_none)));
}

#[test]
fn language_width_mismatch_is_rejected() {
    let mut store = ParamStore::new();
    let lcam = Lcam::new(&mut store, &mut Init::new(1), "lcam", 4);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let f = g.constant(rand_t(&[4, 2, 2], 1));
    let l = g.constant(rand_t(&[1, 3], 1));
    assert!(matches!(
        lcam.forward(&mut g, &p, f, Some(l)),
        Err(alanet::Error::Dimension(_))
    ));
}

#[test]
fn module_gradients_match_finite_differences() {
    for seed in 0..2 {
        let opts = SuiteOptions {
            seed,
            ..Default::default()
        };
        for report in module_checks(&opts).unwrap() {
            assert!(report.passed, "{report}");
        }
    }
}
