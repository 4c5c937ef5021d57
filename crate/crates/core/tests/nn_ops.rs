use nilm_core::nn::{
    bigru_forward, conv1d_forward, dense_forward, dropout, flatten, gru_cell_step, relu, LayerSpec, Network, ParamStore,
};
use nilm_core::rng::{stream, Stream};
use nilm_core::{Error, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn store(entries: &[(&str, Tensor)]) -> ParamStore {
    let mut p = ParamStore::new();
    for (name, v) in entries {
        p.insert(*name, v.clone()).unwrap();
    }
    p
}

#[test]
fn conv_hand_case() {
    let spec = LayerSpec::conv1d("c", 2, 1);
    let p = store(&[("c.kernel", t(&[2, 1, 1], &[1.0, 1.0])), ("c.bias", t(&[1], &[0.0]))]);
    let y = conv1d_forward(&t(&[3, 1], &[1.0, 2.0, 3.0]), &spec, &p).unwrap();
    assert_eq!(y.shape(), &[3, 1]);
    assert_eq!(y.data(), &[3.0, 5.0, 3.0]);
}

#[test]
fn conv_table_shape_and_zero_input() {
    let spec = LayerSpec::conv1d("c1", 10, 30);
    let net = Network::build(&[79, 1], std::slice::from_ref(&spec), &mut stream(1, Stream::Init)).unwrap();
    let y = conv1d_forward(&Tensor::zeros(&[79, 1]), &spec, &net.params).unwrap();
    assert_eq!(y.shape(), &[79, 30]);
    assert!(y.data().iter().all(|v| *v == 0.0));
}

#[test]
fn conv_shape_mismatch_is_config_error() {
    let spec = LayerSpec::conv1d("c", 3, 2);
    let p = store(&[("c.kernel", Tensor::zeros(&[2, 1, 2])), ("c.bias", Tensor::zeros(&[2]))]);
    let err = conv1d_forward(&Tensor::zeros(&[5, 1]), &spec, &p).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn dense_hand_cases() {
    let spec = LayerSpec::dense("d", 2);
    let p = store(&[
        ("d.weight", t(&[2, 2], &[1.0, 0.0, 0.0, 2.0])),
        ("d.bias", t(&[2], &[1.0, 1.0])),
    ]);
    assert_eq!(
        dense_forward(&t(&[2], &[1.0, 2.0]), &spec, &p).unwrap().data(),
        &[2.0, 5.0]
    );

    let n = 4;
    let mut eye = vec![0.0; n * n];
    (0..n).for_each(|i| eye[i * n + i] = 1.0);
    let spec = LayerSpec::dense("i", n);
    let p = store(&[("i.weight", t(&[n, n], &eye)), ("i.bias", Tensor::zeros(&[n]))]);
    let x = t(&[n], &[0.5, -1.0, 7.25, 0.0]);
    assert_eq!(dense_forward(&x, &spec, &p).unwrap(), x);

    let wrong = t(&[3], &[1.0, 2.0, 3.0]);
    assert!(matches!(dense_forward(&wrong, &spec, &p), Err(Error::Config(_))));
}

#[test]
fn s2p_dense_width() {
    let spec = LayerSpec::dense("dense", 1024);
    let net = Network::build(&[3950], std::slice::from_ref(&spec), &mut stream(2, Stream::Init)).unwrap();
    let y = dense_forward(&Tensor::zeros(&[3950]), &spec, &net.params).unwrap();
    assert_eq!(y.shape(), &[1024]);
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate order (update, reset, candidate) along the 3·units axis.
fn oracle_gru_step(x: &[f64], h: &[f64], wx: &[f64], wh: &[f64], b: &[f64]) -> Vec<f64> {
    let (n, u) = (x.len(), h.len());
    let col = |gate: usize, j: usize| gate * u + j;
    let xw = |c: usize| (0..n).map(|i| x[i] * wx[i * 3 * u + c]).sum::<f64>();
    let hw = |c: usize| (0..u).map(|i| h[i] * wh[i * 3 * u + c]).sum::<f64>();
    (0..u)
        .map(|j| {
            let z = sigmoid(xw(col(0, j)) + hw(col(0, j)) + b[col(0, j)]);
            let r = sigmoid(xw(col(1, j)) + hw(col(1, j)) + b[col(1, j)]);
            let cand = (xw(col(2, j)) + r * hw(col(2, j)) + b[col(2, j)]).tanh();
            (1.0 - z) * h[j] + z * cand
        })
        .collect()
}

fn gru_store(prefix: &str, wx: &[f64], wh: &[f64], b: &[f64], n: usize, u: usize) -> Vec<(String, Tensor)> {
    vec![
        (format!("{prefix}.input_weight"), t(&[n, 3 * u], wx)),
        (format!("{prefix}.recurrent_weight"), t(&[u, 3 * u], wh)),
        (format!("{prefix}.bias"), t(&[3 * u], b)),
    ]
}

fn into_store(entries: Vec<(String, Tensor)>) -> ParamStore {
    let mut p = ParamStore::new();
    for (k, v) in entries {
        p.insert(k, v).unwrap();
    }
    p
}

#[test]
fn gru_cell_hand_cases() {
    let zeros = into_store(gru_store("g.fwd", &[0.0; 3], &[0.0; 3], &[0.0; 3], 1, 1));
    let step =
        |x: f64, h: f64, p: &ParamStore| gru_cell_step(&t(&[1], &[x]), &t(&[1], &[h]), "g", p).unwrap().data()[0];
    assert_eq!(step(0.0, 0.0, &zeros), 0.0);
    assert_eq!(step(0.0, 1.0, &zeros), 0.5);

    let ones = into_store(gru_store("g.fwd", &[1.0; 3], &[1.0; 3], &[0.0; 3], 1, 1));
    let expected = sigmoid(1.0) * 1f64.tanh();
    assert!((step(1.0, 0.0, &ones) - expected).abs() < 1e-15);
    assert!((expected - 0.556_769_941_145_939_7).abs() < 1e-15);
}

#[test]
fn gru_cell_matches_oracle_on_random_weights() {
    let mut rng = stream(9, Stream::Synthetic);
    let (n, u) = (3, 4);
    let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let (wx, wh, b, x, h) = (draw(n * 3 * u), draw(u * 3 * u), draw(3 * u), draw(n), draw(u));
    let p = into_store(gru_store("g.fwd", &wx, &wh, &b, n, u));
    let got = gru_cell_step(&t(&[n], &x), &t(&[u], &h), "g", &p).unwrap();
    let want = oracle_gru_step(&x, &h, &wx, &wh, &b);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

fn random_bigru(units: usize, input: usize, seed: u64) -> (LayerSpec, ParamStore) {
    let spec = LayerSpec::bigru("g", units, false);
    let net = Network::build(
        &[6, input],
        std::slice::from_ref(&spec),
        &mut stream(seed, Stream::Init),
    )
    .unwrap();
    (spec, net.params)
}

fn oracle_direction(seq: &[Vec<f64>], p: &ParamStore, dir: &str, u: usize) -> Vec<Vec<f64>> {
    let get = |s: &str| p.get(&format!("g.{dir}.{s}")).unwrap().value.data().to_vec();
    let (wx, wh, b) = (get("input_weight"), get("recurrent_weight"), get("bias"));
    let mut h = vec![0.0; u];
    seq.iter()
        .map(|x| {
            h = oracle_gru_step(x, &h, &wx, &wh, &b);
            h.clone()
        })
        .collect()
}

#[test]
fn bigru_final_states_match_per_direction_runs() {
    let (u, n, len) = (128, 3, 6);
    let (spec, p) = random_bigru(u, n, 4);
    let mut rng = stream(5, Stream::Synthetic);
    let seq: Vec<Vec<f64>> = (0..len)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let x = t(&[len, n], &seq.concat());
    let y = bigru_forward(&x, &spec, &p, false).unwrap();
    assert_eq!(y.shape(), &[256]);
    let fwd = oracle_direction(&seq, &p, "fwd", u);
    let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
    let bwd = oracle_direction(&rev, &p, "bwd", u);
    let want = [fwd[len - 1].clone(), bwd[len - 1].clone()].concat();
    for (a, b) in y.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-13);
    }

    let s = bigru_forward(&x, &spec, &p, true).unwrap();
    assert_eq!(s.shape(), &[len, 256]);
    for step in 0..len {
        let row = &s.data()[step * 256..(step + 1) * 256];
        for j in 0..u {
            assert!((row[j] - fwd[step][j]).abs() < 1e-13);
            assert!((row[u + j] - bwd[len - 1 - step][j]).abs() < 1e-13);
        }
    }
}

#[test]
fn bigru_sequence_width_64() {
    let spec = LayerSpec::bigru("g", 64, true);
    let net = Network::build(&[5, 16], std::slice::from_ref(&spec), &mut stream(6, Stream::Init)).unwrap();
    let y = bigru_forward(&Tensor::filled(&[5, 16], 0.3), &spec, &net.params, true).unwrap();
    assert_eq!(y.shape(), &[5, 128]);
}

#[test]
fn bigru_single_step_is_symmetric() {
    let (u, n) = (8, 2);
    let (spec, mut p) = random_bigru(u, n, 7);
    for s in ["input_weight", "recurrent_weight", "bias"] {
        let v = p.get(&format!("g.fwd.{s}")).unwrap().value.clone();
        p.get_mut(&format!("g.bwd.{s}")).unwrap().value = v;
    }
    let y = bigru_forward(&t(&[1, n], &[0.4, -1.1]), &spec, &p, true).unwrap();
    assert_eq!(y.data()[..u], y.data()[u..]);
}

#[test]
fn relu_flatten_and_dropout() {
    assert_eq!(relu(&t(&[3], &[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
    let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let f = flatten(&m);
    assert_eq!(f.shape(), &[6]);
    assert_eq!(f.data(), m.data());

    let x = t(&[4], &[1.0, -2.0, 3.0, 0.5]);
    assert_eq!(dropout(&x, 0.5, &mut stream(1, Stream::Dropout), false).unwrap(), x);
    assert!(matches!(
        dropout(&x, 1.0, &mut stream(1, Stream::Dropout), true),
        Err(Error::Config(_))
    ));
}

#[test]
fn dropout_keeps_mean_over_a_million_ones() {
    let ones = Tensor::filled(&[1_000_000], 1.0);
    let y = dropout(&ones, 0.5, &mut stream(11, Stream::Dropout), true).unwrap();
    let mean = y.data().iter().sum::<f64>() / 1e6;
    assert!((0.99..=1.01).contains(&mean), "{mean}");
    assert!(y.data().iter().all(|v| *v == 0.0 || *v == 2.0));
}

#[test]
fn dropout_masks_vary_but_replay() {
    let x = Tensor::filled(&[256], 1.0);
    let mut rng = stream(3, Stream::Dropout);
    let a = dropout(&x, 0.5, &mut rng, true).unwrap();
    let b = dropout(&x, 0.5, &mut rng, true).unwrap();
    assert_ne!(a, b);
    let mut again = stream(3, Stream::Dropout);
    assert_eq!(dropout(&x, 0.5, &mut again, true).unwrap(), a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_same_padding_preserves_length(len in 1usize..40, ch in 1usize..4, k in 1usize..11, f in 1usize..6) {
        let spec = LayerSpec::conv1d("c", k, f);
        let net = Network::build(&[len, ch], std::slice::from_ref(&spec), &mut stream(1, Stream::Init)).unwrap();
        let y = conv1d_forward(&Tensor::filled(&[len, ch], 0.5), &spec, &net.params).unwrap();
        prop_assert_eq!(y.shape(), &[len, f]);
    }

    #[test]
    fn conv_matches_direct_sum(x in prop::collection::vec(-5.0f64..5.0, 1..30), k in 1usize..8) {
        let len = x.len();
        let spec = LayerSpec::conv1d("c", k, 1);
        let kernel: Vec<f64> = (0..k).map(|i| i as f64 - 1.5).collect();
        let p = store(&[("c.kernel", t(&[k, 1, 1], &kernel)), ("c.bias", t(&[1], &[0.25]))]);
        let y = conv1d_forward(&t(&[len, 1], &x), &spec, &p).unwrap();
        let left = (k - 1) / 2;
        for i in 0..len {
            let mut s = 0.25;
            for j in 0..k {
                let src = i as isize + j as isize - left as isize;
                if src >= 0 && (src as usize) < len {
                    s += kernel[j] * x[src as usize];
                }
            }
            prop_assert!((y.data()[i] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_preserves_elements(rows in 1usize..10, cols in 1usize..10) {
        let x = Tensor::filled(&[rows, cols], 2.0);
        prop_assert_eq!(flatten(&x).len(), rows * cols);
    }

    #[test]
    fn bigru_doubles_features(len in 1usize..6, units in 1usize..9) {
        let spec = LayerSpec::bigru("g", units, true);
        let net = Network::build(&[len, 2], std::slice::from_ref(&spec), &mut stream(2, Stream::Init)).unwrap();
        let y = bigru_forward(&Tensor::filled(&[len, 2], 0.1), &spec, &net.params, true).unwrap();
        prop_assert_eq!(y.shape(), &[len, 2 * units]);
    }
}
