//! Statistical checks of the sampling, fusion and filtering pipeline.

use flowdesign::filtering::{steady_state_info, FilterState};
use flowdesign::model::{DesignVector, FlowModel};
use flowdesign::network::{
    build_measurement_model, effective_information, route_flows, synth_topology, Edge, FlowSpec,
    MeasurementModel, SynthKind, SynthParams, TopologySpec,
};
use flowdesign::simulate::{fuse_gls, gen_random_walk_trace, sample_packets, PacketSample, RawMeasurements};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a → b → c` carrying `a→c` (two hops), `a→b` and `b→c`.
fn line3(sigma2: f64, mu: f64) -> MeasurementModel {
    let flow = |origin, destination| FlowSpec {
        origin,
        destination,
        sigma2,
        mu,
        path: None,
    };
    let t = TopologySpec {
        nodes: vec!["a".into(), "b".into(), "c".into()],
        edges: vec![Edge { from: 0, to: 1 }, Edge { from: 1, to: 2 }],
        flows: vec![flow(0, 2), flow(0, 1), flow(1, 2)],
        budgets: vec![1.0; 3],
    };
    build_measurement_model(&t, &route_flows(&t).unwrap()).unwrap()
}

#[test]
fn thinned_counts_have_binomial_moments() {
    let t = TopologySpec {
        nodes: vec!["a".into(), "b".into()],
        edges: vec![Edge { from: 0, to: 1 }],
        flows: vec![FlowSpec {
            origin: 0,
            destination: 1,
            sigma2: 1.0,
            mu: 1e4,
            path: None,
        }],
        budgets: vec![1.0; 2],
    };
    let mm = build_measurement_model(&t, &route_flows(&t).unwrap()).unwrap();
    let (x, xi) = (1e4, 0.01);
    let reps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z: Vec<f64> = (0..reps)
        .map(|_| {
            let raw = sample_packets(&[x], &mm, &DesignVector::new(vec![xi]), &mut rng).unwrap();
            raw.samples[0].unwrap().estimate
        })
        .collect();
    let mean = z.iter().sum::<f64>() / reps as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let target = x * (1.0 - xi) / xi;
    assert!((mean - x).abs() < 3.0 * (target / reps as f64).sqrt(), "mean {mean}");
    assert!((var / target - 1.0).abs() < 0.05, "var {var} vs {target}");
}

#[test]
fn fusion_matches_dense_gls() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let kind = if seed % 2 == 0 {
            SynthKind::Grid { rows: 3, cols: 3 }
        } else {
            SynthKind::Random { nodes: 8, links: 12 }
        };
        let topo = synth_topology(&SynthParams::new(kind), seed).unwrap();
        let mm = build_measurement_model(&topo, &route_flows(&topo).unwrap()).unwrap();
        let xi = DesignVector::new((0..mm.n_ops()).map(|_| rng.random_range(0.01..1.0)).collect());
        let z: Vec<f64> = (0..mm.n_measurements()).map(|_| rng.random_range(1e4..1e6)).collect();
        let raw = RawMeasurements {
            samples: z.iter().map(|&estimate| Some(PacketSample { count: 0, estimate })).collect(),
        };
        let (y, m) = fuse_gls(&raw, &mm, &xi, mm.flow_model.mu()).unwrap();

        let n_g = mm.n_measurements();
        let d_inv = DMatrix::from_fn(n_g, n_g, |g, h| {
            if g == h {
                mm.psi.iter().zip(xi.as_slice()).map(|(p, x)| x * p[g]).sum()
            } else {
                0.0
            }
        });
        let precision = mm.l.transpose() * &d_inv * &mm.l;
        let rhs = mm.l.transpose() * &d_inv * DVector::from_vec(z);
        let dense = precision.clone().lu().solve(&rhs).unwrap();
        for i in 0..mm.n_flows() {
            let scale = dense[i].abs().max(1.0);
            assert!((y[i].unwrap() - dense[i]).abs() <= 1e-10 * scale, "seed {seed} flow {i}");
            assert!((m.as_slice()[i] - precision[(i, i)]).abs() <= 1e-12 * precision[(i, i)]);
        }
        assert_eq!(precision, mm.gls_precision_dense(&xi));
    }
}

#[test]
fn walk_increments_have_requested_variance() {
    let s2 = 1e4;
    let fm = FlowModel::new(vec![s2], vec![1.0]).unwrap();
    let periods = 100_000;
    let tr = gen_random_walk_trace(&fm, periods, &[1e9], 17).unwrap();
    let d: Vec<f64> = (1..periods).map(|t| tr.x[(t, 0)] - tr.x[(t - 1, 0)]).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Rounding adds 1/12 to the increment variance.
    let target = s2 + 1.0 / 12.0;
    let se = target * (2.0 / (n - 1.0)).sqrt();
    assert!((var - target).abs() < 3.0 * se, "var {var} vs {target} ± {se}");
}

#[test]
fn filter_mse_approaches_steady_state_variance() {
    let (s2, mu, rate) = (1e4, 1e4, 0.01);
    let mm = line3(s2, mu);
    let xi = DesignVector::new(vec![rate; mm.n_ops()]);
    let m = effective_information(&mm, &xi);
    let (periods, burn_in, reps) = (100, 50, 200);
    let mut sq = vec![0.0; mm.n_flows()];
    for rep in 0..reps {
        let tr = gen_random_walk_trace(&mm.flow_model, periods, &[mu; 3], rep).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + rep);
        let mut state = FilterState::diffuse(mm.n_flows());
        for t in 1..=periods {
            let x = tr.period(t);
            let raw = sample_packets(&x, &mm, &xi, &mut rng).unwrap();
            let (y, m_t) = fuse_gls(&raw, &mm, &xi, mm.flow_model.mu()).unwrap();
            state = state.predict_update(&mm.flow_model, &m_t, &y).unwrap();
            if t > burn_in {
                for i in 0..mm.n_flows() {
                    sq[i] += (state.mean[i] - x[i]).powi(2);
                }
            }
        }
    }
    for i in 0..mm.n_flows() {
        let mse = sq[i] / (reps as f64 * (periods - burn_in) as f64);
        let expected = 1.0 / steady_state_info(m.as_slice()[i], s2).unwrap();
        assert!((mse / expected - 1.0).abs() < 0.2, "flow {i}: mse {mse} vs {expected}");
    }
}

#[test]
fn noiseless_sampling_follows_error_recursion() {
    // With ξ = 1 the observations are exact, so the error obeys
    // e(t) = (1 − k_t)(e(t−1) − ε_t) and V(t) = (1 − k_t)²(V(t−1) + σ²).
    let (s2, mu) = (100.0, 1e4);
    let mm = line3(s2, mu);
    let xi = DesignVector::new(vec![1.0; mm.n_ops()]);
    let (periods, reps) = (30, 2000);
    let mut sq = vec![vec![0.0; mm.n_flows()]; periods];
    let mut gains = vec![vec![0.0; mm.n_flows()]; periods];
    for rep in 0..reps {
        let tr = gen_random_walk_trace(&mm.flow_model, periods, &[mu; 3], 50_000 + rep).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(rep);
        let mut state = FilterState::diffuse(mm.n_flows());
        for t in 1..=periods {
            let x = tr.period(t);
            let raw = sample_packets(&x, &mm, &xi, &mut rng).unwrap();
            let (y, m_t) = fuse_gls(&raw, &mm, &xi, mm.flow_model.mu()).unwrap();
            state = state.predict_update(&mm.flow_model, &m_t, &y).unwrap();
            for i in 0..mm.n_flows() {
                sq[t - 1][i] += (state.mean[i] - x[i]).powi(2);
                gains[t - 1][i] = m_t.as_slice()[i] / state.info[i];
            }
        }
    }
    let step_var = s2 + 1.0 / 12.0;
    for i in 0..mm.n_flows() {
        let mut v = 0.0;
        for t in 0..periods {
            let k = gains[t][i];
            v = if t == 0 { 0.0 } else { (1.0 - k).powi(2) * (v + step_var) };
            let emp = sq[t][i] / reps as f64;
            if t == 0 {
                assert!(emp < 1e-18);
            } else {
                assert!((emp / v - 1.0).abs() < 0.12, "flow {i} t {}: {emp} vs {v}", t + 1);
            }
        }
    }
}
