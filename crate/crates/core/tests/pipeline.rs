//! Spectral pipeline against dynamics and against independent closed forms.

use std::f64::consts::PI;

use nlslab::compare::extract_frequencies;
use nlslab::flow::evolve;
use nlslab::frequencies::compute_frequencies;
use nlslab::normalization::{trace_identity_check, NormalizationOptions};
use nlslab::spectral::periodic_spectrum;
use nlslab::{Potential, SpectralGrid, StateField};
use num_complex::Complex64;
use proptest::prelude::*;

fn modes(grid: SpectralGrid, list: &[(i64, f64)]) -> StateField {
    StateField::from_mode_fn(grid, |n| {
        list.iter()
            .find(|(m, _)| *m == n)
            .map_or(Complex64::new(0.0, 0.0), |&(_, a)| Complex64::new(a, 0.0))
    })
}

fn frequencies(u: &StateField, k: usize, ns: &[i64]) -> nlslab::FrequencyTable {
    let phi = Potential::from_state(u);
    let gaps = periodic_spectrum(&phi, k).unwrap();
    compute_frequencies(&gaps, ns, &phi, &NormalizationOptions::default())
        .unwrap()
        .1
}

#[test]
fn plane_wave_frequency_is_exact() {
    let grid = SpectralGrid::new(64).unwrap();
    let a = 0.3;
    for n in [1, -2, 3] {
        let table = frequencies(&modes(grid, &[(n, a)]), 8, &[n]);
        let exact = 4.0 * PI * PI * (n * n) as f64 + 2.0 * a * a;
        let got = table.omega(n).unwrap();
        assert!((got - exact).abs() < 1e-8, "n = {n}: {got} vs {exact}");
    }
}

#[test]
fn spectral_frequencies_match_phase_rotation() {
    let grid = SpectralGrid::new(64).unwrap();
    let u = modes(grid, &[(1, 0.5), (-2, 0.2)]);
    let table = frequencies(&u, 8, &[-2, 1]);
    let traj = evolve(&u, 20.0, 1e-4, 50).unwrap();
    let ex = extract_frequencies(&traj, 0.05).unwrap();
    assert_eq!(ex.keys().copied().collect::<Vec<_>>(), vec![-2, 1]);
    for (n, w) in ex {
        let rel = ((table.omega(n).unwrap() - w) / w).abs();
        assert!(rel < 1e-3, "n = {n}: relative difference {rel:.3e}");
    }
}

/// `4π²n² + 4Σ I_k - 2I_n` with `I_k = |û(k)|²`.
fn normal_form(list: &[(i64, f64)], n: i64) -> f64 {
    let total: f64 = list.iter().map(|(_, a)| a * a).sum();
    let own = list
        .iter()
        .find(|(m, _)| *m == n)
        .map_or(0.0, |(_, a)| a * a);
    4.0 * PI * PI * (n * n) as f64 + 4.0 * total - 2.0 * own
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn small_data_frequencies_follow_normal_form(
        a in 0.01f64..0.08,
        b in 0.01f64..0.08,
        m in 1i64..4,
    ) {
        let list = [(m, a), (-m - 1, b)];
        let grid = SpectralGrid::new(32).unwrap();
        let u = modes(grid, &list);
        let ns: Vec<i64> = (-6..=6).collect();
        let phi = Potential::from_state(&u);
        let gaps = periodic_spectrum(&phi, 8).unwrap();
        let (sigmas, table) = compute_frequencies(&gaps, &ns, &phi, &NormalizationOptions::default()).unwrap();
        let size = a * a + b * b;
        for n in ns {
            let err = (table.omega(n).unwrap() - normal_form(&list, n)).abs();
            prop_assert!(err < 2.0 * size * size, "n = {}: {:.3e} vs {:.3e}", n, err, size * size);
        }
        for s in &sigmas {
            prop_assert!(trace_identity_check(&gaps, s).unwrap() < 1e-9);
        }
    }
}
