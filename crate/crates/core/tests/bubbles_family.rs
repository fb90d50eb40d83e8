use critbubble::bubbles::{log_eps_list, rayleigh_bubble, BubbleParams, Cutoff};
use critbubble::constants::SobolevConstants;
use critbubble::family::{family_report, FamilyParams};
use critbubble::weights::{Domain, Weight};

#[test]
fn bubble_quotient_remainder_bounded_by_predicted_power() {
    for n in [3usize, 4, 5] {
        let s = SobolevConstants::cached(n).unwrap().s;
        let d = Domain::ball(n, 1.0).unwrap();
        let w = Weight::constant(1.0).unwrap();
        let power = 1f64.min((n as f64 - 2.0) / 2.0);
        let cs: Vec<f64> = log_eps_list(1e-6, 1e-3, 6)
            .unwrap()
            .into_iter()
            .map(|eps| {
                let bp = BubbleParams::new(n, eps, Cutoff::for_radius(1.0).unwrap()).unwrap();
                let q = rayleigh_bubble(&w, 0.0, &bp, &d).unwrap();
                assert!(q >= s * (1.0 - 1e-12), "quotient below S");
                (q / s - 1.0) / eps.powf(power)
            })
            .collect();
        // Bounded c: the list runs from the largest ε down; n = 4 carries an
        // extra |log ε| factor, which at most doubles over this range.
        assert!(cs.iter().all(|&c| c >= 0.0 && c <= 3.0 * cs[0]), "n={n}: {cs:?}");
    }
}

fn params(t: f64, sigma: Vec<f64>, k: u32) -> FamilyParams {
    FamilyParams { t, sigma, scale_index: k, r0: 0.05, big_r0: 0.5 }
}

#[test]
fn nehari_functional_vanishes_on_lattice() {
    let w = Weight::power(1.0, 1.0, 2.0).unwrap();
    for n in [3usize, 4] {
        let d = Domain::annulus(n, 1e-4, 1.0).unwrap();
        for t in [0.0, 0.4, 0.8] {
            for k in [4u32, 16] {
                for axis in 0..2 {
                    let fp = params(t, FamilyParams::axis(n, axis).unwrap(), k);
                    let rep = family_report(&fp, &w, &d).unwrap();
                    assert!(rep.gamma.abs() <= 1e-8 * rep.energy, "n={n} t={t} k={k}: {}", rep.gamma);
                }
            }
        }
    }
}

#[test]
fn energy_invariant_under_rotation_of_sigma() {
    let w = Weight::power(1.0, 1.0, 2.0).unwrap();
    let n = 3;
    let d = Domain::ball(n, 1.0).unwrap();
    let diag = vec![1.0 / 3f64.sqrt(); 3];
    let mut energies = Vec::new();
    for sigma in [FamilyParams::axis(n, 0).unwrap(), FamilyParams::axis(n, 2).unwrap(), diag] {
        energies.push(family_report(&params(0.6, sigma, 8), &w, &d).unwrap().energy);
    }
    for e in &energies[1..] {
        assert!(((e - energies[0]) / energies[0]).abs() < 1e-8, "{energies:?}");
    }
}
