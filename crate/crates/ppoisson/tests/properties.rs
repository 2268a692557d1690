use proptest::prelude::*;

use ppoisson::calculus::{divergence, gradient, hessian, inner, inner_vec, laplacian, mean};
use ppoisson::mesh::Edge;
use ppoisson::plap::{flux, monotonicity_terms, p_laplacian, theta, theta_lower_bound};
use ppoisson::solve::truncate_rhs;
use ppoisson::spectral::{alpha_p, contraction_bound, regularity_interval, BochnerFactor};
use ppoisson::verify::algebra::{alpha_margin, key_sample, q_min};
use ppoisson::{Domain, RegParams};

fn torus_field(dim: usize, n: usize) -> impl Strategy<Value = (Domain, Vec<f64>)> {
    let nv = n.pow(dim as u32);
    prop::collection::vec(-1.0..1.0f64, nv).prop_map(move |u| (Domain::torus(dim, n, 1.0).unwrap(), u))
}

/// Ring with chords, random positive weights, measures and lengths.
fn random_graph() -> impl Strategy<Value = Domain> {
    (5usize..12).prop_flat_map(|nv| {
        (prop::collection::vec(0.2..3.0f64, nv), prop::collection::vec((0.2..3.0f64, 0.5..2.0f64), nv + 2)).prop_map(
            move |(measure, ew)| {
                let mut edges: Vec<Edge> = (0..nv).map(|i| Edge { a: i, b: (i + 1) % nv, weight: ew[i].0, length: ew[i].1 }).collect();
                edges.push(Edge { a: 0, b: nv / 2, weight: ew[nv].0, length: ew[nv].1 });
                edges.push(Edge { a: 1, b: nv - 2, weight: ew[nv + 1].0, length: ew[nv + 1].1 });
                Domain::graph(measure, edges, 0.0, 2.0).unwrap()
            },
        )
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts_on_grids((d, u) in torus_field(2, 8), phi in prop::collection::vec(-1.0..1.0f64, 64)) {
        let lhs = inner_vec(&d, &gradient(&d, &u), &gradient(&d, &phi));
        let rhs = -inner(&d, &phi, &laplacian(&d, &u));
        let scale = inner_vec(&d, &gradient(&d, &u), &gradient(&d, &u)).sqrt()
            * inner_vec(&d, &gradient(&d, &phi), &gradient(&d, &phi)).sqrt();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn summation_by_parts_on_graphs(d in random_graph(), seed in any::<u64>()) {
        let nv = d.num_vertices();
        let u: Vec<f64> = (0..nv).map(|i| ((seed >> (i % 60)) as f64 * 1e-3).sin()).collect();
        let phi: Vec<f64> = (0..nv).map(|i| ((i as f64 + 0.3) * (seed % 97) as f64).cos()).collect();
        let lhs = inner_vec(&d, &gradient(&d, &u), &gradient(&d, &phi));
        let rhs = -inner(&d, &phi, &laplacian(&d, &u));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn laplacian_is_div_grad_and_hessian_trace((d, u) in torus_field(3, 4)) {
        let lap = laplacian(&d, &u);
        prop_assert_eq!(&lap, &divergence(&d, &gradient(&d, &u)));
        let h = hessian(&d, &u).unwrap();
        prop_assert_eq!(&h.trace(), &lap);
        for v in 0..h.len() {
            let a = h.at(v);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(a[i * 3 + j], a[j * 3 + i]);
                }
            }
        }
    }

    #[test]
    fn gradient_of_constant_vanishes(c in -1e3..1e3f64) {
        let d = Domain::torus(2, 8, 1.0).unwrap();
        prop_assert!(gradient(&d, &vec![c; 64]).magnitude().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn p_laplacian_identities((d, u) in torus_field(2, 8), p in 1.1..4.0f64, c in -5.0..5.0f64, eps in 0.0..1e-2f64) {
        let rp = RegParams::new(p, eps, f64::INFINITY);
        let lu = p_laplacian(&d, &u, &rp);
        let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
        let ls = p_laplacian(&d, &shifted, &rp);
        let scale = lu.max_abs().max(1e-300);
        prop_assert!(lu.iter().zip(ls.iter()).all(|(a, b)| (a - b).abs() <= 1e-9 * scale));
        prop_assert!(mean(&d, &lu).abs() <= 1e-12 * scale);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let fl = flux(&d, &u, &rp);
        let fneg = flux(&d, &neg, &rp);
        prop_assert!(fl.data.iter().zip(&fneg.data).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn theta_is_bounded((d, u) in torus_field(2, 8), p in 2.0..5.0f64, n in 2.0..10.0f64, eps in 1e-8..1.0f64) {
        let th = theta(&gradient(&d, &u), &RegParams::new(p, eps, f64::INFINITY), n).unwrap();
        let lo = theta_lower_bound(p, n);
        prop_assert!(th.iter().all(|&t| t >= lo - 1e-15 && t <= 1.0 + 1e-15));
    }

    #[test]
    fn monotonicity_is_nonnegative(v in prop::collection::vec(-2.0..2.0f64, 3), w in prop::collection::vec(-2.0..2.0f64, 3), p in 1.1..5.0f64) {
        let (lhs, rhs) = monotonicity_terms(&v, &w, p);
        prop_assert!(lhs >= -1e-12 * rhs.max(1e-300));
        prop_assert!(rhs >= 0.0);
        if v != w {
            prop_assert!(lhs > 0.0);
        }
    }

    #[test]
    fn regularity_interval_contains_two_and_shrinks(n in 2.0..50.0f64, d1 in 0.0..0.9f64, d2 in 0.0..0.9f64) {
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let a = regularity_interval(n, lo).unwrap();
        let b = regularity_interval(n, hi).unwrap();
        prop_assert!(a.0 < 2.0 && 2.0 < a.1);
        prop_assert!(a.0 <= b.0 + 1e-15 && b.1 <= a.1 + 1e-12);
    }

    #[test]
    fn contraction_below_one_inside_interval(n in 2.0..50.0f64, t in 0.01..0.99f64) {
        let (lo, hi) = regularity_interval(n, 0.0).unwrap();
        let hi = if hi.is_finite() { hi } else { 50.0 };
        let p = lo + t * (hi - lo);
        prop_assert!(contraction_bound(p, n, 1.0, 0.0, BochnerFactor::InverseGap) < 1.0);
        prop_assert!(alpha_p(p, n) < 1.0);
    }

    #[test]
    fn q_polynomial_admissible_alphas_are_positive(p in 1.1..4.0f64, n in 2.5..20.0f64, slack in 0.0..2.0f64) {
        // alphas strictly above the threshold keep Q positive on [0,1]
        let alpha = 0.5 * (p - 3.0 - (p - 1.0) / (n - 1.0)) + slack + 1e-6;
        prop_assert!(alpha_margin(p, n, alpha) > 0.0);
        prop_assert!(q_min(p, n, alpha) > 0.0);
    }

    #[test]
    fn key_inequality_holds(a in prop::collection::vec(-1.0..1.0f64, 9), v in prop::collection::vec(-1.0..1.0f64, 3)) {
        // symmetrize a 3x3 matrix
        let mut s = a.clone();
        for i in 0..3 {
            for j in 0..3 {
                s[i * 3 + j] = 0.5 * (a[i * 3 + j] + a[j * 3 + i]);
            }
        }
        prop_assert!(key_sample(&s, &v, 3).ok);
    }

    #[test]
    fn truncation_has_zero_mean(f in prop::collection::vec(-10.0..10.0f64, 32), n in 0.1..20.0f64) {
        let d = Domain::circle(32, 1.0).unwrap();
        let t = truncate_rhs(&d, &f, n).unwrap();
        prop_assert!(mean(&d, &t).abs() <= 1e-12 * (1.0 + n));
    }

    #[test]
    fn torus_measure_is_volume(dim in 1usize..4, n in 4usize..9, side in 0.1..10.0f64) {
        let d = Domain::torus(dim, n, side).unwrap();
        prop_assert!(rel_close(d.total_measure(), side.powi(dim as i32), 1e-13));
    }

    #[test]
    fn balls_commute_with_translation(shift in 0usize..64, c in 0usize..64, r in 0.0..0.8f64) {
        let d = Domain::torus(2, 8, 1.0).unwrap();
        let g = d.grid().unwrap();
        let translate = |v: usize| {
            let [i, j, _] = g.coords(v);
            let [si, sj, _] = g.coords(shift);
            (i + si) % 8 + 8 * ((j + sj) % 8)
        };
        let b = d.ball(c, r);
        let moved = d.ball(translate(c), r);
        let mut image: Vec<usize> = b.members.iter().map(|&v| translate(v)).collect();
        image.sort_unstable();
        prop_assert_eq!(image, moved.members);
    }

    #[test]
    fn graph_distances_satisfy_triangle_inequality(d in random_graph()) {
        let nv = d.num_vertices();
        for a in 0..nv {
            for b in 0..nv {
                for c in 0..nv {
                    prop_assert!(d.distance(a, c) <= d.distance(a, b) + d.distance(b, c) + 1e-12);
                }
            }
        }
    }
}
