mod common;

use common::SpecBuilder;
use fcsim_core::element::{jacobian_fd_error, Probe};
use fcsim_core::fit::mesh::FitMesh;
use fcsim_core::fit::operators::{build_operators, is_exact_zero};
use fcsim_core::fit::SOFT_IRON;
use fcsim_core::formulations::build_tomega;
use fcsim_core::linalg::kernel_projector;
use fcsim_core::netlist::Waveform;
use fcsim_core::solver::pencil_index;
use fcsim_core::topology::disconnects;
use fcsim_core::{classify_index, incidence_blocks, parse_netlist};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0_f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn value() -> impl Strategy<Value = f64> {
    (1e-3..1e3_f64).prop_map(|v| (v * 1e6).round() / 1e6)
}

fn waveform() -> impl Strategy<Value = String> {
    prop_oneof![
        value().prop_map(|v| format!("DC {v}")),
        (value(), value(), -3.0..3.0_f64).prop_map(|(a, f, p)| format!("SIN {a} {f} {p}")),
        (value(), value(), value(), value()).prop_map(|(a, f, e, fp)| format!("SIN {a} {f} 0 PERT {e} {fp}")),
    ]
}

/// Branch lines over nodes `0..=n`, with a spanning chain of inductors so the
/// graph stays connected.
fn netlist_text() -> impl Strategy<Value = String> {
    (2usize..6).prop_flat_map(|n| {
        let extra = prop::collection::vec((0usize..3, 0..=n, 0..=n, value(), waveform()), 0..8);
        (Just(n), extra).prop_map(|(n, extra)| {
            let mut s = String::new();
            for k in 1..=n {
                s.push_str(&format!("L{k} {k} {} 1.5\n", k - 1));
            }
            for (j, (kind, a, b, v, w)) in extra.into_iter().enumerate() {
                let b = if a == b { (a + 1) % (n + 1) } else { b };
                match kind {
                    0 => s.push_str(&format!("R{j} {a} {b} {v}\n")),
                    1 => s.push_str(&format!("C{j} {a} {b} {v}\n")),
                    _ => s.push_str(&format!("V{j} {a} {b} {w}\n")),
                }
            }
            s.push_str(".ground 0\n");
            s
        })
    })
}

/// Passive circuit: inductor chain to ground plus random R and C branches.
fn passive_text() -> impl Strategy<Value = (usize, String)> {
    (2usize..7).prop_flat_map(|n| {
        let extra = prop::collection::vec((any::<bool>(), 0..=n, 0..=n), 0..6);
        (Just(n), extra).prop_map(|(n, extra)| {
            let mut s = String::new();
            for k in 1..=n {
                s.push_str(&format!("L{k} {k} {} 1\n", k - 1));
            }
            for (j, (res, a, b)) in extra.into_iter().enumerate() {
                if a != b {
                    s.push_str(&format!("{}{j} {a} {b} 2\n", if res { "R" } else { "C" }));
                }
            }
            s.push_str(".ground 0\n");
            (n, s)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn netlist_text_round_trips(text in netlist_text()) {
        let doc = parse_netlist(&text).unwrap();
        let again = parse_netlist(&doc.to_text()).unwrap();
        prop_assert_eq!(&again, &doc);
        prop_assert_eq!(again.to_text(), doc.to_text());
    }

    #[test]
    fn kernel_projector_is_orthogonal_projector(
        rows in 1usize..7, inner in 1usize..4, cols in 1usize..6, seed in matrix(7, 10)
    ) {
        let m = seed.view((0, 0), (rows, inner)).into_owned() * seed.view((0, 4), (inner, cols)).into_owned();
        let p = kernel_projector(&m, "m");
        let q = &p.q;
        prop_assert!((q * q - q).amax() < 1e-10);
        prop_assert!((q.transpose() - q).amax() < 1e-12);
        prop_assert!((m.transpose() * q).amax() < 1e-10);
        let rank = fcsim_core::linalg::numerical_rank(&m);
        prop_assert_eq!(p.rank(), rows - rank);
    }

    #[test]
    fn index2_witness_disconnects_and_resistors_cure_it((n, text) in passive_text()) {
        let doc = parse_netlist(&text).unwrap();
        let blocks = incidence_blocks(&doc).unwrap();
        let rep = classify_index(&blocks).unwrap();
        match &rep.li_lambda_cutset {
            Some(ws) => {
                prop_assert_eq!(rep.index, 2);
                for w in ws {
                    prop_assert!(!w.branches.is_empty());
                    prop_assert!(w.branches.iter().all(|b| b.starts_with('L')));
                    prop_assert!(disconnects(&blocks, &w.branches));
                }
            }
            None => prop_assert_eq!(rep.index, 1),
        }

        let mut cured = text.replace(".ground 0\n", "");
        for k in 1..=n {
            cured.push_str(&format!("Rg{k} {k} 0 1\n"));
        }
        cured.push_str(".ground 0\n");
        let rep = classify_index(&incidence_blocks(&parse_netlist(&cured).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(rep.index, 1);
        prop_assert!(rep.li_lambda_cutset.is_none());
    }

    #[test]
    fn pencil_index_is_invariant_under_equivalence(
        m in 0usize..3, k in 0usize..4, j in matrix(3, 3), p in matrix(6, 6), q in matrix(6, 6), s in 0.01..100.0_f64
    ) {
        prop_assume!(m + k > 0);
        let n = m + k;
        let mut e = DMatrix::zeros(n, n);
        let mut a = DMatrix::zeros(n, n);
        for r in 0..m {
            e[(r, r)] = 1.0;
            for c in 0..m {
                a[(r, c)] = j[(r, c)];
            }
        }
        for r in 0..k {
            a[(m + r, m + r)] = 1.0;
            if r + 1 < k {
                e[(m + r, m + r + 1)] = 1.0;
            }
        }
        let expected = k;
        prop_assert_eq!(pencil_index(&e, &a).unwrap(), expected);
        let pm = DMatrix::identity(n, n) + 0.3 * p.view((0, 0), (n, n));
        let qm = DMatrix::identity(n, n) + 0.3 * q.view((0, 0), (n, n));
        prop_assume!(pm.determinant().abs() > 0.1 && qm.determinant().abs() > 0.1);
        let e2 = &pm * &e * &qm * s;
        let a2 = &pm * &a * &qm;
        prop_assert_eq!(pencil_index(&e2, &a2).unwrap(), expected);
    }

    #[test]
    fn discrete_de_rham_sequence_is_exact(
        nx in 1usize..5, ny in 1usize..5, nz in 1usize..5, d in prop::array::uniform3(1e-3..1.0_f64), pin in 0usize..125
    ) {
        let mesh = FitMesh::new([nx, ny, nz], d).unwrap();
        let ops = build_operators(&mesh, pin % mesh.n_nodes());
        prop_assert!(ops.curl_grad_exact());
        prop_assert!(is_exact_zero(&(&ops.div * &ops.c)));
        prop_assert!(is_exact_zero(&(&ops.c * &ops.g)));
        prop_assert_eq!(ops.psi_nodes.len(), mesh.n_nodes() - 1);
    }

    #[test]
    fn soft_iron_law_is_consistent(h in -1e6..1e6_f64) {
        let c = SOFT_IRON;
        let step = 1e-3 * (1.0 + h.abs());
        let fd = (c.b(h + step) - c.b(h - step)) / (2.0 * step);
        prop_assert!((fd - c.db(h)).abs() <= 1e-6 * c.db(h));
        prop_assert!(c.db(h) >= c.db(0.0) * c.mu_sat / c.mu_r);
        prop_assert!((c.h(c.b(h)) - h).abs() <= 1e-9 * (1.0 + h.abs()));
        prop_assert_eq!(c.b(-h), -c.b(h));
    }

    #[test]
    fn zero_perturbation_leaves_waveform_unchanged(
        amp in -10.0..10.0_f64, f in 0.0..1e3_f64, fp in 0.0..1e9_f64, t in 0.0..1.0_f64
    ) {
        let w = Waveform::Sin { amp, freq: f, phase: 0.3, pert: None };
        prop_assert_eq!(w.perturbed(0.0, fp).eval(t), w.eval(t));
        prop_assert_eq!(w.perturbed(1e-4, fp).base(), w);
        let dc = Waveform::Dc(amp);
        prop_assert!((dc.perturbed(0.0, fp).eval(t) - amp).abs() <= 1e-15 * amp.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn saturating_tomega_jacobian_matches_finite_differences(
        x in prop::collection::vec(-1.0..1.0_f64, 64), i in -500.0..500.0_f64, xs in 1e-4..1e-2_f64
    ) {
        let model = SpecBuilder::new(3, "tomega").conductor([1, 1, 1, 2, 2, 2]).coil([0, 0, 1, 3, 3, 2], 1, 20.0).bh("iron").build();
        let el = build_tomega(&model).unwrap();
        let mut p = Probe::zero(&el);
        for (k, v) in p.x.iter_mut().enumerate() {
            *v = xs * x[k % x.len()];
        }
        p.i.iter_mut().for_each(|v| *v = i);
        prop_assert!(jacobian_fd_error(&el, &p, 1e-6) < 1e-5);
    }
}
