mod common;

use std::collections::BTreeMap;

use fgeq::elim::{build_tree, EdgeKind, Limits};
use fgeq::eqsys::{enumerate_partition_tables, generalized_equations, EquationSystem, TableOptions};
use fgeq::geq::{GeJson, GeneralizedEquation};
use fgeq::gog::{conjugate_boundary, random_gog, GraphOfGroups, Oriented};
use fgeq::oracle::{random_solved_geq, small_systems, solve_geq_capped, FuzzShape, Strategy as Search};
use fgeq::periodic::{
    extract_structure, periodic_decompose, random_period, random_periodic_instance, validate_structure,
};
use fgeq::quadr::{is_strictly_quadratic, parse_standard_quadratic};
use fgeq::transform::{d4_kernel, d5_entire_all};
use fgeq::word::{cancellation_triple, graphical_eq, is_period, reduce, Letter, Word};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn word(max: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec((0u16..2, any::<bool>()), 0..=max).prop_map(|ls| {
        Word::from_letters(ls.into_iter().map(|(s, n)| if n { Letter::c(s).inv() } else { Letter::c(s) }))
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn active_items(g: &GeneralizedEquation) -> usize {
    (1..=g.rho).filter(|&i| g.is_active_item(i)).count()
}

proptest! {
    #[test]
    fn reduce_is_idempotent_and_shrinks(w in word(12)) {
        let r = reduce(&w);
        prop_assert_eq!(reduce(&r), r.clone());
        prop_assert!(r.len() <= w.len());
        prop_assert!(r.is_reduced());
    }

    #[test]
    fn graphical_equality_versus_group_equality(u in word(6), v in word(6)) {
        if graphical_eq(&u, &v) {
            prop_assert_eq!(reduce(&u), reduce(&v));
        } else if reduce(&u) == reduce(&v) {
            prop_assert!(!u.is_reduced() || !v.is_reduced());
        }
    }

    #[test]
    fn cancellation_triple_lengths(u in word(8), v in word(8)) {
        let (u, v) = (reduce(&u), reduce(&v));
        let (r, s, t) = cancellation_triple(&u, &v);
        prop_assert_eq!(r.len() + s.len(), u.len());
        prop_assert_eq!(s.len() + t.len(), v.len());
    }

    #[test]
    fn periods_are_closed_under_rotation(w in word(8)) {
        if is_period(&w) {
            for k in 0..w.len() {
                prop_assert!(is_period(&w.rotate(k)));
            }
        }
    }

    #[test]
    fn decomposition_recovers_the_power(seed in any::<u64>(), r in 2usize..5, inverse in any::<bool>()) {
        let mut rng = rng(seed);
        let p = random_period(&mut rng, &[Letter::c(0), Letter::c(1)], 4);
        let q = if inverse { p.inverse() } else { p.clone() };
        let k = rng.gen_range(0..q.len());
        let a = q.rotate(k);
        let cut = rng.gen_range(0..a.len());
        let w = a.power(r as i64).concat(&a.subword(0, cut));
        let d = periodic_decompose(&w, &p).unwrap().expect("periodic");
        prop_assert_eq!(d.r, r);
        prop_assert_eq!(d.a.power(d.r as i64).concat(&d.a1), w);
        prop_assert_eq!(d.chi, if inverse { -1 } else { 1 });
    }

    #[test]
    fn standard_quadratic_shapes(n in 0usize..3, m in 0usize..3, squares in any::<bool>(), d in any::<bool>()) {
        prop_assume!(n + m > 0);
        let mut atoms = Vec::new();
        let mut k = 0;
        let mut var = || { k += 1; format!("x{k}") };
        for _ in 0..n {
            if squares {
                let x = var();
                atoms.push(format!("{x} {x}"));
            } else {
                let (x, y) = (var(), var());
                atoms.push(format!("[{x},{y}]"));
            }
        }
        for i in 0..m {
            let z = var();
            atoms.push(format!("{z}^-1 {} {z}", if i % 2 == 0 { "a" } else { "b a" }));
        }
        if d {
            atoms.push("b".into());
        }
        let s = EquationSystem::parse(&format!("constants: a b\n{}", atoms.join(" "))).unwrap();
        let q = parse_standard_quadratic(&s).unwrap();
        prop_assert!(is_strictly_quadratic(&s));
        prop_assert_eq!(q.kappa, s.occurring_variables().len() + usize::from(d));
        prop_assert_eq!(q.genus, n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_tables_satisfy_their_conditions(i in 0usize..490) {
        let systems = small_systems(4);
        let s = &systems[i % systems.len()];
        for t in enumerate_partition_tables(s, TableOptions::default()).unwrap() {
            prop_assert!(t.check(s).is_ok());
        }
    }

    #[test]
    fn solvable_members_are_formally_consistent(i in 0usize..73) {
        let systems = small_systems(3);
        let s = &systems[i % systems.len()];
        for m in generalized_equations(s, TableOptions::default()).unwrap() {
            let g = &m.built.geq;
            if !solve_geq_capped(g, 2, 2, Search::Propagate, 1).unwrap().is_empty() {
                prop_assert!(g.is_formally_consistent());
            }
        }
    }

    #[test]
    fn fuzzed_solved_equations_are_consistent(seed in any::<u64>()) {
        let (g, u) = random_solved_geq(&mut rng(seed), FuzzShape::default());
        prop_assert!(g.is_solution(&u));
        prop_assert!(g.is_formally_consistent());
    }

    #[test]
    fn canonical_form_ignores_base_ids(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let (g, _) = random_solved_geq(&mut rng, FuzzShape::default());
        let cs = vec!["a".to_string(), "b".to_string()];
        let mut j: GeJson = g.to_json(&cs);
        let mut ids: Vec<usize> = j.bases.iter().map(|b| b.id).collect();
        let old = ids.clone();
        ids.shuffle(&mut rng);
        let map: BTreeMap<usize, usize> = old.into_iter().zip(ids.into_iter().map(|x| x + 100)).collect();
        for b in &mut j.bases {
            b.id = map[&b.id];
            b.dual = b.dual.map(|d| map[&d]);
        }
        j.bases.shuffle(&mut rng);
        for c in &mut j.connections {
            c[1] = map[&c[1]];
        }
        let h = GeneralizedEquation::from_json(&j).unwrap();
        prop_assert_eq!(h.canonical_form(), g.canonical_form());
        prop_assert!(h.iso_eq(&g));
    }

    #[test]
    fn section_transport_keeps_tau(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let (g, _) = random_solved_geq(&mut rng, FuzzShape::default());
        for m in candidates(&g).into_iter().filter(|m| matches!(m, Move::D2(..))) {
            for (o, _) in apply(&g, m, &mut rng).unwrap_or_default() {
                prop_assert_eq!(o.measures().tau, g.measures().tau);
            }
        }
    }

    #[test]
    fn kernel_is_a_closure(seed in any::<u64>()) {
        let shape = FuzzShape { connections: false, ..FuzzShape::default() };
        let (g, _) = random_solved_geq(&mut rng(seed), shape);
        let (k, _) = d4_kernel(&g).unwrap();
        let (kk, removed) = d4_kernel(&k).unwrap();
        prop_assert!(removed.is_empty());
        prop_assert_eq!(kk.canonical_form(), k.canonical_form());
    }

    #[test]
    fn entire_transformation_never_grows(seed in any::<u64>()) {
        let (g, _) = random_solved_geq(&mut rng(seed), FuzzShape::default());
        if let Ok(outs) = d5_entire_all(&g, None) {
            for o in outs {
                prop_assert!(o.geq.measures().tau <= g.measures().tau);
                prop_assert!(active_items(&o.geq) <= active_items(&g));
            }
        }
    }

    #[test]
    fn auxiliary_edges_leave_case_fifteen(seed in any::<u64>()) {
        let (g, _) = random_solved_geq(&mut rng(seed), FuzzShape::default());
        let t = build_tree(&g, &Limits { depth: 4, nodes: 300, ..Limits::default() });
        for e in &t.edges {
            prop_assert!(e.from < e.to);
            prop_assert_eq!(t.nodes[e.to].parent, Some(e.from));
            if e.kind == EdgeKind::Auxiliary {
                prop_assert_eq!(t.nodes[e.from].case.case, 15);
                prop_assert!(t.nodes[e.from].case.sub);
            }
        }
    }

    #[test]
    fn trees_are_deterministic(seed in any::<u64>()) {
        let (g, _) = random_solved_geq(&mut rng(seed), FuzzShape::default());
        let lim = Limits { depth: 3, nodes: 200, ..Limits::default() };
        prop_assert_eq!(build_tree(&g, &lim).to_dot(), build_tree(&g, &lim).to_dot());
    }

    #[test]
    fn periodic_structures_validate(seed in any::<u64>()) {
        let (g, h, p) = random_periodic_instance(&mut rng(seed), &[Letter::c(0), Letter::c(1)]);
        let ps = extract_structure(&g, &h, &p).unwrap();
        prop_assert!(validate_structure(&g, &ps).is_empty());
    }

    #[test]
    fn graphs_of_groups_roundtrip_and_conjugate(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g = random_gog(&mut rng);
        let t = g.default_tree();
        prop_assert!(g.check_tree(&t).is_ok());
        prop_assert!(GraphOfGroups::from_json(&g.to_json(Some(&t))).unwrap().iso_eq(&g));
        if !g.edges.is_empty() {
            let e = Oriented { edge: rng.gen_range(0..g.edges.len()), rev: rng.gen() };
            let h = vec![1, 1, -1 - (rng.gen_range(0..g.vertices[g.origin(e)].group.generators.len()) as i32)];
            let c = conjugate_boundary(&g, e, &h).unwrap();
            prop_assert!(c.validate().is_ok());
            prop_assert_eq!(c.invariants().unwrap(), g.invariants().unwrap());
        }
    }
}
