use super::*;
use crate::bundled;
use crate::network::config::parse_config;

fn hybrid() -> Network {
    parse_network(bundled::PROTEIN_HYBRID).unwrap()
}

#[test]
fn hybrid_classification() {
    let net = hybrid();
    let by_name = |n: &str| net.reactions.iter().find(|r| r.name == n).unwrap();
    // Translation and protein decay leave the discrete mRNA count unchanged;
    // transcription and mRNA decay change it.
    assert_eq!(by_name("transcription").class, ReactionClass::Jump);
    assert_eq!(by_name("translation").class, ReactionClass::Flow);
    assert_eq!(by_name("protein_decay").class, ReactionClass::Flow);
    assert_eq!(by_name("mrna_decay").class, ReactionClass::Jump);
    // Abundant-source counts.
    assert_eq!(by_name("transcription").abundant_sources, 0);
    assert_eq!(by_name("translation").abundant_sources, 0);
    assert_eq!(by_name("protein_decay").abundant_sources, 1);
    assert_eq!(by_name("mrna_decay").abundant_sources, 0);
}

#[test]
fn translation_stoichiometry() {
    let net = hybrid();
    let r = net.reactions.iter().find(|r| r.name == "translation").unwrap();
    let mrna = net.species_index("mrna").unwrap();
    let protein = net.species_index("protein").unwrap();
    assert_eq!(r.nu[mrna], 1);
    assert_eq!(r.nu_prime[mrna], 1);
    assert_eq!(r.nu_prime[protein], 1);
    // The catalytic mRNA source binds to (and suppresses) the mRNA product.
    assert_eq!(r.consume, vec![false]);
    let inserted: Vec<(usize, bool)> =
        r.products.iter().copied().zip(r.inserted.iter().copied()).collect();
    assert!(inserted.contains(&(protein, true)));
    assert!(inserted.contains(&(mrna, false)));
    // Order bookkeeping.
    assert_eq!(r.order(), 1);
    let total_nu: u32 = r.nu.iter().sum();
    assert_eq!(total_nu as usize, r.order());
}

#[test]
fn scaled_rate_factor_examples() {
    // Unary flow reaction with one abundant source and an N-independent
    // factor keeps its scaled factor equal to the base factor at every N.
    let net = parse_network(bundled::PROTEIN_DIFFUSIVE).unwrap();
    let r = net.reactions.iter().find(|r| r.name == "translation").unwrap();
    let y = crate::geometry::ORIGIN;
    for n in [1u32, 7, 100, 4096] {
        assert!((r.scaled_rate_factor(n, &y, 0.0) - 1.0).abs() < 1e-12);
    }

    // Hybrid translation: flow class with no abundant source, base factor
    // blown up by N; the N^{-1} scaling cancels it exactly.
    let net = hybrid();
    let r = net.reactions.iter().find(|r| r.name == "translation").unwrap();
    assert_eq!(r.rate.scale_exponent, 1);
    for n in [1u32, 4, 400] {
        assert!((r.scaled_rate_factor(n, &y, 0.0) - 0.5).abs() < 1e-12);
    }
    // Jump reactions with no abundant sources keep their bare factor.
    let r1 = net.reactions.iter().find(|r| r.name == "transcription").unwrap();
    for n in [1u32, 400] {
        assert!((r1.scaled_rate_factor(n, &y, 0.0) - 2.0).abs() < 1e-12);
    }
    // Every bundled network is balanced: scaled factors have no residual N.
    for r in &net.reactions {
        assert_eq!(r.limit_exponent(), 0, "{}", r.name);
    }
}

#[test]
fn class_invariant_under_source_permutation() {
    let species = vec![
        Species {
            name: "a".into(),
            locality: Locality::Localized { anchor: crate::geometry::ORIGIN },
            abundance: Abundance::Small,
            motion: Motion::FROZEN,
        },
        Species {
            name: "b".into(),
            locality: Locality::Diffusive,
            abundance: Abundance::Big,
            motion: Motion { drift: crate::geometry::ORIGIN, sigma2: 1.0 },
        },
    ];
    let mk = |sources: Vec<usize>| {
        classify_reaction(
            "perm",
            sources,
            vec![true, true],
            vec![],
            ReactionLocality::Localized { location: crate::geometry::ORIGIN },
            RateFactor::constant(1.0),
            &species,
        )
        .unwrap()
    };
    let r1 = mk(vec![0, 1]);
    let r2 = mk(vec![1, 0]);
    assert_eq!(r1.class, r2.class);
    assert_eq!(r1.abundant_sources, r2.abundant_sources);
    // Abundant-first relabeling puts the big species in slot 0 either way.
    assert_eq!(r1.sources, r2.sources);
}

#[test]
fn reaction_with_no_small_species_is_flow() {
    let net = parse_network(bundled::PROTEIN_DIFFUSIVE).unwrap();
    for r in &net.reactions {
        assert_eq!(r.class, ReactionClass::Flow, "{}", r.name);
    }
}

#[test]
fn rejects_localized_species_produced_off_anchor() {
    // Localized species may only be created by a reaction pinned at their
    // anchor; a non-localized producer must be rejected.
    let text = r#"
        [domain]
        bounds = [[0.0, 1.0]]
        [kernel]
        epsilon = 0.1
        family = "epanechnikov"
        [scaling]
        n = 10
        [[species]]
        name = "l"
        anchor = [0.5]
        abundance = "small"
        [[species]]
        name = "d"
        sigma2 = 0.01
        [[reactions]]
        name = "bad"
        sources = ["d"]
        products = ["l"]
        rate = { kind = "constant", c = 1.0 }
    "#;
    let err = parse_network(text).unwrap_err();
    assert!(err.to_string().contains("away from its anchor"), "{err}");
}

#[test]
fn rejects_small_diffusive_species() {
    let text = r#"
        [domain]
        bounds = [[0.0, 1.0]]
        [kernel]
        epsilon = 0.1
        family = "epanechnikov"
        [scaling]
        n = 10
        [[species]]
        name = "d"
        abundance = "small"
        sigma2 = 0.01
    "#;
    assert!(parse_network(text).is_err());
}

#[test]
fn rejects_unknown_species_reference() {
    let text = r#"
        [domain]
        bounds = [[0.0, 1.0]]
        [kernel]
        epsilon = 0.1
        family = "epanechnikov"
        [scaling]
        n = 10
        [[species]]
        name = "d"
        sigma2 = 0.01
        [[reactions]]
        name = "r"
        sources = ["ghost"]
        products = []
        rate = { kind = "constant", c = 1.0 }
    "#;
    let err = parse_network(text).unwrap_err();
    assert!(err.to_string().contains("ghost"));
}

#[test]
fn syntax_errors_carry_position() {
    let err = parse_network("domain = {").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line"), "no position info in: {msg}");
}

#[test]
fn config_round_trips_derived_fields() {
    for text in [
        bundled::PROTEIN_DIFFUSIVE,
        bundled::PROTEIN_DIFFUSIVE_HILL,
        bundled::PROTEIN_HYBRID,
        bundled::BIRTH_DEATH_SPATIAL,
        bundled::MASS_ACTION,
    ] {
        let cfg = parse_config(text).unwrap();
        let back = parse_config(&cfg.to_config_string()).unwrap();
        assert_eq!(cfg.network.scale, back.network.scale);
        assert_eq!(cfg.network.species.len(), back.network.species.len());
        for (a, b) in cfg.network.reactions.iter().zip(&back.network.reactions) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.nu, b.nu);
            assert_eq!(a.nu_prime, b.nu_prime);
            assert_eq!(a.class, b.class);
            assert_eq!(a.abundant_sources, b.abundant_sources);
            assert_eq!(a.sources, b.sources);
            assert_eq!(a.consume, b.consume);
            assert_eq!(a.rate, b.rate);
        }
        assert_eq!(cfg.initial.len(), back.initial.len());
    }
}

#[test]
fn stoichiometry_sums_match_order() {
    for text in [bundled::PROTEIN_DIFFUSIVE, bundled::PROTEIN_HYBRID, bundled::MASS_ACTION] {
        let net = parse_network(text).unwrap();
        for r in &net.reactions {
            let nu_sum: u32 = r.nu.iter().sum();
            let nup_sum: u32 = r.nu_prime.iter().sum();
            assert_eq!(nu_sum as usize, r.sources.len());
            assert_eq!(nup_sum as usize, r.products.len());
        }
    }
}

#[test]
fn hill_factor_shapes() {
    let y = crate::geometry::ORIGIN;
    let repress = RateFactor {
        kind: RateKind::HillRepress { c1: 2.0, c2: 1.0, k: 2.0 },
        mass: None,
        scale_exponent: 0,
    };
    assert!((repress.eval(&y, 0.0) - 2.0).abs() < 1e-15);
    assert!((repress.eval(&y, 1.0) - 1.0).abs() < 1e-15);
    assert_eq!(repress.sup(100.0), 2.0);

    let activate = RateFactor {
        kind: RateKind::HillActivate { c1: 3.0, c2: 1.0, k: 2.0 },
        mass: None,
        scale_exponent: 0,
    };
    assert_eq!(activate.eval(&y, 0.0), 0.0);
    assert!((activate.eval(&y, 1.0) - 1.5).abs() < 1e-15);
    assert!(activate.sup(4.0) <= 3.0);

    let sat = RateFactor {
        kind: RateKind::Saturating { c1: 1.0, c2: 1.0 },
        mass: None,
        scale_exponent: 0,
    };
    assert!((sat.eval(&y, 1.0) - 0.5).abs() < 1e-15);
}

#[test]
fn spatial_table_interpolates() {
    let d = Domain::new(&[[0.0, 1.0]]).unwrap();
    let f = RateFactor {
        kind: RateKind::SpatialTable {
            cells: vec![3],
            values: vec![1.0, 2.0, 1.0],
            lo: d.lo,
            hi: d.hi,
        },
        mass: None,
        scale_exponent: 0,
    };
    f.validate(&d).unwrap();
    assert!((f.eval(&point_from(&[0.0]), 0.0) - 1.0).abs() < 1e-15);
    assert!((f.eval(&point_from(&[0.5]), 0.0) - 2.0).abs() < 1e-15);
    assert!((f.eval(&point_from(&[0.25]), 0.0) - 1.5).abs() < 1e-15);
    assert_eq!(f.sup(0.0), 2.0);
}

use crate::geometry::point_from;
