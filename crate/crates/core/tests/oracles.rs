//! Every best-response oracle against exhaustive search over its vertices,
//! and the class metadata against what the agents actually do.

use proptest::prelude::*;
use rand::Rng;

use privdude::model::{validate, AgentOracle, Play, SeparableProgram};
use privdude::problems::{generate, resample_agent, GenParams, Instance, ProblemKind};
use privdude::rng::{substream, Purpose};

fn small(kind: ProblemKind) -> GenParams {
    match kind {
        ProblemKind::Knapsack => GenParams::new(6, 2),
        ProblemKind::Ddemand => GenParams::new(5, 4).with_d(2),
        ProblemKind::Flow => GenParams::new(4, 3).with_m(2),
        ProblemKind::Schedule => GenParams::new(4, 3).with_m(2).with_d(2),
        ProblemKind::Shared => GenParams::new(4, 3).with_m(3).with_d(2),
    }
}

fn random_prices(program: &SeparableProgram, rng: &mut impl Rng) -> Vec<f64> {
    let hi = 2.0 * program.metadata.tau;
    (0..program.k).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..hi) }).collect()
}

fn best_vertex_utility(vertices: &[Play], lambda: &[f64]) -> f64 {
    vertices.iter().map(|v| v.utility(lambda)).fold(f64::NEG_INFINITY, f64::max)
}

fn check_oracle(oracle: &dyn AgentOracle, lambda: &[f64]) -> Result<(), String> {
    let vertices = oracle.vertices().ok_or("no vertex enumeration")?;
    let br = oracle.best_response(lambda).map_err(|e| e.to_string())?;
    let best = best_vertex_utility(&vertices, lambda);
    let got = br.utility(lambda);
    let tol = 1e-12 * best.abs().max(1.0);
    if (got - best).abs() > tol {
        return Err(format!("best response utility {got} but vertex maximum {best} at {lambda:?}"));
    }
    if !vertices.iter().any(|v| v.point == br.point) {
        return Err(format!("best response {:?} is not a vertex", br.point));
    }
    if oracle.evaluate(&br.point).map_err(|e| e.to_string())? != br {
        return Err("evaluate disagrees with the best response's own play".into());
    }
    Ok(())
}

#[test]
fn best_responses_match_vertex_enumeration() {
    for kind in ProblemKind::ALL {
        for seed in 0..3 {
            let program = generate(kind, small(kind), seed).unwrap().to_program();
            let mut rng = substream(seed, Purpose::Scratch, &[kind as u64]);
            for _ in 0..100 {
                let lambda = random_prices(&program, &mut rng);
                for (agent, oracle) in program.participants() {
                    if let Err(e) = check_oracle(oracle, &lambda) {
                        panic!("{kind} seed {seed} agent {agent}: {e}");
                    }
                }
            }
        }
    }
}

#[test]
fn generated_instances_validate_cleanly() {
    for kind in ProblemKind::ALL {
        for seed in 0..5 {
            let program = generate(kind, small(kind), seed).unwrap().to_program();
            let findings = validate(&program);
            assert!(findings.is_empty(), "{kind} seed {seed}: {findings:?}");
        }
    }
}

#[test]
fn null_actions_follow_the_class() {
    for kind in ProblemKind::ALL {
        let program = generate(kind, small(kind), 1).unwrap().to_program();
        let missing = program.missing_null_action();
        match kind {
            ProblemKind::Flow => assert!(missing.is_some(), "flow agents must route"),
            ProblemKind::Knapsack | ProblemKind::Ddemand | ProblemKind::Shared => {
                assert_eq!(missing, None, "{kind}")
            }
            ProblemKind::Schedule => {}
        }
    }
}

fn kind_strategy() -> impl Strategy<Value = ProblemKind> {
    prop::sample::select(ProblemKind::ALL.to_vec())
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn instance_for(kind: ProblemKind, seed: u64) -> Instance {
    generate(kind, small(kind), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Replacing one agent's data moves the coupling gradient by at most σ in
    // ℓ₂ at any prices.
    #[test]
    fn neighbouring_instances_respect_sensitivity(
        kind in kind_strategy(),
        seed in 0u64..1000,
        agent_pick in 0usize..64,
        other in 0u64..1000,
        price_seed in any::<u64>(),
    ) {
        let inst = instance_for(kind, seed);
        let agent = agent_pick % inst.n();
        let neighbour = resample_agent(&inst, agent, other).unwrap();
        let p = inst.to_program();
        let q = neighbour.to_program();
        // τ and L of a knapsack are read off the data; σ is class-level.
        prop_assert_eq!(p.metadata.sigma, q.metadata.sigma);
        let mut rng = substream(price_seed, Purpose::Scratch, &[]);
        for _ in 0..20 {
            let lambda = random_prices(&p, &mut rng);
            let sum = |prog: &SeparableProgram| -> Vec<f64> {
                let mut l = vec![0.0; prog.k];
                for (_, o) in prog.participants() {
                    for (s, c) in l.iter_mut().zip(o.best_response(&lambda).unwrap().contributions) {
                        *s += c;
                    }
                }
                l
            };
            let d = l2_distance(&sum(&p), &sum(&q));
            prop_assert!(d <= p.metadata.sigma + 1e-9, "{} moved the gradient by {} > σ = {}", kind, d, p.metadata.sigma);
        }
    }

    #[test]
    fn plays_stay_within_declared_bounds(kind in kind_strategy(), seed in 0u64..1000, price_seed in any::<u64>()) {
        let p = instance_for(kind, seed).to_program();
        let m = p.metadata;
        let mut rng = substream(price_seed, Purpose::Scratch, &[1]);
        for _ in 0..20 {
            let lambda = random_prices(&p, &mut rng);
            for (i, o) in p.agents.iter().enumerate() {
                let play = o.best_response(&lambda).unwrap();
                prop_assert!(play.value <= m.value_bound + 1e-12, "agent {} value {}", i + 1, play.value);
                prop_assert!(play.contributions.iter().all(|c| c.abs() <= m.contribution_bound + 1e-12));
                let total: f64 = play.contributions.iter().map(|c| c.abs()).sum();
                prop_assert!(total <= m.total_contribution_bound + 1e-12);
            }
        }
    }
}
