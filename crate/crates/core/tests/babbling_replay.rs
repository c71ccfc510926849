use g2p_core::babbling::{generate, BabblingKind, NaiveParams, NaturalParams};
use g2p_core::plant::{run_open_loop, Environment, PlantParams, PlantState, LEGS};

fn replay_limit_contacts(kind: BabblingKind, seed: u64) -> (usize, usize) {
    let params = PlantParams::<f64>::default();
    let naive = NaiveParams::default();
    let natural = NaturalParams::default();
    let left = generate(kind, 120.0, 200.0, seed * 2 + 1, &naive, &natural).unwrap();
    let right = generate(kind, 120.0, 200.0, seed * 2 + 2, &naive, &natural).unwrap();
    let start = PlantState::hanging(Environment::in_air(1.0));
    let mut log = run_open_loop(&start, &left, &right, &params).unwrap();
    // The straight hanging pose starts on the knee stop; skip the first second.
    for leg in 0..LEGS {
        log.legs[leg].drain(..200);
    }
    let hits = (0..LEGS).map(|leg| log.limit_contacts(leg, &params.geometry)).sum();
    (hits, LEGS * log.legs[0].len())
}

#[test]
fn natural_babbling_never_reaches_a_joint_stop() {
    for seed in 0..4 {
        let (hits, _) = replay_limit_contacts(BabblingKind::Natural, seed);
        assert_eq!(hits, 0, "seed {seed}: {hits}");
    }
}

#[test]
fn naive_babbling_spends_time_on_the_stops() {
    for seed in 0..4 {
        let (hits, total) = replay_limit_contacts(BabblingKind::Naive, seed);
        let fraction = hits as f64 / total as f64;
        assert!(fraction > 0.05, "seed {seed}: {fraction}");
    }
}
