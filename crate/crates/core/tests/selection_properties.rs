use numerolab::channel::{child_seed, kmh_to_mps, snr_db_to_noise, ChannelCondition};
use numerolab::interference::PowerEstimator;
use numerolab::numerology::{default_candidate_set, SystemConfig};
use numerolab::selection::{SetEstimate, Selector};

const SNRS: [f64; 8] = [0.0, 7.0, 14.0, 21.0, 28.0, 35.0, 42.0, 49.0];

fn grid_conditions(cfg: &SystemConfig) -> Vec<ChannelCondition> {
    let mut out = Vec::new();
    for vi in 0..10 {
        for di in 0..10 {
            let delay = 0.2e-6 + 9.8e-6 * di as f64 / 9.0;
            let v = kmh_to_mps(1.0 + 499.0 * vi as f64 / 9.0);
            out.push(ChannelCondition::new(delay, v, 1.0, cfg).unwrap());
        }
    }
    out
}

fn estimates(n_real: usize) -> Vec<SetEstimate> {
    let cfg = SystemConfig::standard();
    let set = default_candidate_set(&cfg);
    let selector = Selector::new(PowerEstimator::new(cfg));
    grid_conditions(&cfg)
        .iter()
        .enumerate()
        .map(|(i, c)| selector.estimate(c, &set, n_real, child_seed(77, i as u64)).unwrap())
        .collect()
}

#[test]
fn labels_stable_when_realizations_double_and_oracle_dominates() {
    let a = estimates(250);
    let b = estimates(500);
    let mut flips = 0;
    let mut total = 0;
    for (ea, eb) in a.iter().zip(&b) {
        for snr in SNRS {
            let noise = snr_db_to_noise(snr);
            let oa = ea.oracle(noise).unwrap();
            let ob = eb.oracle(noise).unwrap();
            total += 1;
            if oa.chosen_index != ob.chosen_index {
                flips += 1;
            }
            let base = eb.baseline(noise).unwrap();
            assert!(ob.loss_db() <= base.loss_db() + 1e-12);
            for u in 1..=eb.len() {
                let f = eb.fixed(u, noise).unwrap();
                let se = f.chosen().std_err.max(ob.chosen().std_err);
                assert!(ob.loss_db() <= f.loss_db() + 3.0 * se, "u={u} snr={snr}");
            }
        }
    }
    assert!(flips * 20 <= total, "{flips} of {total} labels flipped");
}

#[test]
fn estimates_are_deterministic_per_seed() {
    let cfg = SystemConfig::standard();
    let set = default_candidate_set(&cfg);
    let selector = Selector::new(PowerEstimator::new(cfg));
    let c = ChannelCondition::new(4e-6, kmh_to_mps(300.0), 1.0, &cfg).unwrap();
    let x = selector.estimate(&c, &set, 50, 5).unwrap();
    let y = selector.estimate(&c, &set, 50, 5).unwrap();
    assert_eq!(x.losses(0.01).unwrap(), y.losses(0.01).unwrap());
}
