//! Fits a tabular Retrace critic from uniform-behavior rollouts and compares
//! it with the exact Q of the target policy.
//!
//! Run with `cargo run --example retrace_critic`.

use capo::critic::{advantage_signs_from_q, fit_q, QEstimate, ReplayBuffer};
use capo::exact::values_and_advantages;
use capo::mdp::{make_random_mdp, sample_rollout, sample_start};
use capo::policy::SoftmaxTable;
use capo::rng::{stream_rng, Stream};
use capo::{Result, StateActionTable};

fn main() -> Result<()> {
    let mdp = make_random_mdp(3, 2, 0.9, 1)?;
    let behavior = StateActionTable::uniform_policy(3, 2);

    let mut rng = stream_rng(0, Stream::Rollouts);
    let mut buffer = ReplayBuffer::new(500)?;
    for _ in 0..500 {
        let start = sample_start(&mdp, &mut rng);
        buffer.push(sample_rollout(&mdp, &behavior, start, 20, &mut rng)?);
    }

    let targets = [
        ("uniform", behavior.clone()),
        (
            "skewed",
            SoftmaxTable::from_theta(StateActionTable::from_rows(&[
                vec![1.0, -0.5],
                vec![-0.8, 0.6],
                vec![0.3, 0.0],
            ])?)
            .policy()?,
        ),
    ];
    for (name, target) in targets {
        let mut q = QEstimate::new(3, 2, 0.1, 1.0)?;
        fit_q(&buffer, &mut q, &target, mdp.gamma(), mdp.terminal_mask(), 200)?;
        let (_, q_exact, adv) = values_and_advantages(&mdp, &target)?;
        let err = q.q.max_abs_diff(&q_exact);
        let signs = advantage_signs_from_q(&q.q, &target);
        let agree = signs
            .iter()
            .zip(adv.as_slice())
            .filter(|(s, a)| s.as_f64() == a.signum())
            .count();
        println!("{name:>8} target: sup |q - Q| = {err:.4}, advantage signs agree on {agree}/6 pairs");
    }
    Ok(())
}
