//! Multi-seed bandit study: fixed-step on-policy CAPO versus softmax policy
//! gradient on bandits where both can lock onto a sub-optimal arm.

use capo::baselines::{run_bandit_study, BanditAlgorithm, BanditStudySpec};
use capo::Result;

fn main() -> Result<()> {
    let studies = [
        (BanditAlgorithm::OnCapoFixed { eta: 1.0 }, vec![1.0, 0.99, -1.0]),
        (BanditAlgorithm::Spg { eta: 0.5 }, vec![0.9, 0.8, 0.1]),
        (BanditAlgorithm::OffCapo { clip: 50.0 }, vec![0.9, 0.8, 0.1]),
    ];
    for (alg, rewards) in studies {
        let study = run_bandit_study(&BanditStudySpec::new(alg, rewards.clone(), 200, 10_000))?;
        println!(
            "{:>13} r={rewards:?}: stuck {:.3}, converged {:.3}",
            alg.name(),
            study.stuck_fraction(),
            study.converged_fraction()
        );
    }
    Ok(())
}
