//! On-policy CAPO escapes a bad initialization that traps a fixed step size.

use capo::baselines::{run_bandit_study, BanditAlgorithm, BanditStudySpec};
use capo::Result;

fn main() -> Result<()> {
    let rewards = vec![10.0, 9.9, 9.9, 0.0];
    let theta0 = vec![0.0, 3.0, 3.0, 0.0];
    for alg in [BanditAlgorithm::OnCapo { beta: 0.2, zeta: 0.25 }, BanditAlgorithm::OnCapoFixed { eta: 0.1 }] {
        let spec = BanditStudySpec::new(alg, rewards.clone(), 50, 10_000).with_theta0(theta0.clone());
        let study = run_bandit_study(&spec)?;
        let reached = study.fraction(|o| o.first_converged.is_some());
        let first = study.outcomes.iter().filter_map(|o| o.first_converged).max();
        println!("{:>13}: reached pi(a*) > 0.99 on {reached:.2} of seeds, slowest at {first:?}", alg.name());
    }
    Ok(())
}
