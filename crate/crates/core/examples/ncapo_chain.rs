//! Neural CAPO on the Chain, once with exact advantages and once with a
//! replayed Retrace critic.

use capo::capo::EpsSchedule;
use capo::exact::optimal_values;
use capo::mdp::make_chain;
use capo::ncapo::{train_ncapo, NcapoConfig, NcapoMode, ReplaySettings};
use capo::Result;

fn main() -> Result<()> {
    let mdp = make_chain(10, 0.99, 0.1, 100.0)?;
    let v_star = optimal_values(&mdp, 1e-10)?.v_star[1];

    let exact = train_ncapo(&mdp, &NcapoMode::ExactAdv, &NcapoConfig::default())?;
    println!("exact advantages: V(S1)/V* = {:.4}", exact.final_value() / v_star);

    let replay = NcapoMode::ReplayRetrace(ReplaySettings {
        eps: EpsSchedule::constant(1.0),
        rollouts_per_iter: 4,
        rollout_len: 20,
        capacity: 6400,
        kappa: 0.1,
        lambda: 1.0,
        tau_q: 0.05,
        tau_theta: 1.0,
    });
    let cfg = NcapoConfig {
        hidden: 64,
        lr: 0.05,
        grad_steps: 10,
        reverse_kl: true,
        ..NcapoConfig::default()
    };
    let run = train_ncapo(&mdp, &replay, &cfg)?;
    println!("replayed retrace: V(S1)/V* = {:.4}", run.final_value() / v_star);
    Ok(())
}
