//! Exact policy evaluation, visitation and `V*` on a small random MDP.

use capo::exact::{optimal_values, perf_difference, policy_eval};
use capo::mdp::make_random_mdp;
use capo::{Result, StateActionTable};

fn main() -> Result<()> {
    let mdp = make_random_mdp(3, 2, 0.9, 7)?;
    let uniform = StateActionTable::uniform_policy(3, 2);
    let prof = policy_eval(&mdp, &uniform)?;
    println!("uniform policy V = {:.4?}", prof.v);
    println!("visitation from mu = {:.4?}", prof.visitation);

    let opt = optimal_values(&mdp, 1e-10)?;
    println!("V* = {:.4?}, greedy actions {:?}", opt.v_star, opt.greedy_actions);

    let gain = perf_difference(&mdp, &opt.greedy, &uniform, mdp.start_dist())?;
    println!("V*(mu) - V_uniform(mu) via advantages: {gain:.6}");
    Ok(())
}
