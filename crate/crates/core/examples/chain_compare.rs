//! Cyclic CAPO, Batch CAPO and Off-PAC on the 10-state Chain.

use capo::capo::{train, CriticMode, Generator, StepRule, TrainConfig};
use capo::cli::offpac_curve;
use capo::exact::optimal_values;
use capo::mdp::make_chain;
use capo::rng::{stream_rng, Stream};
use capo::{Result, SoftmaxTable};

fn main() -> Result<()> {
    let mdp = make_chain(10, 0.99, 0.1, 100.0)?;
    let v_star = optimal_values(&mdp, 1e-10)?.v_star[1];
    let cfg = TrainConfig::new(1000);
    let mut rng = stream_rng(0, Stream::Coordinates);
    for (name, gen, mut rule) in [
        ("cyclic", Generator::cyclic(11, 2), StepRule::capo()),
        ("batch", Generator::batch(11, 2), StepRule::ExactLog),
    ] {
        let h = train(&mdp, SoftmaxTable::uniform(11, 2), &gen, &mut rule, &CriticMode::Exact, &cfg, &mut rng)?;
        let first = h.records.iter().find(|r| r.v_mu >= 0.99 * v_star).map(|r| r.m);
        println!("{name:>7}: V(S1)/V* = {:.4}, first within 1% at {first:?}", h.last().v_mu / v_star);
    }
    let off = offpac_curve(&mdp, 1000, 0.001, 16, 0)?;
    println!(" offpac: V(S1)/V* = {:.4}", off[1000] / v_star);
    Ok(())
}
