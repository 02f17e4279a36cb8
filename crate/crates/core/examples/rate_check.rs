//! Cyclic and Batch CAPO on a random MDP, with the gap compared against the
//! guaranteed `O(1/m)` bound along the way.

use capo::capo::{batch_rate_constant, cyclic_rate_constant, train, CriticMode, Generator, StepRule, TrainConfig};
use capo::mdp::make_random_mdp;
use capo::rng::{stream_rng, Stream};
use capo::{Result, SoftmaxTable};

fn main() -> Result<()> {
    let mdp = make_random_mdp(3, 2, 0.9, 1)?;
    let mu = mdp.start_dist().to_vec();
    let runs = [
        ("cyclic", Generator::cyclic(3, 2), StepRule::capo(), 6.0, cyclic_rate_constant(&mu, 2, 0.9)?),
        ("batch", Generator::batch(3, 2), StepRule::ExactLog, 1.0, batch_rate_constant(&mu, 2, 0.9)?),
    ];
    for (name, gen, mut rule, num, c) in runs {
        let mut rng = stream_rng(0, Stream::Coordinates);
        let h = train(&mdp, SoftmaxTable::uniform(3, 2), &gen, &mut rule, &CriticMode::Exact, &TrainConfig::new(2000), &mut rng)?;
        for k in [0, 10, 100, 1000, 2000] {
            let gap = h.records[k].gap;
            let bound = num / (c * (k + 1) as f64);
            println!("{name:>6} m={:<5} gap={gap:.3e} bound={bound:.3e}", k + 1);
        }
    }
    Ok(())
}
