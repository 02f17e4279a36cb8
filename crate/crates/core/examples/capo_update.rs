//! One CAPO step by hand, compared with the closed-form weight change.

use capo::capo::{batch_capo_weights, capo_update, predicted_weight_delta, CoordinateBatch, StepRule};
use capo::exact::policy_eval;
use capo::mdp::make_bandit;
use capo::policy::Sign;
use capo::{Result, SoftmaxTable};

fn main() -> Result<()> {
    let rewards = [10.0, 9.9, 9.9, 0.0];
    let mdp = make_bandit(&rewards, 0.9)?;
    let mut table = SoftmaxTable::uniform(2, 4);
    let pi = table.policy()?;
    let adv = policy_eval(&mdp, &pi)?.adv;
    println!("advantages at the start state: {:?}", adv.row(0));

    let batch = CoordinateBatch {
        iteration: 0,
        pairs: vec![(0, 3)],
        sequential: false,
    };
    capo_update(&mut table, &batch, &[Sign::Neg], &mut StepRule::ExactLog)?;
    let predicted = predicted_weight_delta(pi.row(0), 3, Sign::Neg)?.apply(pi.row(0));
    println!("after lowering arm 3: {:.6?}", table.action_probs(0)?);
    println!("closed form:          {predicted:.6?}");

    let signs: Vec<Sign> = adv.row(0).iter().map(|a| Sign::of(*a, 1e-12)).collect();
    println!("full batch with signs {signs:?}: {:.6?}", batch_capo_weights(pi.row(0), &signs)?);
    Ok(())
}
