mod common;

use scriptworld::agents::{dqn_loss_and_grad, reinforce_loss_and_grad, ChoiceScorer, EpisodeStep, Transition};
use scriptworld::GameRng;

use common::{max_relative_error, random_features, random_grad_case, random_reward};

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

#[test]
fn dqn_gradient_matches_finite_differences() {
    let mut rng = GameRng::new(100);
    for _ in 0..20 {
        let case = random_grad_case(&mut rng);
        let q = ChoiceScorer::new(case.dim, &case.hidden, &mut rng);
        let target = ChoiceScorer::new(case.dim, &case.hidden, &mut rng);
        let batch: Vec<Transition> = (0..1 + rng.index(6))
            .map(|_| Transition {
                features: random_features(&mut rng, &case),
                action: rng.index(case.num_choices),
                reward: random_reward(&mut rng),
                next_features: rng.bernoulli(0.7).then(|| random_features(&mut rng, &case)),
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grad) = dqn_loss_and_grad(&q, &target, &refs, case.gamma);
        let err = max_relative_error(
            &grad,
            &q.net.params,
            |p| {
                let mut probe = q.clone();
                probe.net.params = p.to_vec();
                dqn_loss_and_grad(&probe, &target, &refs, case.gamma).0
            },
            H,
            FLOOR,
        );
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn reinforce_gradient_matches_finite_differences() {
    let mut rng = GameRng::new(200);
    for _ in 0..20 {
        let case = random_grad_case(&mut rng);
        let policy = ChoiceScorer::new(case.dim, &case.hidden, &mut rng);
        let episode: Vec<EpisodeStep> = (0..1 + rng.index(6))
            .map(|_| EpisodeStep {
                features: random_features(&mut rng, &case),
                action: rng.index(case.num_choices),
                reward: random_reward(&mut rng),
            })
            .collect();
        let baseline = rng.unit() * 4.0 - 2.0;
        let (_, grad) = reinforce_loss_and_grad(&policy, &episode, case.gamma, baseline);
        let err = max_relative_error(
            &grad,
            &policy.net.params,
            |p| {
                let mut probe = policy.clone();
                probe.net.params = p.to_vec();
                reinforce_loss_and_grad(&probe, &episode, case.gamma, baseline).0
            },
            H,
            FLOOR,
        );
        assert!(err < 1e-4, "relative error {err}");
    }
}
