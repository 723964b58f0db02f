//! Central finite differences against every analytic gradient.

use rand::{Rng, SeedableRng};

use crate::dataset::TrainingExample;
use crate::model::{ActionModel, LengthModel};
use crate::nn::{Activation, Dense, GruCell, Matrix, ModelRng, Parameterized};
use crate::segment::{ActionSegment, LengthStats};

const EPS: f64 = 1e-6;

fn assert_close(name: &str, idx: usize, analytic: f64, numeric: f64) {
    let tol = 1e-6 + 1e-5 * analytic.abs().max(numeric.abs());
    assert!(
        (analytic - numeric).abs() <= tol,
        "{name}[{idx}]: analytic {analytic:e} vs numeric {numeric:e}"
    );
}

/// Perturbs every scalar parameter of `model` and compares the slope of
/// `loss` with the matching entry of `grads`.
fn check<M: Parameterized + Clone>(model: &M, grads: &M, loss: impl Fn(&M) -> f64) {
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads
        .parameters()
        .into_iter()
        .map(|(_, g)| g.data().to_vec())
        .collect();
    let mut nonzero = 0;
    for (p, name) in names.iter().enumerate() {
        for i in 0..analytic[p].len() {
            let mut plus = model.clone();
            plus.parameters_mut()[p].data_mut()[i] += EPS;
            let mut minus = model.clone();
            minus.parameters_mut()[p].data_mut()[i] -= EPS;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * EPS);
            assert_close(name, i, analytic[p][i], numeric);
            if analytic[p][i].abs() > 1e-9 {
                nonzero += 1;
            }
        }
    }
    assert!(nonzero > 0, "all gradients vanished; the check is vacuous");
}

fn random_examples(rng: &mut ModelRng, vocab: usize, count: usize) -> Vec<TrainingExample> {
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..5);
            let prefix = (0..len)
                .map(|_| ActionSegment::new(rng.gen_range(0..vocab), rng.gen_range(1..60)))
                .collect();
            TrainingExample {
                prefix,
                target: ActionSegment::new(rng.gen_range(0..vocab), rng.gen_range(1..60)),
            }
        })
        .collect()
}

fn stats() -> LengthStats {
    LengthStats::new(25.0, 12.0).unwrap()
}

#[derive(Clone)]
struct Stack {
    gru1: GruCell,
    gru2: GruCell,
    out: Dense,
}

impl Parameterized for Stack {
    fn parameters(&self) -> Vec<(String, &Matrix)> {
        let mut v = Vec::new();
        for (tag, p) in [("gru1", self.gru1.parameters()), ("gru2", self.gru2.parameters())] {
            v.extend(p.into_iter().map(|(n, m)| (format!("{tag}.{n}"), m)));
        }
        v.extend(self.out.parameters().into_iter().map(|(n, m)| (format!("out.{n}"), m)));
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.gru1.parameters_mut();
        v.extend(self.gru2.parameters_mut());
        v.extend(self.out.parameters_mut());
        v
    }
}

#[test]
fn two_layer_gru_stack_with_padding() {
    let mut rng = ModelRng::seed_from_u64(11);
    let stack = Stack {
        gru1: GruCell::new(3, 4, &mut rng),
        gru2: GruCell::new(4, 4, &mut rng),
        out: Dense::new(4, 2, &mut rng),
    };
    let inputs: Vec<Matrix> = (0..4)
        .map(|_| Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    // second row starts one step late, third row two steps late
    let mask: Vec<Vec<bool>> = (0..4).map(|t| vec![true, t >= 1, t >= 2]).collect();
    let target = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 * 0.3 - 0.5);

    let run = |s: &Stack| {
        let (h1, c1) = s.gru1.forward_sequence(&inputs, &mask);
        let (h2, c2) = s.gru2.forward_sequence(&h1, &mask);
        let (y, cy) = s.out.forward(h2.last().unwrap(), Activation::Relu);
        let diff = y.zip_map(&target, |a, b| a - b);
        (0.5 * diff.sum_sq(), diff, c1, c2, cy, h2.len())
    };
    let (_, diff, c1, c2, cy, steps) = run(&stack);
    let mut grads = Stack {
        gru1: GruCell::zeros(3, 4),
        gru2: GruCell::zeros(4, 4),
        out: Dense::zeros(4, 2),
    };
    let d_last = stack.out.backward(&cy, &diff, &mut grads.out);
    let mut d_h2 = vec![Matrix::zeros(3, 4); steps];
    d_h2[steps - 1] = d_last;
    let d_h1 = stack.gru2.backward_sequence(&c2, &d_h2, &mut grads.gru2);
    stack.gru1.backward_sequence(&c1, &d_h1, &mut grads.gru1);

    check(&stack, &grads, |s| run(s).0);
}

#[test]
fn action_model_gradients() {
    let mut rng = ModelRng::seed_from_u64(3);
    let model = ActionModel::new(4, 5, &mut rng);
    let examples = random_examples(&mut rng, 4, 6);
    let refs: Vec<&TrainingExample> = examples.iter().collect();
    let (loss, grads) = model.loss_and_gradients(&refs, &stats(), 0.0, None);
    assert!((loss - model.loss(&refs, &stats())).abs() < 1e-12);
    check(&model, &grads, |m| m.loss(&refs, &stats()));
}

#[test]
fn action_model_gradients_with_dropout() {
    let mut rng = ModelRng::seed_from_u64(4);
    let model = ActionModel::new(3, 6, &mut rng);
    let examples = random_examples(&mut rng, 3, 5);
    let refs: Vec<&TrainingExample> = examples.iter().collect();
    // identical masks on every evaluation: each call gets the same stream
    let mask_rng = ModelRng::seed_from_u64(99);
    let loss = |m: &ActionModel| {
        m.loss_and_gradients(&refs, &stats(), 0.5, Some(&mut mask_rng.clone())).0
    };
    let (_, grads) = model.loss_and_gradients(&refs, &stats(), 0.5, Some(&mut mask_rng.clone()));
    check(&model, &grads, loss);
}

#[test]
fn length_model_gradients() {
    let mut rng = ModelRng::seed_from_u64(5);
    let model = LengthModel::new(4, 5, &mut rng);
    let examples = random_examples(&mut rng, 4, 6);
    let refs: Vec<&TrainingExample> = examples.iter().collect();
    let (loss, grads) = model.loss_and_gradients(&refs, &stats(), 0.0, None);
    assert!((loss - model.loss(&refs, &stats())).abs() < 1e-12);
    check(&model, &grads, |m| m.loss(&refs, &stats()));

    let mask_rng = ModelRng::seed_from_u64(8);
    let (_, grads) = model.loss_and_gradients(&refs, &stats(), 0.3, Some(&mut mask_rng.clone()));
    check(&model, &grads, |m| {
        m.loss_and_gradients(&refs, &stats(), 0.3, Some(&mut mask_rng.clone())).0
    });
}

#[test]
fn gaussian_loss_slope_in_mu() {
    // with zero heads except the μ bias, μ equals that bias and σ = 1
    let mut model = LengthModel::zeros(2, 3);
    let example = TrainingExample {
        prefix: vec![ActionSegment::new(0, 10)],
        target: ActionSegment::new(1, 49),
    };
    let s = stats();
    let target = s.standardize(49.0);
    for mu in [-1.0, 0.0, 0.7, 2.5] {
        model.mu_head.bias.set(0, 0, mu);
        let (loss, grads) = model.loss_and_gradients(&[&example], &s, 0.0, None);
        assert!((loss - 0.5 * (target - mu).powi(2)).abs() < 1e-12);
        assert!((grads.mu_head.bias.get(0, 0) - (mu - target)).abs() < 1e-12);
        // ∂/∂σ at σ = 1 is 1 − r², and σ = exp(b) so ∂/∂b is the same
        let r2 = (target - mu).powi(2);
        assert!((grads.sigma_head.bias.get(0, 0) - (1.0 - r2)).abs() < 1e-12);
    }
}
