//! Checks the MLP's analytic gradients against central finite differences.

use aggmatch::model::{Architecture, ModelState};
use aggmatch::numerics::{cross_entropy, ClassDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(model: &ModelState, x: &[f64], target: &ClassDistribution) -> f64 {
    cross_entropy(target, &model.forward(x).unwrap().distribution)
}

fn main() -> aggmatch::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = ModelState::init(Architecture::new(6, vec![10, 8], 4)?, &mut rng);
    let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target = ClassDistribution::from_weights(vec![0.1, 0.6, 0.2, 0.1])?;

    let out = model.forward(&x)?;
    let d_logits: Vec<f64> = out.distribution.iter().zip(target.iter()).map(|(p, t)| p - t).collect();
    let mut grads = model.gradients();
    model.backward_and_accumulate(&out, &d_logits, None, &mut grads)?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, g) in grads.params().enumerate() {
        let mut plus = model.clone();
        *plus.params_mut().nth(i).unwrap() += h;
        let mut minus = model.clone();
        *minus.params_mut().nth(i).unwrap() -= h;
        let fd = (loss(&plus, &x, &target) - loss(&minus, &x, &target)) / (2.0 * h);
        let scale = fd.abs().max(g.abs());
        if scale > 1e-7 {
            worst = worst.max((fd - g).abs() / scale);
        }
    }
    println!("{} parameters checked, max relative error {worst:.3e}", model.param_count());
    Ok(())
}
