//! Finite-difference verification of the attention backward pass and of the
//! aggregation tail, plus a deliberately broken gradient that must be caught.

use agv::aggregation::{check_tail, TailInputs};
use agv::nn::gradcheck::check_attention;
use agv::nn::{GradcheckOptions, ScaleMode, Tensor};
use agv::{init_params, Mode, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> agv::Result<Tensor> {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn main() -> agv::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let opts = GradcheckOptions::default();

    let q = random(&mut rng, 4, 6)?;
    let k = random(&mut rng, 5, 6)?;
    let v = random(&mut rng, 5, 3)?;
    let g = random(&mut rng, 4, 3)?;
    for mode in [ScaleMode::Sqrt, ScaleMode::Linear] {
        let ok = check_attention(&q, &k, &v, &g, mode, false, opts)?;
        let bad = check_attention(&q, &k, &v, &g, mode, true, opts)?;
        println!(
            "attention ({}): worst {:.2e} over {} coords; sign-flipped {:.2e}",
            mode.as_str(),
            ok.worst_error,
            ok.checked,
            bad.worst_error
        );
    }

    for mode in [Mode::SeF0, Mode::SeMe, Mode::SeF0ThenMe, Mode::SeMeThenF0] {
        let cfg = ModelConfig::desk().with_mode(mode, true);
        let store = init_params(&cfg, 1)?;
        let inputs = TailInputs {
            h_sv: random(&mut rng, 6, 8)?,
            h_f0: Some(random(&mut rng, 6, 8)?),
            h_me: Some(random(&mut rng, 6, 8)?),
        };
        let r = check_tail(&store, &cfg.aggregation, &inputs, opts)?;
        println!(
            "tail {:<9} {} params, worst {:.2e} -> {}",
            mode.as_str(),
            r.checked,
            r.worst_error,
            if r.passed() { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
