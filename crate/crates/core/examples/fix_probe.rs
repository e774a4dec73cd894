use rand_distr::{Distribution, StandardNormal};
use seedbank::diffusion::{step_em, DiffusionState};

fn main() {
    let wf = seedbank::RateMeasure::single_atom(1.0, 1e-12).unwrap();
    let dt = 1e-3f64;
    let mut rng_a = seedbank::rng::derive_stream(1234, &[3]);
    let mut rng_b = seedbank::rng::derive_stream(1234, &[3]);
    let mut x_hand: f64 = 0.5;
    let mut state = DiffusionState::new(0.5, &[0.5]).unwrap();
    for step in 0..50_000 {
        let za: f64 = StandardNormal.sample(&mut rng_a);
        x_hand = (x_hand + (x_hand * (1.0 - x_hand)).max(0.0).sqrt() * dt.sqrt() * za)
            .clamp(0.0, 1.0);
        let zb: f64 = StandardNormal.sample(&mut rng_b);
        step_em(&mut state, &wf, dt, zb).unwrap();
        if step < 3 || (step % 10_000 == 0) || (x_hand - state.x).abs() > 1e-10 {
            println!(
                "step {step}: za={za:.6} zb={zb:.6} hand={x_hand:.12} lib={:.12} y={:.6}",
                state.x, state.y[0]
            );
            if (x_hand - state.x).abs() > 1e-10 && step > 10 {
                break;
            }
        }
    }
}
