//! Compress, frame, unframe and decode across the public API.

use hsq_core::codebook::{Codebook, CodebookMethod};
use hsq_core::fedsim::{FedConfig, LrSchedule, Simulator};
use hsq_core::{hsq, wire, Problem, QuantizerScheme, SplitMix64, Variant};
use proptest::prelude::*;

fn method_for(square: bool, pick: u8) -> CodebookMethod {
    if square {
        [CodebookMethod::Sob, CodebookMethod::RandomRotation][pick as usize % 2]
    } else {
        CodebookMethod::RandomGaussian
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn framed_gradients_roundtrip(
        d in 1usize..200,
        dp in 1usize..12,
        extra in 0usize..10,
        s in 0u32..70,
        greedy in any::<bool>(),
        pick in any::<u8>(),
        seed in any::<u64>(),
    ) {
        let m = dp + extra;
        let cb = Codebook::generate(method_for(extra == 0, pick), dp, m, seed).unwrap();
        let mut rng = SplitMix64::new(seed);
        let g = rng.gaussian_vec(d);
        let variant = if greedy { Variant::Greedy } else { Variant::Unbiased };
        let cg = hsq::compress(&g, &cb, s, variant, &mut rng).unwrap();
        let bytes = wire::encode(&cg).unwrap();
        let payload = wire::hsq_payload_bits(d, dp, m, s);
        prop_assert_eq!(bytes.len() as u64, wire::FRAME_HEADER_BYTES as u64 + payload.div_ceil(8));
        let back = wire::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &cg);
        let a = hsq::decode(&cg, &cb).unwrap();
        let b = hsq::decode(&back, &cb).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn coordinator_average_is_unbiased_over_rounds() {
    let p = Problem::quadratic(8, 400, 0.5, 1).unwrap();
    let cfg = FedConfig {
        num_clients: 40,
        clients_per_round: 8,
        rounds: 1,
        local_batch: 4,
        lr: LrSchedule::Constant { eta: 0.01 },
        scheme: QuantizerScheme::Hsq(hsq_core::HsqParams {
            variant: Variant::Unbiased,
            segment_dim: 4,
            codeword_count: 4,
            levels: 0,
            codebook: CodebookMethod::Sob,
            codebook_seed: 0,
        }),
        downlink_compressed: false,
        seed: 7,
        eval_every: 1,
    };
    let sim = Simulator::new(cfg, &p).unwrap();
    let x = vec![0.3; 8];
    let full = p.full_gradient(&x);
    let trials = 20_000;
    let mut sum = [0.0; 8];
    let mut sq = [0.0; 8];
    for r in 1..=trials {
        let (g, _) = sim.round_gradient(&x, r).unwrap();
        for k in 0..8 {
            sum[k] += g[k];
            sq[k] += g[k] * g[k];
        }
    }
    let n = trials as f64;
    for k in 0..8 {
        let mean = sum[k] / n;
        let var = sq[k] / n - mean * mean;
        let z = (mean - full[k]) / (var / n).sqrt();
        assert!(z.abs() < 4.0, "coordinate {k}: z = {z}");
    }
}
