//! Seeded Laplace and Gumbel draws, checked against their closed-form laws.
//!
//! cargo run --example noise_samplers

use dp_insights::audit::{check_sampler, SamplerKind};
use dp_insights::noise::{self, RandomStream};

fn main() -> dp_insights::Result<()> {
    let stream = RandomStream::new(2020, 0);
    let a = stream.derive("element/acme");
    let b = stream.derive("element/globex");
    println!("stream ids: acme {:#018x}, globex {:#018x}", a.stream_id, b.stream_id);
    println!("first laplace(1/0.6) draw for acme: {:.6}", a.laplace(1.0 / 0.6)?);
    println!("same again (deterministic):       {:.6}", a.laplace(1.0 / 0.6)?);

    for (kind, scale) in [(SamplerKind::Laplace, 1.0 / 0.6), (SamplerKind::Gumbel, 10.0)] {
        let v = check_sampler(kind, scale, 200_000, 7)?;
        println!(
            "{kind:?}(scale {scale:.3}): mean {:.4} (expect {:.4}), std {:.4} (expect {:.4}), KS {:.5} < {:.5}: {}",
            v.mean,
            v.expected_mean,
            v.std,
            v.expected_std,
            v.ks_statistic,
            v.ks_critical,
            if v.passes { "pass" } else { "fail" }
        );
    }
    println!("laplace std at ε = 0.6: {:.4}", noise::laplace_std(1.0 / 0.6));
    println!("gumbel mean at scale 10: {:.4}", noise::gumbel_mean(10.0));
    Ok(())
}
