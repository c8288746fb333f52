//! Builds the parameterization of a flat snowflake and prints its audit and
//! measured distortion.
//!
//! `cargo run --release --example snowflake -- [alpha] [generations]`

use reifenberg::flow::{distortion, sample_base_pairs, PairSampling, ParamMap};
use reifenberg::nets::{audit_ccbp, build_net, fit_ccbp, FitConfig, FitMode, DEFAULT_C_AUDIT};
use reifenberg::sets::{snowflake, AngleSchedule, SnowflakeSpec};
use reifenberg::AffinePlane;

fn main() -> reifenberg::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map_or(0.05, |a| a.parse().expect("alpha is a number"));
    let generations: usize = args.next().map_or(4, |g| g.parse().expect("generations is an integer"));

    let sf = snowflake(&SnowflakeSpec {
        generations,
        angles: AngleSchedule::Constant { alpha },
        boost: None,
        start: [0.0, 0.0],
        end: [1.0, 0.0],
        spacing: 1e-4,
    })?;
    println!("{} samples, length {:.6}", sf.cloud.len(), sf.length());

    let sigma0 = AffinePlane::coordinate(2, 1)?;
    let net = build_net(&sf.cloud, 4, |_, _| true);
    let pm = ParamMap::full(fit_ccbp(&sf.cloud, &net, &sigma0, &FitConfig::new(FitMode::L2, 0.1))?);
    let audit = audit_ccbp(pm.ccbp(), DEFAULT_C_AUDIT);
    println!("audit pass: {} (threshold {})", audit.pass, audit.threshold);
    for c in &audit.conditions {
        let worst = c.worst.as_ref().map_or(0.0, |w| w.value);
        println!("  {:<14} checked {:>6}  worst {worst:.4}", c.name, c.checked);
    }

    let pairs = sample_base_pairs(
        &sigma0,
        &PairSampling {
            count: 2000,
            min_separation: 1e-3,
            max_separation: 0.5,
            seed: 1,
            lower: vec![0.1],
            upper: vec![0.9],
        },
    )?;
    let report = distortion(|z| pm.image(z), &pairs)?;
    println!(
        "ratio |f(x) - f(y)| / |x - y| in [{:.4}, {:.4}], upper Hölder exponent {:.4}",
        report.ratio_min, report.ratio_max, report.holder_upper.exponent
    );
    Ok(())
}
