use std::collections::BTreeMap;
use std::time::Instant;

use clap::Args;
use dtrack_core::gradsuite::{model_suite, primitive_suite, CheckResult};

use crate::failure::{Failure, Outcome};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random input draws per primitive
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
}

/// Worst result per check name over every seed, in first-seen order.
fn worst(results: impl IntoIterator<Item = CheckResult>) -> Vec<CheckResult> {
    let mut order = Vec::new();
    let mut by_name: BTreeMap<String, CheckResult> = BTreeMap::new();
    for r in results {
        match by_name.get_mut(&r.name) {
            Some(w) => {
                if !w.max_rel_error.is_nan() && (r.max_rel_error.is_nan() || r.max_rel_error > w.max_rel_error) {
                    *w = r;
                }
            }
            None => {
                order.push(r.name.clone());
                by_name.insert(r.name.clone(), r);
            }
        }
    }
    order.into_iter().map(|n| by_name.remove(&n).expect("name recorded")).collect()
}

pub fn run(args: GradcheckArgs) -> Outcome {
    if args.seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    let start = Instant::now();
    let mut prims = Vec::new();
    for seed in 0..args.seeds {
        prims.extend(primitive_suite(seed).map_err(|e| Failure::Numeric(e.into()))?);
    }
    let models = model_suite().map_err(|e| Failure::Numeric(e.into()))?;

    let mut failed = 0;
    println!("{:<36} {:>12} {:>10}  result", "check", "max rel err", "tolerance");
    for r in worst(prims).into_iter().chain(models) {
        let ok = r.passed();
        if !ok {
            failed += 1;
        }
        println!(
            "{:<36} {:>12.3e} {:>10.0e}  {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            if ok { "ok" } else { "FAIL" }
        );
    }
    println!("finished in {:.2}s", start.elapsed().as_secs_f64());
    if failed > 0 {
        return Err(Failure::Numeric(anyhow::anyhow!("{failed} gradient checks failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(name: &str, e: f64) -> CheckResult {
        CheckResult { name: name.into(), max_rel_error: e, tolerance: 1e-4 }
    }

    #[test]
    fn worst_keeps_max_and_order() {
        let w = worst([r("b", 1e-6), r("a", 1e-7), r("b", 1e-5), r("a", f64::NAN)]);
        assert_eq!(w[0].name, "b");
        assert_eq!(w[0].max_rel_error, 1e-5);
        assert!(w[1].max_rel_error.is_nan());
        assert!(!w[1].passed());
    }
}
