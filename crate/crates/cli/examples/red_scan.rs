// scratch: criterion-3 estimator stability scan
use decoy_cli::sweep::{run_sweep, NRule, SweepSpec};
fn main() {
    for scale in [1e5, 1e6] {
        for base_seed in [1u64, 2, 3, 4, 5, 6, 7, 8] {
            let mk = |eps: f64| SweepSpec {
                epsilon: eps,
                seeds: 5,
                base_seed,
                ..SweepSpec::with_defaults(
                    (1..=30).map(|i| i as f64 * 0.05).collect(),
                    1e-1,
                    NRule::Scaled(scale),
                )
            };
            let loose = run_sweep(&mk(1e-7)).unwrap();
            let tight = run_sweep(&mk(1e-14)).unwrap();
            // pointwise at the loose optimum's grid index
            let i = loose
                .summaries
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.rate_lo_median.total_cmp(&b.1.rate_lo_median))
                .unwrap()
                .0;
            let red = (loose.summaries[i].rate_lo_median - tight.summaries[i].rate_lo_median)
                / loose.summaries[i].rate_lo_median;
            println!("scale {scale:.0e} base_seed {base_seed}: pointwise-at-optimum reduction {red:.4}");
        }
    }
}
