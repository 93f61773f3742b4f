//! Experiment drivers. Each random draw comes from a stream keyed by what
//! it is for, so reports are identical across reruns and worker counts.

pub mod shell;
pub mod synthetic;
pub mod training;

pub use shell::{verify_thin_shell, ExceedanceTable, ShellSource};
pub use synthetic::{
    run_deriv_histogram, run_synthetic_norms, run_width_sweep, ArmConfig, ConcentrationReport,
    Histogram, HistogramConfig, InputKind, RatioReport, SyntheticConfig, WidthSweepConfig,
};
pub use training::{train_classifier, TrainConfig, TrainingLog};

/// Map `f` over `items` on up to `workers` threads, keeping input order.
pub fn par_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let mut buckets: Vec<Vec<(usize, T)>> = (0..workers).map(|_| Vec::new()).collect();
    for (i, item) in items.into_iter().enumerate() {
        buckets[i % workers].push((i, item));
    }
    let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = buckets
            .into_iter()
            .map(|bucket| {
                let f = &f;
                scope.spawn(move || {
                    bucket
                        .into_iter()
                        .map(|(i, t)| (i, f(t)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter()
        .map(|r| r.expect("every item mapped"))
        .collect()
}
