//! Resource limits shared by the numeric kernels.

/// Default magnitude bound for lattice coordinates (2^40).
pub const DEFAULT_COORD_BOUND: i64 = 1 << 40;

/// Default in-memory grid budget in samples (2^27).
pub const DEFAULT_SAMPLE_BUDGET: usize = 1 << 27;

/// Default accumulation chunk; results are bit-deterministic for a fixed value.
pub const DEFAULT_CHUNK: usize = 1 << 14;

/// Environment variable overriding the grid sample budget.
pub const BUDGET_ENV: &str = "LLAB_BUDGET_SAMPLES";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub coord_bound: i64,
    pub sample_budget: usize,
    pub chunk: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            coord_bound: DEFAULT_COORD_BOUND,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
            chunk: DEFAULT_CHUNK,
        }
    }
}

impl Limits {
    /// Defaults, with the sample budget taken from `LLAB_BUDGET_SAMPLES` when set.
    pub fn from_env() -> Self {
        let mut limits = Limits::default();
        if let Some(budget) = std::env::var(BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
        {
            limits.sample_budget = budget.max(1);
        }
        limits
    }

    pub fn with_sample_budget(mut self, budget: usize) -> Self {
        self.sample_budget = budget.max(1);
        self
    }
}
