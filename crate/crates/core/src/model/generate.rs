//! Seeded generators for small test instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Generator, Instance};

/// Size bounds for [`random_tiny_instance`].
#[derive(Debug, Clone, Copy)]
pub struct TinySpec {
    pub max_generators: usize,
    pub max_horizon: usize,
    /// Ramps and startup/shutdown levels equal to `p_max` when set.
    pub loose_ramps: bool,
}

impl Default for TinySpec {
    fn default() -> Self {
        Self { max_generators: 3, max_horizon: 4, loose_ramps: false }
    }
}

fn round2(x: f64) -> f64 {
    (x * 4.0).round() / 4.0
}

fn random_generator(rng: &mut ChaCha8Rng, k: usize, horizon: usize, loose: bool) -> Generator {
    let p_min = round2(rng.random_range(0.0..30.0));
    let p_max = p_min + round2(rng.random_range(10.0..60.0));
    let level = |rng: &mut ChaCha8Rng| if loose || rng.random_bool(0.3) { p_max } else { round2(rng.random_range(p_min..=p_max)) };
    let startup_level = level(rng);
    let shutdown_level = level(rng);
    let ramp = |rng: &mut ChaCha8Rng| if loose || rng.random_bool(0.3) { p_max } else { round2(rng.random_range(5.0..=p_max)) };
    let ramp_up = ramp(rng);
    let ramp_down = ramp(rng);
    let init_on = rng.random_bool(0.5);
    let init_power = if init_on { round2(rng.random_range(p_min..=p_max)) } else { 0.0 };
    Generator {
        id: format!("g{}", k + 1),
        p_min,
        p_max,
        min_up: rng.random_range(1..=horizon as u32),
        min_down: rng.random_range(1..=horizon as u32),
        startup_level,
        shutdown_level,
        ramp_up,
        ramp_down,
        cost_marginal: round2(rng.random_range(10.0..60.0)),
        cost_no_load: round2(rng.random_range(0.0..200.0)),
        cost_startup: round2(rng.random_range(0.0..600.0)),
        init_on,
        init_power,
        init_periods_in_state: rng.random_range(1..=4),
    }
}

/// Random valid instance with `1..=max_generators` units and
/// `1..=max_horizon` periods. Demand lies between 20% and 90% of total
/// capacity; all reals are multiples of 0.25.
pub fn random_tiny_instance(seed: u64, spec: TinySpec) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=spec.max_generators);
    let horizon = rng.random_range(1..=spec.max_horizon);
    let generators: Vec<Generator> = (0..n).map(|k| random_generator(&mut rng, k, horizon, spec.loose_ramps)).collect();
    let capacity: f64 = generators.iter().map(|g| g.p_max).sum();
    // Keeping online units on while ramping down as fast as allowed is always
    // feasible; demand must absorb that output or the problem has no schedule.
    let demand = (0..horizon)
        .map(|t| {
            let floor: f64 = generators
                .iter()
                .filter(|g| g.init_on)
                .map(|g| g.p_min.max(g.init_power - (t + 1) as f64 * g.ramp_down))
                .sum();
            round2(capacity * rng.random_range(0.2..0.9)).max((floor * 4.0).ceil() / 4.0)
        })
        .collect();
    Instance { name: format!("tiny-{seed}"), horizon, voll: 3000.0, demand, generators }
}

/// The fixed set of small instances used by tests and benchmarks.
pub fn tiny_corpus() -> Vec<Instance> {
    let shapes = [(2, 3), (3, 4), (1, 4), (3, 3), (2, 4), (3, 2)];
    shapes
        .iter()
        .enumerate()
        .map(|(k, &(g, t))| {
            // Draw until the requested shape comes up so sizes are fixed.
            let mut seed = 1000 * (k as u64 + 1);
            loop {
                let inst = random_tiny_instance(seed, TinySpec { max_generators: g, max_horizon: t, loose_ramps: false });
                if inst.generators.len() == g && inst.horizon == t {
                    let mut inst = inst;
                    inst.name = format!("tiny{}", k + 1);
                    return inst;
                }
                seed += 1;
            }
        })
        .collect()
}

/// Instances with non-binding ramps (`RU = RD = SU = SD = p_max`), so only
/// capacity and minimum up/down times couple periods.
pub fn tight_relaxation_family(count: usize) -> Vec<Instance> {
    (0..count as u64)
        .map(|k| {
            let mut inst = random_tiny_instance(7000 + k, TinySpec { loose_ramps: true, ..TinySpec::default() });
            inst.name = format!("loose{}", k + 1);
            inst
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn generated_instances_are_valid() {
        for seed in 0..200 {
            let inst = random_tiny_instance(seed, TinySpec::default());
            assert!(validate_instance(&inst).is_empty(), "seed {seed}: {:?}", validate_instance(&inst));
        }
        for inst in tiny_corpus().iter().chain(&tight_relaxation_family(5)) {
            assert!(validate_instance(inst).is_empty());
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(random_tiny_instance(9, TinySpec::default()), random_tiny_instance(9, TinySpec::default()));
    }
}
