use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for trial `trial` of a batch seeded by `master`.
pub fn trial_rng(master: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng
}

/// Picks measurement outcomes. Every Born-rule sample in the simulator goes through this trait,
/// so runs can be driven by a seeded RNG or by a fixed script for exhaustive enumeration.
pub trait OutcomeSource {
    /// Returns an index into `probs`. Outcomes with zero probability are never returned.
    fn choose(&mut self, probs: &[f64]) -> usize;
}

impl<R: RngCore> OutcomeSource for R {
    fn choose(&mut self, probs: &[f64]) -> usize {
        let total: f64 = probs.iter().sum();
        let u = self.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}

/// Replays a fixed sequence of outcomes and records the branch probabilities it passed through.
///
/// Once the script runs out, the first outcome with probability above [`ScriptedOutcomes::EPS`]
/// is taken and the branching point is remembered so [`enumerate_outcomes`] can visit the rest.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOutcomes {
    script: Vec<usize>,
    cursor: usize,
    weight: f64,
    trail: Vec<(usize, Vec<f64>)>,
}

impl ScriptedOutcomes {
    pub const EPS: f64 = 1e-14;

    pub fn new(script: Vec<usize>) -> Self {
        Self {
            script,
            cursor: 0,
            weight: 1.0,
            trail: Vec::new(),
        }
    }

    /// Product of the probabilities of all outcomes chosen so far.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Outcomes chosen so far, in order.
    pub fn choices(&self) -> Vec<usize> {
        self.trail.iter().map(|(c, _)| *c).collect()
    }
}

impl OutcomeSource for ScriptedOutcomes {
    fn choose(&mut self, probs: &[f64]) -> usize {
        let pick = match self.script.get(self.cursor) {
            Some(&c) => c,
            None => probs
                .iter()
                .position(|&p| p > Self::EPS)
                .expect("no outcome with positive probability"),
        };
        self.cursor += 1;
        self.weight *= probs[pick];
        self.trail.push((pick, probs.to_vec()));
        pick
    }
}

/// Runs `run` once per measurement branch with non-negligible probability, depth first.
///
/// Returns `(probability, value)` pairs; the probabilities sum to one.
pub fn enumerate_outcomes<T>(mut run: impl FnMut(&mut ScriptedOutcomes) -> T) -> Vec<(f64, T)> {
    let mut out = Vec::new();
    let mut script = Vec::new();
    loop {
        let mut src = ScriptedOutcomes::new(script.clone());
        let value = run(&mut src);
        out.push((src.weight, value));
        // advance to the next unexplored branch
        let mut trail = src.trail;
        loop {
            let Some((choice, probs)) = trail.pop() else {
                return out;
            };
            if let Some(next) = (choice + 1..probs.len()).find(|&i| probs[i] > ScriptedOutcomes::EPS) {
                script = trail.iter().map(|(c, _)| *c).collect();
                script.push(next);
                break;
            }
        }
    }
}
