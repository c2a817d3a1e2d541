//! Hamiltonian Monte Carlo across orthants. The drift phase tracks the
//! pseudo-times at which lengths reach zero; an internal edge that hits zero
//! is reassigned to a neighbouring split with its momentum reversed, while a
//! leaf or root edge reflects. Gradients come from a smoothed potential that
//! is flat at zero length; acceptance uses the exact Hamiltonian.

use std::collections::BTreeMap;

use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{loglik_and_gradient, tree_loglik, SufficientStats};
use crate::priors::PriorSpec;
use crate::rng::RngStream;
use crate::treespace::{resolution_candidates, Coord, Split, Topology, Tree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub step_size: f64,
    pub leapfrog_steps: usize,
    /// Smoothing threshold of the surrogate potential.
    pub delta: f64,
    /// Diagonal mass: a single value for every coordinate, or one value per
    /// coordinate in canonical order.
    pub mass: Vec<f64>,
    pub prior: PriorSpec,
    pub seed: u64,
    pub thin: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            burn_in: 225,
            step_size: 0.0015,
            leapfrog_steps: 200,
            delta: 0.003,
            mass: vec![1.0],
            prior: PriorSpec::default(),
            seed: 0,
            thin: 1,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(invalid(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.leapfrog_steps == 0 {
            return Err(invalid("leapfrog_steps must be at least 1"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.mass.is_empty() || self.mass.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(invalid("mass entries must be positive"));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        self.prior.validate()
    }

    /// Checks the mass vector against the coordinate count of a tree.
    pub fn check_mass(&self, num_coords: usize) -> Result<()> {
        if self.mass.len() != 1 && self.mass.len() != num_coords {
            return Err(invalid(format!(
                "mass has {} entries; expected 1 or {num_coords}",
                self.mass.len()
            )));
        }
        Ok(())
    }

    fn mass_at(&self, i: usize) -> f64 {
        if self.mass.len() == 1 {
            self.mass[0]
        } else {
            self.mass[i]
        }
    }
}

/// Potential energy over trees.
pub trait Potential {
    /// `U(t)`; `+inf` outside the support.
    fn value(&self, t: &Tree) -> f64;
    /// `grad U(t)` over the stored coordinates; all lengths positive.
    fn gradient(&self, t: &Tree) -> Result<BTreeMap<Coord, f64>>;
}

/// Negative log posterior.
pub struct PosteriorPotential<'a> {
    pub stats: &'a SufficientStats,
    pub prior: PriorSpec,
}

impl Potential for PosteriorPotential<'_> {
    fn value(&self, t: &Tree) -> f64 {
        let lp = match self.prior.log_prior(t) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        match tree_loglik(self.stats, t) {
            Ok(ll) => -(lp + ll),
            Err(_) => f64::INFINITY,
        }
    }

    fn gradient(&self, t: &Tree) -> Result<BTreeMap<Coord, f64>> {
        let (_, mut g) = loglik_and_gradient(self.stats, t)?;
        let rate = 1.0 / self.prior.edge_mean;
        for v in g.values_mut() {
            *v = rate - *v;
        }
        Ok(g)
    }
}

/// Constant potential; trajectories are straight lines.
pub struct FlatPotential;

impl Potential for FlatPotential {
    fn value(&self, _: &Tree) -> f64 {
        0.0
    }

    fn gradient(&self, t: &Tree) -> Result<BTreeMap<Coord, f64>> {
        Ok(t.coords().into_iter().map(|c| (c, 0.0)).collect())
    }
}

/// Chooses the split that takes over from an internal edge reaching zero.
pub trait CrossingChooser {
    /// Index into `candidates`, which excludes `removed`.
    fn choose(&mut self, removed: &Split, candidates: &[Split]) -> usize;
}

pub struct UniformChooser<'a>(pub &'a mut RngStream);

impl CrossingChooser for UniformChooser<'_> {
    fn choose(&mut self, _: &Split, candidates: &[Split]) -> usize {
        self.0.index(candidates.len())
    }
}

/// Replays a fixed sequence of choices by split.
pub struct ScriptedChooser(pub std::collections::VecDeque<Split>);

impl CrossingChooser for ScriptedChooser {
    fn choose(&mut self, removed: &Split, candidates: &[Split]) -> usize {
        let want = self.0.pop_front().expect("scripted chooser ran out of choices");
        candidates
            .iter()
            .position(|c| *c == want)
            .unwrap_or_else(|| panic!("{want} is not a candidate after removing {removed}"))
    }
}

/// Smoothed length map: identity above `delta`, quadratic below.
pub fn surrogate_length(d: f64, delta: f64) -> f64 {
    if d >= delta {
        d
    } else {
        (d * d + delta * delta) / (2.0 * delta)
    }
}

pub fn surrogate_slope(d: f64, delta: f64) -> f64 {
    if d >= delta {
        1.0
    } else {
        d / delta
    }
}

/// Position, momentum and per-coordinate mass. Internal lengths may sit at
/// exactly zero right after a crossing.
#[derive(Clone, Debug, PartialEq)]
pub struct HmcState {
    pub p: usize,
    pub position: BTreeMap<Coord, f64>,
    pub momentum: BTreeMap<Coord, f64>,
    pub mass: BTreeMap<Coord, f64>,
}

impl HmcState {
    pub fn new(tree: &Tree, momentum: BTreeMap<Coord, f64>, mass: BTreeMap<Coord, f64>) -> Result<Self> {
        let coords = tree.coords();
        if coords.len() != momentum.len() || coords.iter().any(|c| !momentum.contains_key(c) || !mass.contains_key(c)) {
            return Err(invalid("momentum and mass must cover exactly the tree's coordinates"));
        }
        Ok(Self {
            p: tree.p(),
            position: coords.iter().map(|&c| (c, tree.get(c))).collect(),
            momentum,
            mass,
        })
    }

    /// The tree at the current position; zero-length internal edges dropped.
    pub fn tree(&self) -> Tree {
        self.tree_mapped(|d| d)
    }

    fn tree_mapped(&self, f: impl Fn(f64) -> f64) -> Tree {
        let mut internal = BTreeMap::new();
        let mut leaves = vec![0.0; self.p];
        let mut root = 0.0;
        for (&c, &d) in &self.position {
            let v = f(d);
            match c {
                Coord::Root => root = v,
                Coord::Leaf(k) => leaves[k - 1] = v,
                Coord::Internal(s) => {
                    if v > 0.0 {
                        internal.insert(s, v);
                    }
                }
            }
        }
        Tree::from_parts_unchecked(self.p, internal, leaves, root)
    }

    fn topology(&self) -> Topology {
        let splits: Vec<Split> = self
            .position
            .keys()
            .filter_map(|c| match c {
                Coord::Internal(s) => Some(*s),
                _ => None,
            })
            .collect();
        Topology::from_sorted_unchecked(self.p, splits)
    }

    pub fn kinetic(&self) -> f64 {
        self.momentum.iter().map(|(c, a)| a * a / (2.0 * self.mass[c])).sum()
    }

    /// Surrogate gradient in the raw coordinates.
    pub fn surrogate_gradient<P: Potential>(&self, potential: &P, delta: f64) -> Result<BTreeMap<Coord, f64>> {
        let smooth = self.tree_mapped(|d| surrogate_length(d, delta));
        let g = potential.gradient(&smooth)?;
        Ok(self
            .position
            .iter()
            .map(|(c, &d)| (*c, g.get(c).copied().unwrap_or(0.0) * surrogate_slope(d, delta)))
            .collect())
    }

    fn kick(&mut self, grad: &BTreeMap<Coord, f64>, h: f64) {
        for (c, a) in self.momentum.iter_mut() {
            *a -= h * grad[c];
        }
    }

    /// Moves positions along the momentum for pseudo-time `eps`, handling
    /// every boundary hit in order of its fractured step. Returns the number
    /// of internal crossings.
    pub fn drift<C: CrossingChooser>(&mut self, eps: f64, chooser: &mut C) -> Result<usize> {
        let mut remaining = eps;
        let mut crossings = 0;
        loop {
            // Earliest hit; ties resolved by canonical coordinate order.
            let mut hit: Option<(f64, Coord)> = None;
            for (&c, &d) in &self.position {
                let v = self.momentum[&c] / self.mass[&c];
                if v < 0.0 {
                    let t = d.max(0.0) / -v;
                    if t <= remaining && hit.is_none_or(|(best, _)| t < best) {
                        hit = Some((t, c));
                    }
                }
            }
            let Some((t, c)) = hit else {
                self.advance(remaining);
                return Ok(crossings);
            };
            self.advance(t);
            remaining -= t;
            self.position.insert(c, 0.0);
            let a = -self.momentum[&c];
            self.momentum.insert(c, a);
            if let Coord::Internal(s) = c {
                let candidates = resolution_candidates(&self.topology(), &s)?;
                let alternatives = &candidates[1..];
                if alternatives.is_empty() {
                    continue;
                }
                let next = Coord::Internal(alternatives[chooser.choose(&s, alternatives)]);
                let m = self.mass.remove(&c).expect("mass tracks coordinates");
                self.position.remove(&c);
                self.momentum.remove(&c);
                self.position.insert(next, 0.0);
                self.momentum.insert(next, a);
                self.mass.insert(next, m);
                crossings += 1;
            }
        }
    }

    fn advance(&mut self, t: f64) {
        if t == 0.0 {
            return;
        }
        for (c, d) in self.position.iter_mut() {
            *d += t * self.momentum[c] / self.mass[c];
        }
    }
}

/// One leapfrog step: half kick, drift with crossings, half kick.
pub fn hmc_leapfrog<P: Potential, C: CrossingChooser>(
    state: &mut HmcState,
    potential: &P,
    step_size: f64,
    delta: f64,
    chooser: &mut C,
) -> Result<usize> {
    let g = state.surrogate_gradient(potential, delta)?;
    state.kick(&g, step_size / 2.0);
    let crossings = state.drift(step_size, chooser)?;
    let g = state.surrogate_gradient(potential, delta)?;
    state.kick(&g, step_size / 2.0);
    Ok(crossings)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcOutcome {
    pub accepted: bool,
    /// The Hamiltonian could not be evaluated along the trajectory.
    pub divergent: bool,
    pub crossings: usize,
    /// `H_end - H_start` (infinite when divergent).
    pub energy_change: f64,
}

/// Full HMC transition from `tree` with cached potential `u0`. Returns the
/// next tree, its potential and a summary of the trajectory.
pub fn hmc_step<P: Potential>(
    tree: &Tree,
    u0: f64,
    potential: &P,
    cfg: &HmcConfig,
    rng: &mut RngStream,
) -> Result<(Tree, f64, HmcOutcome)> {
    let coords = tree.coords();
    cfg.check_mass(coords.len())?;
    let mut momentum = BTreeMap::new();
    let mut mass = BTreeMap::new();
    for (i, &c) in coords.iter().enumerate() {
        let m = cfg.mass_at(i);
        let z: f64 = StandardNormal.sample(rng);
        momentum.insert(c, z * m.sqrt());
        mass.insert(c, m);
    }
    let mut state = HmcState::new(tree, momentum, mass)?;
    let h0 = u0 + state.kinetic();
    let mut crossings = 0;
    let mut divergent = false;
    {
        let mut chooser = UniformChooser(rng);
        for _ in 0..cfg.leapfrog_steps {
            match hmc_leapfrog(&mut state, potential, cfg.step_size, cfg.delta, &mut chooser) {
                Ok(k) => crossings += k,
                Err(_) => {
                    divergent = true;
                    break;
                }
            }
        }
    }
    let proposal = state.tree();
    let u1 = if divergent { f64::INFINITY } else { potential.value(&proposal) };
    let h1 = u1 + state.kinetic();
    if !h1.is_finite() {
        divergent = true;
    }
    let dh = h1 - h0;
    let accepted = !divergent && (dh <= 0.0 || rng.uniform() < (-dh).exp());
    let outcome = HmcOutcome {
        accepted,
        divergent,
        crossings,
        energy_change: if divergent { f64::INFINITY } else { dh },
    };
    if accepted {
        Ok((proposal, u1, outcome))
    } else {
        Ok((tree.clone(), u0, outcome))
    }
}
