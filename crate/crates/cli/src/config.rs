//! TOML experiment files.

use dlfpkmc::engine::{InitialPlacement, RealizationConfig, StopRule};
use dlfpkmc::model::{BimolecularChannel, Boundary, DomainSpec, Network, SpeciesSpec, UnimolecularChannel};
use dlfpkmc::potential::PotentialField;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSection,
    pub species: Vec<SpeciesSection>,
    #[serde(default)]
    pub reaction: Vec<ReactionSection>,
    pub initial: Vec<InitialSection>,
    pub mesh: MeshSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Wall {
    Reflecting,
    Absorbing,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub length: f64,
    #[serde(default = "reflecting")]
    pub left: Wall,
    #[serde(default = "reflecting")]
    pub right: Wall,
}

fn reflecting() -> Wall {
    Wall::Reflecting
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSection {
    Zero,
    Constant { value: f64 },
    Cosine { amplitude: f64, frequency: f64 },
    Step { height: f64, location: f64 },
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl PotentialSection {
    fn field(&self) -> dlfpkmc::Result<PotentialField> {
        Ok(match self {
            PotentialSection::Zero => PotentialField::Zero,
            PotentialSection::Constant { value } => PotentialField::Zero.shifted(*value),
            PotentialSection::Cosine { amplitude, frequency } => PotentialField::cosine(*amplitude, *frequency),
            PotentialSection::Step { height, location } => PotentialField::step(*height, *location),
            PotentialSection::Tabulated { xs, values } => PotentialField::tabulated(xs.clone(), values.clone())?,
        })
    }
}

fn zero_potential() -> PotentialSection {
    PotentialSection::Zero
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSection {
    pub name: String,
    pub diffusion: f64,
    #[serde(default = "zero_potential")]
    pub potential: PotentialSection,
    #[serde(default)]
    pub decay: Vec<DecaySection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub rate: f64,
    #[serde(default)]
    pub products: Vec<String>,
    pub product_separation: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    pub reactants: [String; 2],
    pub radius: f64,
    #[serde(default)]
    pub products: Vec<String>,
    pub product_separation: Option<f64>,
}

/// Either `count` molecules uniform on `[lo, hi]` or explicit `positions`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub species: String,
    pub count: Option<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub positions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub h_p: f64,
    pub h_s_max: f64,
    pub r_pair: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StopSection {
    AllReacted,
    TimeHorizon { time: f64 },
    EventCount { events: u64 },
}

fn all_reacted() -> StopSection {
    StopSection::AllReacted
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "one")]
    pub realizations: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_reacted")]
    pub stop: StopSection,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub measure_wall_time: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    fn species_id(&self, name: &str, field: &str) -> anyhow::Result<usize> {
        self.species.iter().position(|s| s.name == name).ok_or_else(|| anyhow::anyhow!("{field}: unknown species {name:?}"))
    }

    fn species_ids(&self, names: &[String], field: &str) -> anyhow::Result<Vec<usize>> {
        names.iter().map(|n| self.species_id(n, field)).collect()
    }

    /// Engine configuration; fails with a field diagnostic on any inconsistency.
    pub fn realization_config(&self) -> anyhow::Result<RealizationConfig> {
        let wall = |w: Wall| match w {
            Wall::Reflecting => Boundary::Reflecting,
            Wall::Absorbing => Boundary::Absorbing,
        };
        let domain = DomainSpec { length: self.domain.length, left: wall(self.domain.left), right: wall(self.domain.right) };

        let mut species = Vec::with_capacity(self.species.len());
        for (k, s) in self.species.iter().enumerate() {
            let field = s.potential.field().map_err(|e| anyhow::anyhow!("species[{k}].potential: {e}"))?;
            let mut spec = SpeciesSpec::new(&s.name, s.diffusion, field);
            for (j, d) in s.decay.iter().enumerate() {
                let products = self.species_ids(&d.products, &format!("species[{k}].decay[{j}].products"))?;
                spec.unimolecular.push(UnimolecularChannel { rate: d.rate, products, product_separation: d.product_separation });
            }
            species.push(spec);
        }
        let mut channels = Vec::with_capacity(self.reaction.len());
        for (k, r) in self.reaction.iter().enumerate() {
            let field = format!("reaction[{k}]");
            channels.push(BimolecularChannel {
                reactant_a: self.species_id(&r.reactants[0], &field)?,
                reactant_b: self.species_id(&r.reactants[1], &field)?,
                reaction_radius: r.radius,
                products: self.species_ids(&r.products, &format!("{field}.products"))?,
                product_separation: r.product_separation,
            });
        }
        let network = Network::new(species, channels).map_err(|e| anyhow::anyhow!("species/reaction: {e}"))?;

        let mut initial = Vec::with_capacity(self.initial.len());
        for (k, p) in self.initial.iter().enumerate() {
            let field = format!("initial[{k}]");
            let species = self.species_id(&p.species, &field)?;
            initial.push(match (p.count, &p.positions) {
                (Some(count), None) => {
                    InitialPlacement::Uniform { species, count, lo: p.lo.unwrap_or(0.0), hi: p.hi.unwrap_or(self.domain.length) }
                }
                (None, Some(positions)) if p.lo.is_none() && p.hi.is_none() => {
                    InitialPlacement::Explicit { species, positions: positions.clone() }
                }
                _ => anyhow::bail!("{field}: give either count (with optional lo, hi) or positions"),
            });
        }

        let mut cfg = RealizationConfig::new(domain, Arc::new(network), initial, self.mesh.h_s_max, self.mesh.h_p, self.mesh.r_pair);
        cfg.master_seed = self.run.seed;
        cfg.stop = match self.run.stop {
            StopSection::AllReacted => StopRule::AllReacted,
            StopSection::TimeHorizon { time } => StopRule::TimeHorizon(time),
            StopSection::EventCount { events } => StopRule::EventCount(events),
        };
        cfg.snapshot_times = self.run.snapshot_times.clone();
        cfg.measure_wall_time = self.run.measure_wall_time;
        cfg.validate().map_err(|e| anyhow::anyhow!("mesh/run: {e}"))?;
        Ok(cfg)
    }

    /// Canonical text of everything that affects results.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.run.output_dir = None;
        toml::to_string(&c).expect("config serializes")
    }
}
