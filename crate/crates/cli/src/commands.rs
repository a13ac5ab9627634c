use crate::config::ExperimentConfig;
use crate::output::{num, opt, Outputs, Table};
use crate::{invalid, ConvergenceArgs, OracleArgs, OracleMode, ScalingArgs, SimulateArgs, StepperChoice};
use dlfpkmc::batch::{map_realizations, map_sequential};
use dlfpkmc::engine::{run_realization, InitialPlacement, Realization, RealizationConfig, RealizationRecord, StopRule};
use dlfpkmc::model::DomainSpec;
use dlfpkmc::oracle::analytic::FreePair;
use dlfpkmc::oracle::lattice::{fixed_lattice_run, lattice_spacing};
use dlfpkmc::oracle::pde::{extrapolated_mean_time, PairPde, PdeOptions, Stepper};
use dlfpkmc::potential::PotentialField;
use dlfpkmc::presets::{annihilation, level_widths, scaling as scaling_config, two_molecule, Landscape, TWO_MOLECULE_RADIUS};
use dlfpkmc::stats::{
    convergence_order, kl_divergence, lp_distance, mean_estimate, reaction_time_edges, relative_error, BinnedDistribution, MeanEstimate,
    Norm,
};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

const OUT_ENV: &str = "DLFPKMC_OUT";
/// Reaction-time bins before the tail bin in the convergence KL.
const KL_BINS: usize = 9;

fn output_dir(flag: Option<PathBuf>, from_config: Option<PathBuf>) -> PathBuf {
    flag.or(from_config).or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

fn positive(name: &str, x: f64) -> anyhow::Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("--{name} must be positive, got {x}")))
    }
}

fn landscape(name: &str) -> anyhow::Result<Landscape> {
    Landscape::parse(name).ok_or_else(|| invalid(format!("unknown landscape {name:?}")))
}

fn first_reaction_time(rec: &RealizationRecord) -> anyhow::Result<f64> {
    rec.first_reaction().map(|r| r.time).ok_or_else(|| anyhow::anyhow!("realization {} ended without a reaction", rec.realization))
}

/// Time at which a decreasing survival function falls to `level`.
fn survival_crossing(survival: impl Fn(f64) -> f64, level: f64, mut hi: f64) -> f64 {
    while survival(hi) > level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if survival(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

pub fn simulate(args: SimulateArgs) -> anyhow::Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| invalid(format!("{}: {e}", args.config.display())))?;
    let mut exp = ExperimentConfig::parse(&text).map_err(|e| invalid(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        exp.run.seed = seed;
    }
    if let Some(n) = args.realizations {
        exp.run.realizations = n;
    }
    let cfg = exp.realization_config().map_err(|e| invalid(format!("{}: {e}", args.config.display())))?;
    // Initial placement errors surface only once molecules are placed.
    Realization::new(&cfg, 0).map_err(|e| invalid(format!("{}: initial: {e}", args.config.display())))?;
    let dir = output_dir(args.out, exp.run.output_dir.clone());

    let records = map_realizations(0..exp.run.realizations, |i| run_realization(&cfg, i))?;
    let mut outputs = Outputs::new(&exp.canonical(), Some(exp.run.seed));
    let mut runs = Table::new(
        "realizations.csv",
        &["seed_index", "n_initial_per_species", "extinction_time", "t0_reaction_count", "hop_count", "wall_seconds"],
    );
    let mut reactions = Table::new("reactions.csv", &["realization", "reaction_index", "time", "location"]);
    let mut usage: BTreeMap<u64, u64> = BTreeMap::new();
    for rec in &records {
        let counts: Vec<String> = rec.initial_counts.iter().map(usize::to_string).collect();
        let extinction = matches!(cfg.stop, StopRule::AllReacted).then_some(rec.final_time);
        let at_start = rec.reactions.iter().filter(|r| r.at_start).count();
        let wall = cfg.measure_wall_time.then_some(rec.wall_seconds);
        runs.row([
            rec.realization.to_string(),
            counts.join(";"),
            opt(extinction),
            at_start.to_string(),
            rec.hop_count.to_string(),
            opt(wall),
        ]);
        for (k, r) in rec.reactions.iter().enumerate() {
            reactions.row([rec.realization.to_string(), k.to_string(), num(r.time), num(r.location)]);
        }
        for (&width, &hops) in &rec.mesh_hops {
            *usage.entry(width).or_insert(0) += hops;
        }
    }
    let mut meshes = Table::new("meshes.csv", &["width", "use_count"]);
    for (width, hops) in usage {
        meshes.row([num(f64::from_bits(width)), hops.to_string()]);
    }
    outputs.push(runs);
    outputs.push(reactions);
    outputs.push(meshes);
    outputs.write(&dir)
}

struct OracleResult {
    mean: f64,
    half_width: Option<f64>,
    survival: Box<dyn Fn(f64) -> f64>,
    /// `(dx, mean, error)` per refinement.
    refinements: Vec<(f64, f64, f64)>,
    order: Option<f64>,
}

fn pde_oracle(args: &OracleArgs, field: &PotentialField, exact: Option<&FreePair>) -> anyhow::Result<OracleResult> {
    let coarse = args.dx.unwrap_or(args.radius);
    positive("dx", coarse)?;
    let mut means = Vec::new();
    let mut widths = Vec::new();
    let mut finest = None;
    for k in 0..=args.halvings {
        let dx = coarse / f64::from(1u32 << k);
        let pde = PairPde::new(args.length, args.diffusion, args.radius, field, dx).map_err(|e| invalid(e.to_string()))?;
        let stepper = match args.stepper {
            StepperChoice::Cn => Stepper::CrankNicolson { dt: dx / 16.0 },
            StepperChoice::Tga => Stepper::Tga { dt: dx * dx },
        };
        let sol = pde.solve(&PdeOptions::new(stepper))?;
        means.push(sol.mean_time);
        widths.push(dx);
        finest = Some(sol);
    }
    let sol = finest.expect("at least one level");
    // Without an exact value, successive differences carry the same order.
    let (refinements, order) = match exact {
        Some(e) => {
            let errors: Vec<f64> = means.iter().map(|m| (m - e.mean_time()).abs()).collect();
            let order = (means.len() >= 2).then(|| convergence_order(&widths, &errors)).transpose()?.map(|f| f.slope);
            (widths.iter().zip(&means).zip(&errors).map(|((&w, &m), &e)| (w, m, e)).collect(), order)
        }
        None => {
            let diffs: Vec<f64> = means.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
            let order = (diffs.len() >= 2).then(|| convergence_order(&widths[..diffs.len()], &diffs)).transpose()?.map(|f| f.slope);
            let rows = widths.iter().zip(&means).enumerate().map(|(k, (&w, &m))| (w, m, diffs.get(k).copied().unwrap_or(f64::NAN)));
            (rows.collect(), order)
        }
    };
    let mean = sol.mean_time;
    Ok(OracleResult { mean, half_width: None, survival: Box::new(move |t| sol.survival_at(t)), refinements, order })
}

fn lattice_oracle(args: &OracleArgs, field: PotentialField) -> anyhow::Result<OracleResult> {
    let net = annihilation(args.diffusion, field, args.radius).map_err(|e| invalid(e.to_string()))?;
    let mut cfg = RealizationConfig::new(
        DomainSpec::reflecting(args.length),
        Arc::new(net),
        vec![
            InitialPlacement::Uniform { species: 0, count: 1, lo: 0.0, hi: args.length },
            InitialPlacement::Uniform { species: 1, count: 1, lo: 0.0, hi: args.length },
        ],
        8.0 * args.radius,
        args.radius,
        2.0 * args.radius,
    );
    cfg.master_seed = args.seed;
    lattice_spacing(&cfg).map_err(|e| invalid(e.to_string()))?;
    if args.realizations < 2 {
        return Err(invalid("--realizations must be at least 2"));
    }
    let times = map_realizations(0..args.realizations, |i| fixed_lattice_run(&cfg, i))?
        .iter()
        .map(first_reaction_time)
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let est = mean_estimate(&times)?;
    let survival = move |t: f64| times.iter().filter(|&&s| s > t).count() as f64 / times.len() as f64;
    Ok(OracleResult { mean: est.mean, half_width: Some(est.half_width), survival: Box::new(survival), refinements: vec![], order: None })
}

pub fn oracle(args: OracleArgs) -> anyhow::Result<Vec<PathBuf>> {
    let land = landscape(&args.landscape)?;
    for (name, x) in [("length", args.length), ("diffusion", args.diffusion), ("radius", args.radius)] {
        positive(name, x)?;
    }
    if args.points == 0 {
        return Err(invalid("--points must be positive"));
    }
    let field = land.field();
    let exact = if field.is_constant() {
        Some(FreePair::new(args.length, args.diffusion, args.radius).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let result = match args.mode {
        OracleMode::Analytic => {
            let e = exact.ok_or_else(|| invalid(format!("analytic mode needs a flat landscape, got {}", land.name())))?;
            OracleResult {
                mean: e.mean_time(),
                half_width: None,
                survival: Box::new(move |t| e.survival(t)),
                refinements: vec![],
                order: None,
            }
        }
        OracleMode::Pde => pde_oracle(&args, &field, exact.as_ref())?,
        OracleMode::FixedLattice => lattice_oracle(&args, field)?,
    };

    let horizon = args.horizon.unwrap_or(10.0 * result.mean);
    positive("horizon", horizon)?;
    let grid: Vec<f64> = (0..=args.points).map(|k| horizon * k as f64 / args.points as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&t| (result.survival)(t)).collect();
    let reference = match (args.mode, &exact) {
        (OracleMode::Analytic, _) | (_, None) => None,
        (_, Some(e)) => Some(e),
    };

    let mut outputs = Outputs::new(&format!("{:?}", OracleArgs { out: None, ..args.clone() }), Some(args.seed));
    let mut survival = Table::new("survival.csv", &["t", "S"]);
    for (t, s) in grid.iter().zip(&values) {
        survival.row([num(*t), num(*s)]);
    }
    let mut summary = Table::new(
        "summary.csv",
        &["mode", "landscape", "mean_time", "half_width", "reference_mean_time", "relative_error", "l1", "l2", "max", "order"],
    );
    let mut norms = [String::new(), String::new(), String::new()];
    let (mut ref_mean, mut rel) = (String::new(), String::new());
    if let Some(e) = reference {
        let exact_values: Vec<f64> = grid.iter().map(|&t| e.survival(t)).collect();
        for (slot, norm) in norms.iter_mut().zip(Norm::all()) {
            *slot = num(lp_distance(&values, &exact_values, &grid, norm, false)?);
        }
        ref_mean = num(e.mean_time());
        rel = num((result.mean - e.mean_time()).abs() / e.mean_time());
    }
    let mode = match args.mode {
        OracleMode::Analytic => "analytic",
        OracleMode::Pde => "pde",
        OracleMode::FixedLattice => "fixed-lattice",
    };
    let [l1, l2, max] = norms;
    summary.row([
        mode.to_string(),
        land.name().to_string(),
        num(result.mean),
        opt(result.half_width),
        ref_mean,
        rel,
        l1,
        l2,
        max,
        opt(result.order),
    ]);
    outputs.push(survival);
    outputs.push(summary);
    if !result.refinements.is_empty() {
        let mut conv = Table::new("convergence.csv", &["dx", "mean_time", "error"]);
        for (dx, m, e) in &result.refinements {
            conv.row([num(*dx), num(*m), if e.is_nan() { String::new() } else { num(*e) }]);
        }
        outputs.push(conv);
    }
    outputs.write(&output_dir(args.out, None))
}

pub fn convergence(args: ConvergenceArgs) -> anyhow::Result<Vec<PathBuf>> {
    let land = match args.preset.as_str() {
        "vzero" | "vcos" | "vstep" => landscape(&args.preset)?,
        other => return Err(invalid(format!("unknown preset {other:?}; expected vzero, vcos or vstep"))),
    };
    if args.levels == 0 || args.levels > 8 {
        return Err(invalid("--levels must be between 1 and 8"));
    }
    if args.realizations < 2 {
        return Err(invalid("--realizations must be at least 2"));
    }
    let r = TWO_MOLECULE_RADIUS;
    let field = land.field();
    let (reference, survival): (f64, Box<dyn Fn(f64) -> f64>) = if land == Landscape::Zero {
        let e = FreePair::new(1.0, 1.0, r)?;
        (e.mean_time(), Box::new(move |t| e.survival(t)))
    } else {
        let value = extrapolated_mean_time(1.0, 1.0, r, &field, r / 4.0)?.value;
        let dx = r / 4.0;
        let sol = PairPde::new(1.0, 1.0, r, &field, dx)?.solve(&PdeOptions::new(Stepper::CrankNicolson { dt: dx / 16.0 }))?;
        (value, Box::new(move |t| sol.survival_at(t)))
    };
    let cutoff = survival_crossing(&survival, 0.01, reference);
    let edges = reaction_time_edges(cutoff, KL_BINS);
    let truth = BinnedDistribution::from_survival(&survival, &edges)?;

    let mut rows = Vec::new();
    for level in 1..=args.levels {
        let (h_p, h_s) = level_widths(r, level);
        let mut cfg = two_molecule(land, h_p, h_s)?;
        cfg.master_seed = args.seed;
        let times = map_realizations(0..args.realizations, |i| run_realization(&cfg, i))?
            .iter()
            .map(first_reaction_time)
            .collect::<anyhow::Result<Vec<f64>>>()?;
        let est: MeanEstimate = mean_estimate(&times)?;
        let err = relative_error(reference, &est);
        let kl = kl_divergence(&truth.masses, &BinnedDistribution::from_samples(&times, &edges)?.masses)?;
        rows.push((level, h_p, h_s, est, err, kl));
    }

    let mut outputs = Outputs::new(&format!("{:?}", ConvergenceArgs { out: None, ..args.clone() }), Some(args.seed));
    let mut table = Table::new(
        "convergence.csv",
        &[
            "level",
            "h_p",
            "h_s_max",
            "realizations",
            "mean_time",
            "half_width",
            "reference_mean_time",
            "relative_error",
            "statistical_error",
            "resolved",
            "kl",
        ],
    );
    for (level, h_p, h_s, est, err, kl) in &rows {
        table.row([
            level.to_string(),
            num(*h_p),
            num(*h_s),
            est.count.to_string(),
            num(est.mean),
            num(est.half_width),
            num(reference),
            num(err.value),
            num(err.statistical),
            err.resolved.to_string(),
            num(*kl),
        ]);
    }
    // Levels from the first resolved one on sit at the statistical floor and are left out of the fit.
    let floor = rows.iter().position(|r| r.4.resolved).unwrap_or(rows.len());
    let used = &rows[..floor];
    let mut fit = Table::new("convergence_fit.csv", &["order", "intercept", "levels_used"]);
    let levels: Vec<String> = used.iter().map(|r| r.0.to_string()).collect();
    if used.len() >= 2 {
        let widths: Vec<f64> = used.iter().map(|r| r.1).collect();
        let errors: Vec<f64> = used.iter().map(|r| r.4.value).collect();
        let f = convergence_order(&widths, &errors)?;
        fit.row([num(f.slope), num(f.intercept), levels.join(";")]);
    } else {
        fit.row([String::new(), String::new(), levels.join(";")]);
    }
    outputs.push(table);
    outputs.push(fit);
    outputs.write(&output_dir(args.out, None))
}

struct ScalingRow {
    method: &'static str,
    n: usize,
    wall: f64,
    hops: f64,
    extinction: MeanEstimate,
}

fn scaling_row(method: &'static str, n: usize, records: &[RealizationRecord]) -> anyhow::Result<ScalingRow> {
    let count = records.len() as f64;
    let times: Vec<f64> = records.iter().map(|r| r.final_time).collect();
    Ok(ScalingRow {
        method,
        n,
        wall: records.iter().map(|r| r.wall_seconds).sum::<f64>() / count,
        hops: records.iter().map(|r| r.hop_count as f64).sum::<f64>() / count,
        extinction: mean_estimate(&times)?,
    })
}

pub fn scaling(args: ScalingArgs) -> anyhow::Result<Vec<PathBuf>> {
    positive("radius", args.radius)?;
    if args.n_list.is_empty() || args.n_list.iter().any(|&n| n < 2 || n % 2 != 0) {
        return Err(invalid("--n-list needs even molecule counts of at least 2"));
    }
    if args.realizations < 2 {
        return Err(invalid("--realizations must be at least 2"));
    }
    let mut configs = Vec::with_capacity(args.n_list.len());
    for &n in &args.n_list {
        let mut cfg = scaling_config(n, args.radius).map_err(|e| invalid(e.to_string()))?;
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        if args.lattice {
            lattice_spacing(&cfg).map_err(|e| invalid(format!("fixed lattice: {e}")))?;
        }
        cfg.master_seed = args.seed;
        cfg.measure_wall_time = true;
        configs.push((n, cfg));
    }
    let mut rows = Vec::new();
    for (n, cfg) in &configs {
        // Sequential so each run's wall time is not shared with other workers.
        let dl = map_sequential(0..args.realizations, |i| run_realization(cfg, i))?;
        rows.push(scaling_row("dl-fpkmc", *n, &dl)?);
        if args.lattice {
            let lat = map_sequential(0..args.realizations, |i| fixed_lattice_run(cfg, i))?;
            rows.push(scaling_row("fixed-lattice", *n, &lat)?);
        }
    }

    let mut outputs = Outputs::new(&format!("{:?}", ScalingArgs { out: None, ..args.clone() }), Some(args.seed));
    let mut table = Table::new(
        "scaling.csv",
        &["method", "n", "realizations", "mean_wall_seconds", "mean_hops", "mean_extinction_time", "extinction_half_width"],
    );
    for row in &rows {
        table.row([
            row.method.to_string(),
            row.n.to_string(),
            args.realizations.to_string(),
            num(row.wall),
            num(row.hops),
            num(row.extinction.mean),
            num(row.extinction.half_width),
        ]);
    }
    let mut fit = Table::new("scaling_fit.csv", &["method", "wall_time_slope"]);
    for method in ["dl-fpkmc", "fixed-lattice"] {
        let pts: Vec<&ScalingRow> = rows.iter().filter(|r| r.method == method).collect();
        if pts.len() >= 2 {
            let ns: Vec<f64> = pts.iter().map(|r| r.n as f64).collect();
            let walls: Vec<f64> = pts.iter().map(|r| r.wall).collect();
            fit.row([method.to_string(), num(convergence_order(&ns, &walls)?.slope)]);
        }
    }
    outputs.push(table);
    outputs.push(fit);
    outputs.write(&output_dir(args.out, None))
}
