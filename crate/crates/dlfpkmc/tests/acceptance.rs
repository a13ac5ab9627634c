//! Acceptance suite: one pass/fail line per criterion.

mod common;

use common::{random_mesh, random_potential, worst_balance};
use dlfpkmc::batch::{map_realizations, map_sequential};
use dlfpkmc::engine::{run_realization, InitialPlacement, RealizationConfig, StopRule};
use dlfpkmc::mesh::{pair_mesh, single_mesh, DomainMesh};
use dlfpkmc::model::{Boundary, DomainSpec, Network, SpeciesSpec};
use dlfpkmc::oracle::analytic::FreePair;
use dlfpkmc::oracle::lattice::fixed_lattice_run;
use dlfpkmc::oracle::master::FirstPassageLaw;
use dlfpkmc::oracle::pde::{extrapolated_mean_time, PairPde, PdeOptions, Stepper};
use dlfpkmc::potential::PotentialField;
use dlfpkmc::presets::{
    level_widths, scaling, two_molecule, Landscape, FREE_PAIR_MEAN_TIME, LATTICE_COMPARISON_RADIUS, SCALING_RADIUS, TWO_MOLECULE_RADIUS,
};
use dlfpkmc::sampler::ssa_single_path;
use dlfpkmc::stats::{convergence_order, kl_divergence, kolmogorov_distance, mean_estimate, BinnedDistribution, MeanEstimate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

const R: f64 = TWO_MOLECULE_RADIUS;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn two_molecule_times(cfg: &RealizationConfig, runs: u64) -> (MeanEstimate, Vec<f64>, usize) {
    let out = map_realizations(0..runs, |i| {
        let rec = run_realization(cfg, i)?;
        let r = rec.first_reaction().expect("pair reacts");
        Ok((r.time, r.at_start))
    })
    .expect("runs succeed");
    let times: Vec<f64> = out.iter().map(|o| o.0).collect();
    let starts = out.iter().filter(|o| o.1).count();
    (mean_estimate(&times).unwrap(), times, starts)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mean = FreePair::new(1.0, 1.0, R).unwrap().mean_time();
    let secs = t0.elapsed().as_secs_f64();
    let err = (mean - FREE_PAIR_MEAN_TIME).abs();
    outcome(err < 1e-9 && secs < 1.0, format!("mean {mean:.12}, |err| {err:.1e}, {secs:.3} s"))
}

fn criterion_2() -> Outcome {
    let exact = FreePair::new(1.0, 1.0, R).unwrap().mean_time();
    let mut widths = Vec::new();
    let mut errors = Vec::new();
    for div in [1.0, 2.0, 4.0] {
        let dx = R / div;
        let pde = PairPde::new(1.0, 1.0, R, &PotentialField::Zero, dx).unwrap();
        let sol = pde.solve(&PdeOptions::new(Stepper::CrankNicolson { dt: dx / 16.0 })).unwrap();
        widths.push(dx);
        errors.push((sol.mean_time - exact).abs());
    }
    let fit = convergence_order(&widths, &errors).unwrap();
    outcome(
        (1.8..=2.2).contains(&fit.slope) && fit.excluded.is_empty(),
        format!("errors {:.3e} {:.3e} {:.3e}, order {:.4}", errors[0], errors[1], errors[2], fit.slope),
    )
}

fn criterion_3() -> Outcome {
    let exact = FreePair::new(1.0, 1.0, R).unwrap();
    let dx = R / 4.0;
    let pde = PairPde::new(1.0, 1.0, R, &PotentialField::Zero, dx).unwrap();
    let mut worst = Vec::new();
    for stepper in [Stepper::CrankNicolson { dt: dx / 16.0 }, Stepper::Tga { dt: dx * dx }] {
        let mut opts = PdeOptions::new(stepper);
        opts.horizon = Some(0.07);
        let sol = pde.solve(&opts).unwrap();
        let linf = sol.times.iter().zip(&sol.survival).skip(1).map(|(&t, &s)| (s - exact.survival(t)).abs()).fold(0.0, f64::max);
        worst.push(linf);
    }
    let ratio = worst[0] / worst[1];
    outcome(ratio >= 10.0, format!("L-inf on (0, 0.07]: CN {:.4e}, TGA {:.4e}, ratio {ratio:.2}", worst[0], worst[1]))
}

fn criteria_4_5() -> (Outcome, Outcome) {
    let t0 = Instant::now();
    let (h_p, h_s) = level_widths(R, 3);
    let mut cfg = two_molecule(Landscape::Zero, h_p, h_s).unwrap();
    cfg.master_seed = 4;
    let runs = 100_000;
    let (m, _, starts) = two_molecule_times(&cfg, runs);
    let secs = t0.elapsed().as_secs_f64();
    let z = (m.mean - FREE_PAIR_MEAN_TIME) / m.std_error;
    let frac = starts as f64 / runs as f64;
    let c4 = outcome(
        z.abs() <= 3.0 && secs < 300.0,
        format!("mean {:.6} +/- {:.6} (99%), {z:+.2} SE from {FREE_PAIR_MEAN_TIME}, {secs:.1} s", m.mean, m.half_width),
    );
    let c5 = outcome((frac - 0.0396).abs() <= 0.002, format!("t = 0 fraction {frac:.5}"));
    (c4, c5)
}

fn criterion_6() -> Outcome {
    let t0 = Instant::now();
    let (h_p, h_s) = level_widths(R, 3);
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, landscape, reference) in
        [(61, Landscape::OneWell, 0.03481), (62, Landscape::Zero, 0.06483), (63, Landscape::TwoWell, 0.09887)]
    {
        let mut cfg = two_molecule(landscape, h_p, h_s).unwrap();
        cfg.master_seed = seed;
        let (m, _, _) = two_molecule_times(&cfg, 100_000);
        let z = (m.mean - reference) / m.std_error;
        let pde = PairPde::new(1.0, 1.0, R, &landscape.field(), R / 8.0).unwrap().stationary_mean_time().unwrap();
        let rel = (pde - reference).abs() / reference;
        pass &= z.abs() <= 3.0 && rel <= 0.005;
        parts.push(format!("{} {:.5} ({z:+.2} SE, pde {pde:.5})", landscape.name(), m.mean));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 900.0;
    outcome(pass, format!("{}, {secs:.0} s", parts.join("; ")))
}

/// Relative errors of levels 1..=3 against the extrapolated oracle, with 99% statistical half-widths.
fn level_errors(landscape: Landscape, seed: u64, runs: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let reference = extrapolated_mean_time(1.0, 1.0, R, &landscape.field(), R / 4.0).unwrap().value;
    let mut widths = Vec::new();
    let mut errors = Vec::new();
    let mut halves = Vec::new();
    for level in 1..=3 {
        let (h_p, h_s) = level_widths(R, level);
        let mut cfg = two_molecule(landscape, h_p, h_s).unwrap();
        cfg.master_seed = seed;
        let (m, _, _) = two_molecule_times(&cfg, runs);
        widths.push(h_p);
        errors.push((m.mean - reference).abs() / reference);
        halves.push(m.half_width / reference);
    }
    (widths, errors, halves, reference)
}

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let runs = 1_000_000;
    let (w, e, half, r_step) = level_errors(Landscape::Step, 71, runs);
    let step_fit = convergence_order(&w, &e).unwrap();
    let decreasing = e.windows(2).all(|p| p[1] < p[0]);
    let step_ok = decreasing && (0.5..=1.5).contains(&step_fit.slope);

    let (wc, ec, halfc, r_cos) = level_errors(Landscape::TwoWell, 72, runs);
    let above: Vec<usize> = (0..3).filter(|&k| ec[k] > halfc[k]).collect();
    let resolved: Vec<usize> = (0..3).filter(|&k| ec[k] <= halfc[k]).collect();
    // Levels past the first one resolved to statistical error are at the floor.
    let floor = resolved.first().copied().unwrap_or(3);
    let usable: Vec<usize> = above.iter().copied().filter(|&k| k < floor).collect();
    let (cos_ok, cos_slope) = if usable.len() >= 2 {
        let xs: Vec<f64> = usable.iter().map(|&k| wc[k]).collect();
        let ys: Vec<f64> = usable.iter().map(|&k| ec[k]).collect();
        let s = convergence_order(&xs, &ys).unwrap().slope;
        ((1.5..=2.5).contains(&s), s)
    } else {
        (false, f64::NAN)
    };
    let secs = t0.elapsed().as_secs_f64();
    let fmt = |e: &[f64], h: &[f64]| e.iter().zip(h).map(|(e, h)| format!("{e:.2e}+/-{h:.1e}")).collect::<Vec<_>>().join(" ");
    outcome(
        step_ok && cos_ok,
        format!(
            "step ref {r_step:.6} errors {} order {:.2}; two-well ref {r_cos:.6} errors {} order {cos_slope:.2} over levels {:?}; {runs} runs/level, {secs:.0} s",
            fmt(&e, &half),
            step_fit.slope,
            fmt(&ec, &halfc),
            usable.iter().map(|k| k + 1).collect::<Vec<_>>()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..1000 {
        let mesh = random_mesh(&mut rng);
        for family in 0..4 {
            let potential = random_potential(family, &mut rng);
            worst = worst.max(worst_balance(&mesh, &potential));
            checked += 1;
        }
    }
    outcome(worst < 1e-12, format!("{checked} mesh/potential pairs, worst residual {worst:.2e}"))
}

/// Single-occupant meshes with at most seven points over every end combination.
fn small_meshes() -> Vec<DomainMesh> {
    let mut out = Vec::new();
    let (a, b) = (0.3, 0.5);
    for h in [0.1, 0.05, 0.034] {
        for frac in [0.5, 0.3, 0.62] {
            let x = a + frac * (b - a);
            for (l, r) in [
                (Boundary::Absorbing, Boundary::Absorbing),
                (Boundary::Reflecting, Boundary::Absorbing),
                (Boundary::Absorbing, Boundary::Reflecting),
            ] {
                if let Ok(m) = single_mesh(a, b, x, h, l, r) {
                    out.push(m);
                }
            }
        }
    }
    for (xa, h) in [(0.33, 0.04), (0.31, 0.05)] {
        for (l, r) in [(true, true), (false, true), (true, false)] {
            let bound = |f: bool| if f { Boundary::Absorbing } else { Boundary::Reflecting };
            if let Ok(mut m) = pair_mesh(a, b, xa, xa + h, h, bound(l), bound(r)) {
                m.occupants.truncate(1);
                out.push(m);
            }
        }
    }
    out.retain(|m| m.len() <= 7 && m.len() >= 3);
    out.dedup_by(|p, q| p.points == q.points && p.occupants == q.occupants && p.left == q.left && p.right == q.right);
    out
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let meshes = small_meshes();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for mesh in &meshes {
        for family in 0..4 {
            let potential = random_potential(family, &mut rng);
            let rates = mesh.rates(1.0, &potential);
            for start in (0..mesh.len()).filter(|&i| !mesh.is_absorbing_index(i)) {
                let mut m = mesh.clone();
                m.occupants = vec![start];
                let law = FirstPassageLaw::new(&m, &rates, start).unwrap();
                let times: Vec<f64> =
                    (0..100_000).map(|_| ssa_single_path(&m, &rates, 0.0, &mut rng, None).unwrap().terminal.time).collect();
                worst = worst.max(kolmogorov_distance(&times, |t| law.cdf(t)));
                cases += 1;
            }
        }
    }
    outcome(worst < 0.01, format!("{} meshes, {cases} start/potential cases, worst Kolmogorov distance {worst:.4}", meshes.len()))
}

fn criterion_10() -> Outcome {
    let potential = PotentialField::cosine(1.0, 2.0);
    let net = Network::new(vec![SpeciesSpec::new("A", 1.0, potential.clone())], vec![]).unwrap();
    let mut cfg = RealizationConfig::new(
        DomainSpec::reflecting(1.0),
        Arc::new(net),
        vec![InitialPlacement::Explicit { species: 0, positions: vec![0.1] }],
        0.02,
        0.02,
        0.02,
    );
    cfg.master_seed = 10;
    cfg.stop = StopRule::TimeHorizon(5.0);
    cfg.snapshot_times = vec![5.0];
    let xs = map_realizations(0..10_000, |i| Ok(run_realization(&cfg, i)?.snapshots[0].molecules[0].2)).unwrap();
    let bins = 20;
    let edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    let integrals = edges.windows(2).map(|w| potential.boltzmann_integral(w[0], w[1], 1e-12).unwrap()).collect();
    let truth = BinnedDistribution::from_integrals(&edges, integrals).unwrap();
    let empirical = BinnedDistribution::from_samples(&xs, &edges).unwrap();
    let kl = kl_divergence(&truth.masses, &empirical.masses).unwrap();
    outcome(kl < 0.01, format!("KL over {bins} bins = {kl:.5}"))
}

fn criterion_11() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = scaling(20, LATTICE_COMPARISON_RADIUS).unwrap();
    let runs = 1000;
    cfg.master_seed = 111;
    let dl = map_realizations(0..runs, |i| run_realization(&cfg, i).map(|r| (r.final_time, r.hop_count))).unwrap();
    cfg.master_seed = 112;
    let lat = map_realizations(0..runs, |i| fixed_lattice_run(&cfg, i).map(|r| (r.final_time, r.hop_count))).unwrap();
    let summary = |v: &[(f64, u64)]| {
        let t: Vec<f64> = v.iter().map(|p| p.0).collect();
        (mean_estimate(&t).unwrap(), v.iter().map(|p| p.1 as f64).sum::<f64>() / v.len() as f64)
    };
    let (m_dl, h_dl) = summary(&dl);
    let (m_lat, h_lat) = summary(&lat);
    let ratio = h_lat / h_dl;
    outcome(
        m_dl.overlaps(&m_lat) && ratio >= 10.0,
        format!(
            "extinction DL {:.4} +/- {:.4}, lattice {:.4} +/- {:.4}; hops {h_dl:.0} vs {h_lat:.0} (x{ratio:.1}); {:.0} s",
            m_dl.mean,
            m_dl.half_width,
            m_lat.mean,
            m_lat.half_width,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_12() -> Outcome {
    let sizes = [32usize, 64, 128, 256, 512, 1024];
    let runs = 40;
    let mut ns = Vec::new();
    let mut walls = Vec::new();
    for &n in &sizes {
        let mut cfg = scaling(n, SCALING_RADIUS).unwrap();
        cfg.master_seed = 12;
        cfg.measure_wall_time = true;
        let secs = map_sequential(0..runs, |i| run_realization(&cfg, i).map(|r| r.wall_seconds)).unwrap();
        ns.push(n as f64);
        walls.push(secs.iter().sum::<f64>() / runs as f64);
    }
    let slope = convergence_order(&ns, &walls).unwrap().slope;
    let shown: Vec<String> = sizes.iter().zip(&walls).map(|(n, w)| format!("{n}:{:.2}ms", 1e3 * w)).collect();
    outcome((0.8..=1.3).contains(&slope), format!("slope {slope:.3} ({})", shown.join(" ")))
}

fn main() -> ExitCode {
    // A comma-separated list such as `ACCEPTANCE_ONLY=4,9` narrows the run while iterating.
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|o| o.iter().any(|s| s == id));
    let mut failed = 0;
    let mut report = |id: &str, o: Outcome| {
        println!("criterion {id:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    let singles: [Check; 3] = [("1", criterion_1), ("2", criterion_2), ("3", criterion_3)];
    for (id, f) in singles {
        if wanted(id) {
            report(id, f());
        }
    }
    if wanted("4") || wanted("5") {
        let (c4, c5) = criteria_4_5();
        report("4", c4);
        report("5", c5);
    }
    let rest: [Check; 7] = [
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
        ("10", criterion_10),
        ("11", criterion_11),
        ("12", criterion_12),
    ];
    for (id, f) in rest {
        if wanted(id) {
            report(id, f());
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
