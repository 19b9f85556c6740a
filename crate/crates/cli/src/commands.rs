//! Work behind each subcommand, kept out of `main` so it can be tested.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use midlink::analytic::{saturation_fraction, RateReport};
use midlink::markov::{pi0_closed_form, stationary, MarkovChainModel, SolveMethod};
use midlink::optics::{
    fidelity_mpi, fidelity_mps, fidelity_mps_reduced, herald_probabilities, mpi_loss, mps_side_loss, LossBudget,
};
use midlink::protocol::{des_run, SimConfig, SimRun};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Location};
use crate::sweep::{emit, emit_mpi_csv, sweep_rates};
use crate::OutputFormat;

/// Closed-form agreement required by `markov` to report a match.
pub const MARKOV_MATCH_TOL: f64 = 1e-10;

/// Solves the full chain and compares `π(0,0)` with the closed form.
pub fn markov_summary(n: usize, p: f64) -> Result<(String, bool), CliError> {
    let chain = MarkovChainModel::build(n, p)?;
    let st = stationary(&chain)?;
    let closed = pi0_closed_form(n, p)?;
    let diff = (st.pi0() - closed).abs();
    let matched = diff <= MARKOV_MATCH_TOL;
    let method = match st.method {
        SolveMethod::DenseLu => "dense LU",
        SolveMethod::PowerIteration => "power iteration",
        SolveMethod::Degenerate => "degenerate chain",
    };
    let mut out = String::new();
    writeln!(out, "states       {}", chain.len()).unwrap();
    writeln!(out, "solver       {method}").unwrap();
    writeln!(out, "residual     {:e}", st.residual).unwrap();
    writeln!(out, "pi(0,0)      {}", st.pi0()).unwrap();
    writeln!(out, "closed form  {closed}").unwrap();
    writeln!(out, "difference   {diff:e}").unwrap();
    writeln!(out, "match        {}", if matched { "yes" } else { "no" }).unwrap();
    Ok((out, matched))
}

/// The full chain and its stationary vector as JSON.
pub fn markov_json(n: usize, p: f64) -> Result<Value, CliError> {
    let chain = MarkovChainModel::build(n, p)?;
    let st = stationary(&chain)?;
    Ok(json!({
        "chain": chain.to_json(),
        "stationary": chain.distribution_json(&st.probabilities),
        "pi0_closed_form": pi0_closed_form(n, p)?,
    }))
}

/// How a `simulate` run picks its link.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointOverride {
    /// Per-side success probability, replacing the loss budget.
    pub p: Option<f64>,
    /// Cycles per transmission delay, replacing `ceil(τt/τc)`.
    pub n: Option<u64>,
}

/// Simulation settings for the single point at `config.length_km`.
pub fn point_sim_config(config: &RunConfig, over: PointOverride) -> Result<SimConfig, CliError> {
    let geom = config.geometry(config.length_km)?;
    let timing = config.timing(&geom)?;
    let side = mps_side_loss(&config.loss_budget(), &geom, config.encoding, config.midpoint)?;
    let mut sim = SimConfig::from_link(
        &side,
        &config.detector()?,
        config.bsm_variant,
        &timing,
        config.cycles,
        config.seed,
        config.mode,
    );
    if let Some(p) = over.p {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Config {
                location: Location::Flag,
                key: "p".into(),
                message: format!("must lie in [0, 1], got {p}"),
            });
        }
        sim.beta_qd = 1.0;
        sim.beta_ms = p;
    }
    if let Some(n) = over.n {
        sim.n = n;
    }
    sim.trace_limit = config.trace_limit;
    sim.validate()?;
    Ok(sim)
}

pub fn simulate_point(config: &RunConfig, over: PointOverride) -> Result<SimRun, CliError> {
    Ok(des_run(&point_sim_config(config, over)?)?)
}

/// Dark-count infidelities (`1 - F`) at `config.length_km`, optionally with a Monte
/// Carlo estimate.
pub fn fidelity_summary(config: &RunConfig, monte_carlo: bool) -> Result<Value, CliError> {
    let budget = config.loss_budget();
    let geom = config.geometry(config.length_km)?;
    let side = mps_side_loss(&budget, &geom, config.encoding, config.midpoint)?;
    let alpha1 = mpi_loss(&budget, &geom, config.encoding)?;
    let p_dc = config.detector()?.p_dc();
    let beta_1 = midlink::optics::db_to_prob(alpha1)?;
    let heralds = herald_probabilities(p_dc, side.beta_qd, side.beta_ms, config.bsm_variant)?;
    let mut out = json!({
        "length_km": config.length_km,
        "p_dc": p_dc,
        "beta_qd": side.beta_qd,
        "beta_ms": side.beta_ms,
        "infidelity_mps": fidelity_mps(p_dc, side.beta_qd, side.beta_ms)?,
        "infidelity_mps_reduced": fidelity_mps_reduced(p_dc, side.beta_qd, side.beta_ms)?,
        "infidelity_mpi": fidelity_mpi(p_dc, beta_1)?,
        "true_herald_prob": heralds.true_herald,
        "false_herald_prob": heralds.false_herald,
        "coincidence_infidelity": heralds.coincidence_infidelity(),
    });
    if monte_carlo {
        let stats = simulate_point(config, PointOverride::default())?.stats;
        let total = stats.coincidences();
        let se = stats
            .infidelity_estimate
            .map(|f| (f * (1.0 - f) / total as f64).sqrt());
        out["mc_coincidences"] = json!(total);
        out["mc_infidelity"] = json!(stats.infidelity_estimate);
        out["mc_infidelity_se"] = json!(se);
    }
    Ok(out)
}

/// Files written by [`fig4`], in order.
pub const FIG4_FILES: [&str; 4] = [
    "fig4_square_mps.csv",
    "fig4_square_mpi.csv",
    "fig4_triangle_mps.csv",
    "fig4_triangle_mpi.csv",
];

/// Both loss profiles over `config.sweep`, one CSV per profile and scheme.
pub fn fig4(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let distances = config.sweep.distances();
    let mut written = Vec::new();
    let profiles = [LossBudget::square_profile(), LossBudget::triangle_profile()];
    for (profile, names) in profiles.iter().zip(FIG4_FILES.chunks(2)) {
        let mut c = config.clone();
        c.alpha_qd_db = profile.alpha_qd;
        c.alpha_bsm_db = profile.alpha_bsm;
        let reports: Vec<RateReport> = sweep_rates(&c, &distances)?;
        let mps = dir.join(names[0]);
        emit(&reports, OutputFormat::Csv, create(&mps)?)?;
        let mpi = dir.join(names[1]);
        emit_mpi_csv(&reports, create(&mpi)?)?;
        written.push(mps);
        written.push(mpi);
    }
    Ok(written)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `G2/G2*` at a config's single point, for diagnostics.
pub fn saturation_at(config: &RunConfig) -> Result<f64, CliError> {
    let geom = config.geometry(config.length_km)?;
    let side = mps_side_loss(&config.loss_budget(), &geom, config.encoding, config.midpoint)?;
    let timing = config.timing(&geom)?;
    Ok(saturation_fraction(side.beta2(), timing.n)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_small_chain() {
        let (text, matched) = markov_summary(2, 0.5).unwrap();
        assert!(matched);
        assert!(text.contains("pi(0,0)      0.4"), "{text}");
        assert!(text.contains("states       7"));
    }

    #[test]
    fn markov_json_has_labels() {
        let v = markov_json(1, 0.5).unwrap();
        assert!(v["stationary"].get("(0,0)").is_some());
    }

    #[test]
    fn worked_example_saturation() {
        assert!(saturation_at(&RunConfig::default()).unwrap() >= 0.9);
    }

    #[test]
    fn lossless_point_pairs_every_n_plus_one() {
        let mut c = RunConfig::default();
        c.cycles = 11_000;
        let run = simulate_point(&c, PointOverride { p: Some(1.0), n: Some(10) }).unwrap();
        assert_eq!(run.stats.false_coincidences, 0);
        let pairs = &run.left_pairs;
        assert!(pairs.windows(2).all(|w| w[1] - w[0] == 11));
    }

    #[test]
    fn fidelity_fields() {
        let v = fidelity_summary(&RunConfig::default(), false).unwrap();
        let f = v["infidelity_mps"].as_f64().unwrap();
        let g = v["infidelity_mps_reduced"].as_f64().unwrap();
        assert!((f - g).abs() < 1e-12);
        assert!(v.get("mc_infidelity").is_none());
    }
}
