//! Distance sweeps and their CSV/JSON output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use midlink::analytic::RateReport;
use midlink::optics::{mpi_loss, mps_side_loss};
use midlink::protocol::{des_run, SimConfig};
use rayon::prelude::*;

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

/// Header of a rate table; the two simulation columns appear only when some
/// row carries simulated values.
pub const RATE_COLUMNS: &[&str] = &[
    "distance_km",
    "tau_t_us",
    "alpha1_db",
    "alpha2_db",
    "g1_hz",
    "g2_hz",
    "g2_star_hz",
    "ratio",
];
pub const SIM_COLUMNS: &[&str] = &["sim_g2_hz", "sim_infidelity"];

/// Header of the midpoint-interference tables written by `fig4`.
pub const MPI_COLUMNS: &[&str] = &["distance_km", "tau_t_us", "alpha1_db", "g1_hz"];

fn check_distances(distances: &[f64]) -> Result<(), CliError> {
    if distances.is_empty() {
        return Err(CliError::Distances("no distances given".into()));
    }
    if let Some(bad) = distances.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(CliError::Distances(format!("{bad} km is not a positive length")));
    }
    Ok(())
}

fn rate_point(config: &RunConfig, length_km: f64) -> Result<RateReport, CliError> {
    let budget = config.loss_budget();
    let geom = config.geometry(length_km)?;
    let alpha1 = mpi_loss(&budget, &geom, config.encoding)?;
    let side = mps_side_loss(&budget, &geom, config.encoding, config.midpoint)?;
    let timing = config.timing(&geom)?;
    let mut report = RateReport::evaluate(length_km, geom.tau_t_us(), alpha1, side.alpha2_db(), timing.n)?;
    if config.simulate {
        let sim = SimConfig::from_link(
            &side,
            &config.detector()?,
            config.bsm_variant,
            &timing,
            config.cycles,
            config.seed,
            config.mode,
        );
        let stats = des_run(&sim)?.stats;
        report.sim_g2_hz = Some(stats.rate_hz);
        report.sim_infidelity = stats.infidelity_estimate;
    }
    Ok(report)
}

/// Closed-form rates at each distance, in input order. With
/// `config.simulate` set, every point also gets a simulated rate; points run
/// in parallel.
pub fn sweep_rates(config: &RunConfig, distances: &[f64]) -> Result<Vec<RateReport>, CliError> {
    check_distances(distances)?;
    if config.simulate {
        distances.par_iter().map(|&d| rate_point(config, d)).collect()
    } else {
        distances.iter().map(|&d| rate_point(config, d)).collect()
    }
}

fn number(x: f64) -> String {
    x.to_string()
}

/// Writes a rate table.
pub fn emit<W: Write>(reports: &[RateReport], format: OutputFormat, out: W) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => emit_csv(reports, out),
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, reports)?;
            out.write_all(b"\n")?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_csv<W: Write>(reports: &[RateReport], out: W) -> Result<(), CliError> {
    let with_sim = reports.iter().any(|r| r.sim_g2_hz.is_some() || r.sim_infidelity.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = RATE_COLUMNS.to_vec();
    if with_sim {
        header.extend_from_slice(SIM_COLUMNS);
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row: Vec<String> = [
            r.distance_km,
            r.tau_t_us,
            r.alpha1_db,
            r.alpha2_db,
            r.g1_hz,
            r.g2_hz,
            r.g2_star_hz,
            r.ratio,
        ]
        .into_iter()
        .map(number)
        .collect();
        if with_sim {
            row.push(r.sim_g2_hz.map(number).unwrap_or_default());
            row.push(r.sim_infidelity.map(number).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Midpoint-interference columns only.
pub fn emit_mpi_csv<W: Write>(reports: &[RateReport], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MPI_COLUMNS)?;
    for r in reports {
        w.write_record([r.distance_km, r.tau_t_us, r.alpha1_db, r.g1_hz].map(number))?;
    }
    w.flush()?;
    Ok(())
}

/// Opens `path` for writing, or standard output when `path` is `None`.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        None => Box::new(io::stdout().lock()),
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| CliError::File {
            path: p.to_path_buf(),
            source,
        })?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use midlink::optics::LossBudget;

    fn square() -> RunConfig {
        RunConfig::default()
    }

    #[test]
    fn square_profile_band_at_50_km() {
        let r = &sweep_rates(&square(), &[50.0]).unwrap()[0];
        assert_eq!(r.tau_t_us, 250.0);
        assert!((r.alpha1_db - 35.0).abs() < 1e-12);
        assert!((r.alpha2_db - 40.0).abs() < 1e-12);
        let gain = r.g2_star_hz / r.g1_hz;
        assert!((10.0..=100.0).contains(&gain), "{gain}");
    }

    #[test]
    fn triangle_profile_gains_more() {
        let mut tri = square();
        tri.alpha_qd_db = 20.0;
        tri.alpha_bsm_db = 10.0;
        assert_eq!(tri.loss_budget(), LossBudget::triangle_profile());
        let s = &sweep_rates(&square(), &[50.0]).unwrap()[0];
        let t = &sweep_rates(&tri, &[50.0]).unwrap()[0];
        assert!(t.g2_star_hz / t.g1_hz > s.g2_star_hz / s.g1_hz);
    }

    #[test]
    fn lossless_short_link_ratio_tends_to_one() {
        let mut c = square();
        c.alpha_qd_db = 0.0;
        c.alpha_bsm_db = 0.0;
        c.fiber_db_per_km = 0.0;
        let r = &sweep_rates(&c, &[1e-3]).unwrap()[0];
        assert_eq!(r.g2_star_hz, r.g1_hz);
        assert!((r.g1_hz - 1.0 / (5e-3 * 1e-6)).abs() / r.g1_hz < 1e-12);
    }

    #[test]
    fn bad_distances_rejected() {
        assert!(matches!(sweep_rates(&square(), &[]), Err(CliError::Distances(_))));
        assert!(sweep_rates(&square(), &[10.0, -1.0]).is_err());
        assert!(sweep_rates(&square(), &[f64::NAN]).is_err());
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        emit(&[], OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "distance_km,tau_t_us,alpha1_db,alpha2_db,g1_hz,g2_hz,g2_star_hz,ratio\n"
        );
        let reports = sweep_rates(&square(), &[50.0]).unwrap();
        let mut buf = Vec::new();
        emit(&reports, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(row[4], reports[0].g1_hz);
        assert_eq!(row[7], reports[0].ratio);
    }

    #[test]
    fn simulated_columns_appear_when_present() {
        let mut reports = sweep_rates(&square(), &[50.0, 60.0]).unwrap();
        reports[1].sim_g2_hz = Some(12.5);
        let mut buf = Vec::new();
        emit(&reports, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].ends_with(",ratio,sim_g2_hz,sim_infidelity"));
        assert!(lines[1].ends_with(",,"));
        assert!(lines[2].ends_with(",12.5,"));
    }

    #[test]
    fn json_round_trips() {
        let mut reports = sweep_rates(&square(), &[10.0, 33.3, 97.0]).unwrap();
        reports[0].sim_g2_hz = Some(1.0 / 3.0);
        let mut buf = Vec::new();
        emit(&reports, OutputFormat::Json, &mut buf).unwrap();
        let back: Vec<RateReport> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, reports);
    }

    #[test]
    fn simulated_sweep_keeps_input_order() {
        let mut c = square();
        c.simulate = true;
        c.cycles = 200_000;
        c.alpha_qd_db = 0.0;
        c.alpha_bsm_db = 0.0;
        let d = [30.0, 10.0, 20.0];
        let reports = sweep_rates(&c, &d).unwrap();
        let got: Vec<f64> = reports.iter().map(|r| r.distance_km).collect();
        assert_eq!(got, d);
        for r in &reports {
            let sim = r.sim_g2_hz.unwrap();
            assert!((sim - r.g2_hz).abs() < 0.1 * r.g2_hz, "{sim} vs {}", r.g2_hz);
        }
    }
}
