use std::path::Path;
use std::process::Command;

use pcwqed::photonic::CALIBRATED;
use pcwqed_cli::commands::*;
use pcwqed_cli::config::{Positions, Probe, RateSource, RunConfig};
use pcwqed_cli::output::{parse_spectrum_csv, Cell};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pcwqed"))
}

fn values(out: &Output, name: &str, col: &str) -> Vec<f64> {
    out.table(name).unwrap().column(col).into_iter().map(|v| v.unwrap()).collect()
}

#[test]
fn uniform_stack_has_no_gap() {
    let mut cfg = RunConfig::default();
    cfg.stack.n_low = cfg.stack.n_high;
    let out = cmd_bands(&cfg).unwrap();
    let t = out.table("bands").unwrap();
    assert!(t.rows.iter().all(|r| r[3] == Cell::Flag(false)));
    assert!(out.summary.contains("no band gap"));
}

#[test]
fn calibrated_band_edge_sits_at_the_declared_frequency() {
    let out = cmd_bands(&RunConfig::default()).unwrap();
    let report: toml::Table = out.report("bands_report.txt").unwrap().parse().unwrap();
    let edge = report["gap_start_THz"].as_float().unwrap();
    assert!((edge - CALIBRATED.nu_be_thz).abs() < 1e-3, "{edge}");
    let t = out.table("bands").unwrap();
    let (nu, kappa, gap) = (t.column("nu_THz"), t.column("kappa_per_nm"), t.column("in_gap"));
    for i in 0..t.rows.len() {
        if gap[i] == Some(1.0) {
            assert!(kappa[i].unwrap() > 0.0);
            assert!(nu[i].unwrap() > edge);
        }
    }
}

#[test]
fn empty_ensemble_spectrum_is_flat() {
    let mut cfg = RunConfig::default();
    cfg.ensemble.n_bar = 0.0;
    let out = cmd_spectrum(&cfg).unwrap();
    assert!(values(&out, "spectrum", "T_over_T0").iter().all(|&v| v == 1.0));
}

#[test]
fn resonant_spectrum_is_symmetric_and_gap_spectrum_is_not() {
    let mut cfg = RunConfig::default();
    // Grid centred on the shifted resonance −Δ0 with 1 MHz steps.
    cfg.spectrum.detuning_min_mhz = -62.5;
    cfg.spectrum.detuning_max_mhz = 37.5;
    cfg.spectrum.points = 101;
    let sym = values(&cmd_spectrum(&cfg).unwrap(), "spectrum", "T_over_T0");
    for k in 1..=50 {
        assert!((sym[50 + k] - sym[50 - k]).abs() < 1e-12, "{k}");
    }
    cfg.rates.j_1d_gamma0 = -2.0;
    let fano = values(&cmd_spectrum(&cfg).unwrap(), "spectrum", "T_over_T0");
    let argmin = fano.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let argmax = fano.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    // J < 0: the dip is pulled below resonance, the peak sits above it.
    assert!(argmin < 50 && argmax > 50, "{argmin} {argmax}");
    assert!((fano[60] - fano[40]).abs() > 1e-3);
}

#[test]
fn greens_rates_feed_the_spectrum() {
    let mut cfg = RunConfig::default();
    cfg.rates.source = RateSource::Greens;
    let (at_nu1, _) = resolve_rates(&cfg).unwrap();
    assert!((at_nu1.gamma_1d - 1.5).abs() < 1e-9);
    assert!(at_nu1.j_1d.abs() < 0.05 * at_nu1.gamma_1d);
    cfg.rates.delta_be_ghz = Some(50.0);
    let (gap, kappa) = resolve_rates(&cfg).unwrap();
    assert!(gap.j_1d < 0.0 && gap.gamma_1d < -gap.j_1d);
    assert!(kappa > 0.0);
    let s = cmd_spectrum(&cfg).unwrap();
    assert!(values(&s, "spectrum", "T_over_T0").iter().any(|&v| v < 1.0));
}

#[test]
fn noiseless_synth_equals_spectrum_bit_for_bit() {
    let mut cfg = RunConfig::default();
    cfg.synth.noise_rel = 0.0;
    let a = cmd_spectrum(&cfg).unwrap().tables[0].to_csv();
    let b = cmd_synth(&cfg).unwrap().tables[0].to_csv();
    assert_eq!(a, b);
    cfg.spectrum.polarization = Probe::Tm;
    assert_eq!(cmd_spectrum(&cfg).unwrap().tables[0].to_csv(), cmd_synth(&cfg).unwrap().tables[0].to_csv());
}

#[test]
fn synth_is_seeded() {
    let mut cfg = RunConfig::default();
    let a = cmd_synth(&cfg).unwrap().tables[0].to_csv();
    assert_eq!(a, cmd_synth(&cfg).unwrap().tables[0].to_csv());
    cfg.seed += 1;
    assert_ne!(a, cmd_synth(&cfg).unwrap().tables[0].to_csv());
}

#[test]
fn synth_noise_level_is_honoured() {
    let mut cfg = RunConfig::default();
    cfg.spectrum.points = 4001;
    cfg.synth.noise_rel = 0.02;
    let clean = values(&cmd_spectrum(&cfg).unwrap(), "spectrum", "T_over_T0");
    let noisy = values(&cmd_synth(&cfg).unwrap(), "synth", "T_over_T0");
    let n = clean.len() as f64;
    let sd = (clean.iter().zip(&noisy).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / n).sqrt();
    assert!((sd / 0.02 - 1.0).abs() < 0.05, "{sd}");
}

#[test]
fn synth_then_fit_recovers_the_truth() {
    let mut cfg = RunConfig::default();
    cfg.rates.j_1d_gamma0 = -1.0;
    let csv = cmd_synth(&cfg).unwrap().tables[0].to_csv();
    let s = parse_spectrum_csv(&csv, "synth").unwrap();
    let out = cmd_fit(&cfg, Some(&s), None).unwrap();
    assert!(out.failure.is_none());
    let r: toml::Table = out.report("fit_report.toml").unwrap().parse().unwrap();
    let te = &r["te"];
    let get = |k: &str| (te[k]["value"].as_float().unwrap(), te[k]["sigma"].as_float().unwrap());
    for (k, truth) in [("gamma_1d", 1.4), ("j_1d", -1.0), ("gamma_prime", 2.0), ("delta_0_MHz", 12.5)] {
        let (v, s) = get(k);
        assert!((v - truth).abs() < 3.0 * s && (v / truth - 1.0).abs() < 0.1, "{k}: {v} ± {s}");
    }
    assert!(te["ratio_gamma_over_minus_j"]["value"].as_float().unwrap() > 0.0);
    let res = out.table("fit_te").unwrap().column("residual");
    assert!(res.iter().all(|v| v.unwrap().abs() < 0.1));
}

#[test]
fn paired_fits_report_the_enhancement() {
    let mut cfg = RunConfig::default();
    let te = parse_spectrum_csv(&cmd_synth(&cfg).unwrap().tables[0].to_csv(), "te").unwrap();
    cfg.spectrum.polarization = Probe::Tm;
    cfg.seed = 99;
    let tm = parse_spectrum_csv(&cmd_synth(&cfg).unwrap().tables[0].to_csv(), "tm").unwrap();
    let out = cmd_fit(&cfg, Some(&te), Some(&tm)).unwrap();
    let r: toml::Table = out.report("fit_report.toml").unwrap().parse().unwrap();
    let e = r["enhancement"]["te_over_tm"]["value"].as_float().unwrap();
    assert!((e - 30.0).abs() < 10.0, "{e}");
    assert!(out.summary.contains("TE/TM"));
}

#[test]
fn decay_report_exposes_the_apparent_ratio_and_hold_fit() {
    let out = cmd_decay(&RunConfig::default()).unwrap();
    let r: toml::Table = out.report("decay_report.toml").unwrap().parse().unwrap();
    let ratio = r["curves"]["apparent_over_true_gamma_1d"].as_float().unwrap();
    assert!((ratio - 0.81).abs() < 0.03, "{ratio}");
    let tau = r["holds"]["tau_sr_ms"].as_float().unwrap();
    assert!((tau - 16.0).abs() < 1e-6, "{tau}");
    let holds = out.table("decay_holds").unwrap();
    for row in &holds.rows {
        assert!((row[1].as_f64().unwrap() - row[2].as_f64().unwrap()).abs() < 1e-6);
    }
}

#[test]
fn fig4_rows_follow_the_band_edge_story() {
    let out = cmd_fig4(&RunConfig::default()).unwrap();
    let t = out.table("fig4").unwrap();
    assert_eq!(t.columns, ["delta_be_GHz", "gamma_1d_gamma0", "minus_j_1d_gamma0", "R", "R_cqed"]);
    let d = values(&out, "fig4", "delta_be_GHz");
    let g = values(&out, "fig4", "gamma_1d_gamma0");
    let mj = values(&out, "fig4", "minus_j_1d_gamma0");
    // First row: the first resonance, where the exchange term vanishes.
    assert!((d[0] + 132.9).abs() < 1.0, "{}", d[0]);
    assert!(mj[0].abs() < 0.05 * g[0]);
    assert_eq!(t.rows[0][4], Cell::Empty);
    assert_eq!(t.rows.len(), 1 + RunConfig::default().sweep.points);
    assert!(d[1..].windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn fields_default_to_the_first_resonance() {
    let out = cmd_fields(&RunConfig::default()).unwrap();
    let r: toml::Table = out.report("fields_report.txt").unwrap().parse().unwrap();
    assert!(!r["in_gap"].as_bool().unwrap());
    assert!(r["peak_intensity_rel"].as_float().unwrap() > 1.0);
    assert_eq!(out.table("field_cells").unwrap().rows.len(), CALIBRATED.n_cells);
}

#[test]
fn rates_sweep_is_calibrated_at_the_resonance() {
    let mut cfg = RunConfig::default();
    cfg.sweep.delta_be_min_ghz = -10.0;
    cfg.sweep.delta_be_max_ghz = 10.0;
    cfg.sweep.points = 5;
    let out = cmd_rates(&cfg).unwrap();
    let kappa = out.table("rates").unwrap().column("kappa_per_nm");
    assert!(kappa[0].is_none() && kappa[4].unwrap() > 0.0);
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    bin().args(args).arg("--out-dir").arg(dir).output().unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("mc.toml");
    std::fs::write(
        &cfg_path,
        "schema_version = 1\nseed = 5\n[ensemble]\npositions = \"monte_carlo\"\nmc_samples = 2000\n[spectrum]\npoints = 21\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    for cmd in ["spectrum", "synth", "fig4", "bands"] {
        let (a, b) = (tmp.path().join(format!("{cmd}_a")), tmp.path().join(format!("{cmd}_b")));
        assert!(run_in(&a, &[cmd, "--config", cfg]).status.success());
        assert!(run_in(&b, &[cmd, "--config", cfg]).status.success());
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            let (x, y) = (std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
            assert_eq!(x, y, "{cmd}: {n:?}");
            assert!(!x.contains(&b'\r'));
        }
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |d: &str, seed: &str| {
        let dir = tmp.path().join(d);
        assert!(run_in(&dir, &["synth", "--seed", seed, "--format", "csv"]).status.success());
        assert!(!dir.join("synth.svg").exists());
        std::fs::read_to_string(dir.join("synth.csv")).unwrap()
    };
    assert_eq!(read("a", "1"), read("b", "1"));
    assert_ne!(read("a", "1"), read("c", "2"));
}

#[test]
fn malformed_csv_exits_with_input_code_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("bad.csv");
    std::fs::write(&data, "detuning_MHz,T_over_T0,sigma\n-10,0.9,0.02\n-5,oops,0.02\n").unwrap();
    let out = run_in(tmp.path(), &["fit", "--te", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\n[stack]\nindex = 2\n").unwrap();
    let out = run_in(tmp.path(), &["bands", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("index"));
    // A physically invalid stack is an input error too.
    std::fs::write(&bad, "schema_version = 1\n[stack]\nfill_fraction = 1.5\n").unwrap();
    assert_eq!(run_in(tmp.path(), &["bands", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unidentifiable_fit_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("flat.csv");
    let rows: String = (0..20).map(|k| format!("{},1,0.02\n", k as f64 - 10.0)).collect();
    std::fs::write(&data, format!("detuning_MHz,T_over_T0,sigma\n{rows}")).unwrap();
    let out = run_in(tmp.path(), &["fit", "--te", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn printed_schema_is_a_usable_config() {
    let out = bin().arg("--print-schema").output().unwrap();
    assert!(out.status.success());
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.ensemble.positions, Positions::Quadrature);
}
