use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};
use villain_core::calculus::{green_column, Form};
use villain_core::estimators::{
    coulomb_char_function, coulomb_potential_variance, decoupling_statistics, gradient_window_probability,
    ivgff_max_statistics, random_test_form, sampler_benchmark, tilde_m_estimator, variance_identity,
    villain_two_point,
};
use villain_core::ig::{error_function_m, ig_stats, jacobi_residual, k_beta, min_variance, IGParams, KBetaGrid};
use villain_core::oracle::{iv_gff_ratio_bound, partition_identities, transfer_checks};
use villain_core::samplers::{
    gff_sample, CoulombMetropolis, IVHeatBath, IVState, LocalCoulombChain, VillainHeatBath, VillainState,
};
use villain_core::{build_lattice, LatticeGeometry};

use crate::artifact::{json_document, num, write_atomic, Csv};
use crate::config::{Command, Format, Observable, RunConfig, SampleModel};
use crate::CliError;

pub struct Report {
    pub path: PathBuf,
    /// False only when a hard assertion of `verify` fails.
    pub passed: bool,
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let g = cfg.geometry()?;
    let hash = g.hash();
    match cfg.command.expect("command set by the front end") {
        Command::Sample => sample(cfg, &g, &hash),
        Command::Measure => measure(cfg, &g, &hash),
        Command::Verify => verify(cfg, &g, &hash),
        Command::Bench => bench(cfg, &hash),
        Command::Ig => ig(cfg, &hash),
        Command::Green => green(cfg, &g, &hash),
    }
}

fn emit(cfg: &RunConfig, name: &str, bytes: Vec<u8>, passed: bool) -> Result<Report, CliError> {
    Ok(Report { path: write_atomic(&cfg.output_dir(), name, &bytes)?, passed })
}

fn emit_json<T: Serialize>(cfg: &RunConfig, hash: &str, name: &str, result: T) -> Result<Report, CliError> {
    emit(cfg, &format!("{name}.json"), json_document(cfg, hash, result)?, true)
}

fn vertex(g: &LatticeGeometry, p: [i64; 2], field: &str) -> Result<usize, CliError> {
    g.vertex_at(p[0], p[1]).ok_or_else(|| CliError::Usage(format!("field `{field}`: no vertex at ({}, {})", p[0], p[1])))
}

fn square(g: &LatticeGeometry, p: [i64; 2], field: &str) -> Result<usize, CliError> {
    g.square_at(p[0], p[1]).ok_or_else(|| CliError::Usage(format!("field `{field}`: no square at ({}, {})", p[0], p[1])))
}

/// JSON lines: the envelope without a result, then one snapshot per line.
fn sample(cfg: &RunConfig, g: &LatticeGeometry, hash: &str) -> Result<Report, CliError> {
    let beta = cfg.model.beta;
    let degree = cfg.model.degree;
    let base = cfg.chain_config();
    let samples = (base.sweeps / base.thin).max(1);
    let mut out = serde_json::to_vec(&crate::artifact::Envelope {
        schema: crate::artifact::SCHEMA,
        version: crate::artifact::VERSION,
        geometry_hash: hash,
        config: cfg,
        result: Value::Null,
    })
    .map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    let mut line = |chain: u64, index: usize, sweep: usize, state: Value| -> Result<(), CliError> {
        let v = json!({ "chain": chain, "index": index, "sweep": sweep, "state": state });
        serde_json::to_writer(&mut out, &v).map_err(|e| CliError::Io(e.to_string()))?;
        out.push(b'\n');
        Ok(())
    };
    for c in 0..cfg.chain.chains as u64 {
        let cc = base.with_chain(c);
        let mut rng = cc.rng();
        match cfg.sample.model {
            SampleModel::Villain => {
                let mut hb = VillainHeatBath::new(beta, cc.tail_margin)?;
                let mut s = VillainState::zero(g);
                for _ in 0..cc.burn_in {
                    hb.sweep(g, &mut s, &mut rng);
                }
                for i in 0..samples {
                    for _ in 0..cc.thin {
                        hb.sweep(g, &mut s, &mut rng);
                    }
                    line(c, i, cc.burn_in + (i + 1) * cc.thin, to_value(&s)?)?;
                }
            }
            SampleModel::CoulombLocal => {
                let mut chain = LocalCoulombChain::new(g, beta, &cc)?;
                for i in 0..samples {
                    let q = chain.next_charges();
                    line(c, i, chain.sweeps_done(), to_value(&q)?)?;
                }
            }
            SampleModel::CoulombMetropolis => {
                let mut mh = CoulombMetropolis::new(g, 2, beta, cc.metropolis_step)?;
                for _ in 0..cc.burn_in {
                    mh.sweep(&mut rng);
                }
                for i in 0..samples {
                    for _ in 0..cc.thin {
                        mh.sweep(&mut rng);
                    }
                    line(c, i, cc.burn_in + (i + 1) * cc.thin, to_value(&mh.state(g).q)?)?;
                }
            }
            SampleModel::Iv => {
                let hb = IVHeatBath::new(g, degree, beta)?;
                let mut s = IVState::zero(g, degree);
                for _ in 0..cc.burn_in {
                    hb.sweep(&mut s, &mut rng);
                }
                for i in 0..samples {
                    for _ in 0..cc.thin {
                        hb.sweep(&mut s, &mut rng);
                    }
                    line(c, i, cc.burn_in + (i + 1) * cc.thin, to_value(&s.psi)?)?;
                }
            }
            SampleModel::Gff => {
                for i in 0..samples {
                    let phi = gff_sample(g, degree, beta, &mut rng)?;
                    line(c, i, 0, to_value(&phi)?)?;
                }
            }
        }
    }
    emit(cfg, "sample.jsonl", out, true)
}

fn measure(cfg: &RunConfig, g: &LatticeGeometry, hash: &str) -> Result<Report, CliError> {
    let m = &cfg.measure;
    let beta = cfg.model.beta;
    let mc = cfg.measure_config();
    let result: Value = match m.observable {
        Observable::PotentialVariance => {
            let f = square(g, m.at, "measure.at")?;
            let gf = Form::indicator(g, 2, f, 1.0);
            to_value(coulomb_potential_variance(g, &gf, beta, &mc)?)?
        }
        Observable::CharFunction => {
            let (f1, f2) = (square(g, m.at, "measure.at")?, square(g, m.to, "measure.to")?);
            to_value(coulomb_char_function(g, f1, f2, beta, &mc)?)?
        }
        Observable::TwoPoint => {
            let (v1, v2) = (vertex(g, m.at, "measure.at")?, vertex(g, m.to, "measure.to")?);
            to_value(villain_two_point(g, v1, v2, beta, &mc)?)?
        }
        Observable::TildeM => {
            let (a, b) = (vertex(g, m.at, "measure.at")?, vertex(g, m.to, "measure.to")?);
            let e = g
                .edge_between(a, b)
                .ok_or_else(|| CliError::Usage("fields `measure.at`, `measure.to`: vertices are not adjacent".into()))?;
            to_value(tilde_m_estimator(g, e, beta, &mc)?)?
        }
        Observable::Window => {
            let v = vertex(g, m.at, "measure.at")?;
            to_value(gradient_window_probability(g, v, m.radius, m.eps, beta, &mc)?)?
        }
        Observable::Maximum => to_value(ivgff_max_statistics(&m.n_list, beta, &m.alphas, &mc)?)?,
        Observable::VarianceIdentity => {
            // test forms from a stream no chain uses
            let mut rng = mc.chain.with_chain(u64::MAX).rng();
            let gs: Vec<Form> = (0..m.count).map(|_| random_test_form(g, 2, &mut rng)).collect();
            to_value(variance_identity(g, &gs, beta, &mc)?)?
        }
        Observable::Decoupling => to_value(decoupling_statistics(g, beta, &mc, m.z_limit)?)?,
    };
    emit_json(cfg, hash, "measure", result)
}

fn to_value<T: Serialize>(x: T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::Io(e.to_string()))
}

fn verify(cfg: &RunConfig, g: &LatticeGeometry, hash: &str) -> Result<Report, CliError> {
    let beta = cfg.model.beta;
    let tol = cfg.verify.tolerance;
    let identities = partition_identities(g, beta, &cfg.oracle)?;
    let transfers = transfer_checks(g, beta, cfg.verify.transfers, cfg.seed, &cfg.oracle)?;
    let ratio = iv_gff_ratio_bound(g, beta, &cfg.oracle)?;
    let identities_pass = identities.iter().all(|c| c.pass && c.rel_diff < tol);
    let transfers_pass = transfers.iter().all(|c| c.rel_diff < tol);
    let passed = identities_pass && transfers_pass && ratio.holds;
    let result = json!({
        "pass": passed,
        "tolerance": tol,
        "identities": identities,
        "transfers": transfers,
        "ratio_bound": ratio,
    });
    let bytes = json_document(cfg, hash, result)?;
    emit(cfg, "verify.json", bytes, passed)
}

fn bench(cfg: &RunConfig, hash: &str) -> Result<Report, CliError> {
    let mc = cfg.measure_config();
    let mut rows = Vec::new();
    for &n in &cfg.bench.n_list {
        let g = build_lattice(n, cfg.geometry.bc)?;
        let f = square(&g, cfg.measure.at, "measure.at")?;
        rows.extend(sampler_benchmark(&g, &Form::indicator(&g, 2, f, 1.0), cfg.model.beta, &mc)?);
    }
    if cfg.output.format == Some(Format::Json) {
        return emit_json(cfg, hash, "bench", rows);
    }
    let mut csv = Csv::new(
        cfg,
        hash,
        &[
            "sampler",
            "n",
            "estimate",
            "stderr",
            "tau_int",
            "moves",
            "work",
            "work_per_move",
            "seconds",
            "seconds_per_effective_sample",
        ],
    )?;
    for r in rows {
        csv.row(&[
            r.sampler.clone(),
            r.n.to_string(),
            num(r.estimate.estimate),
            num(r.estimate.stderr),
            num(r.estimate.tau_int),
            r.moves.to_string(),
            r.work.to_string(),
            num(r.work_per_move),
            num(r.seconds),
            num(r.seconds_per_effective_sample),
        ]);
    }
    emit(cfg, "bench.csv", csv.into_bytes(), true)
}

fn ig(cfg: &RunConfig, hash: &str) -> Result<Report, CliError> {
    let beta = cfg.model.beta;
    let m = error_function_m(beta)?;
    if cfg.ig.table {
        let rows: Vec<(f64, villain_core::ig::IGStats)> = (0..cfg.ig.a_points)
            .map(|i| {
                let a = i as f64 / (cfg.ig.a_points - 1) as f64;
                ig_stats(IGParams::new(a, beta)).map(|s| (a, s))
            })
            .collect::<Result<_, _>>()?;
        if cfg.output.format == Some(Format::Json) {
            let v: Vec<Value> = rows
                .iter()
                .map(|(a, s)| json!({ "beta": beta, "a": a, "mu": s.mean, "var": s.variance, "t": s.third_abs, "m": m }))
                .collect();
            return emit_json(cfg, hash, "ig", v);
        }
        let mut csv = Csv::new(cfg, hash, &["beta", "a", "mu", "var", "t", "m"])?;
        for (a, s) in rows {
            csv.row(&[num(beta), num(a), num(s.mean), num(s.variance), num(s.third_abs), num(m)]);
        }
        return emit(cfg, "ig.csv", csv.into_bytes(), true);
    }
    let min = min_variance(4.0 * std::f64::consts::PI.powi(2) * beta)?;
    let k = k_beta(beta, &KBetaGrid::default())?;
    let residual = jacobi_residual(beta);
    if cfg.output.format == Some(Format::Json) {
        let v = json!({ "beta": beta, "m": m, "argmin_a": min.argmin, "jacobi_residual": residual, "k_beta": k });
        return emit_json(cfg, hash, "ig", v);
    }
    let mut csv = Csv::new(cfg, hash, &["beta", "m", "argmin_a", "jacobi_residual", "k_beta"])?;
    csv.row(&[num(beta), num(m), num(min.argmin), num(residual), num(k.value)]);
    emit(cfg, "ig.csv", csv.into_bytes(), true)
}

fn green(cfg: &RunConfig, g: &LatticeGeometry, hash: &str) -> Result<Report, CliError> {
    let degree = cfg.model.degree;
    let from = cfg.green.from.unwrap_or([0, 0]);
    let source = match degree {
        0 => vertex(g, from, "green.from")?,
        _ => square(g, from, "green.from")?,
    };
    let col = green_column(g, degree, source)?;
    let pos = |c: usize| if degree == 0 { g.vertex_pos(c) } else { g.face_pos(c) };
    if cfg.output.format == Some(Format::Json) {
        let v: Vec<Value> = col
            .values
            .iter()
            .enumerate()
            .map(|(c, &x)| json!({ "cell": c, "pos2": pos(c), "green": x }))
            .collect();
        return emit_json(cfg, hash, "green", json!({ "degree": degree, "source": source, "column": v }));
    }
    // positions are doubled coordinates; cells at infinity have none
    let mut csv = Csv::new(cfg, hash, &["cell", "x2", "y2", "green"])?;
    for (c, &x) in col.values.iter().enumerate() {
        let (px, py) = pos(c).map_or((String::new(), String::new()), |p| (p[0].to_string(), p[1].to_string()));
        csv.row(&[c.to_string(), px, py, num(x)]);
    }
    emit(cfg, "green.csv", csv.into_bytes(), true)
}
