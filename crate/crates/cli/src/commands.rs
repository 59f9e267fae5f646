use std::fmt::Write as _;
use std::path::Path;

use faust_core::dictlearn::DenoiseReport;
use faust_core::image::{add_gaussian_noise, read_pgm, write_pgm};
use faust_core::io::{read_faust, read_matrix, read_vector, write_atomic, write_faust, write_vector};
use faust_core::operator::relative_error_dense;
use faust_core::{
    denoise_image, hierarchical_factorize, localization_experiment, make_schedule_plan,
    relative_complexity, relative_error, synthetic, truncated_svd, DenoiseConfig, FaustOperator,
    FlopCounter, LocalizationConfig, PalmConfig,
};

use crate::config::{CliError, RunConfig};
use crate::{ApplyArgs, DenoiseArgs, FactorizeArgs, LocalizeArgs, SvdArgs};

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn factorize(args: &FactorizeArgs, seed: u64) -> Result<(), CliError> {
    let run = RunConfig::resolve(args, seed)?;
    let (f, trace) = hierarchical_factorize(&run.matrix, &run.plan, &run.inner, &run.global)?;
    if let Some(p) = &args.output {
        write_faust(p, &f)?;
    }
    if let Some(p) = &args.trace {
        write_atomic(p, trace.to_csv().as_bytes())?;
    }
    if let Some(p) = &args.levels_csv {
        write_atomic(p, trace.levels_csv().as_bytes())?;
    }
    let re = relative_error(&run.matrix, &f)?;
    let rc = relative_complexity(&f, &run.matrix)?;
    println!(
        "{}: RE={re:.3e} RC={rc:.4} RCG={:.3} s_tot={} J={}",
        run.label,
        1.0 / rc,
        f.s_tot(),
        f.num_factors()
    );
    Ok(())
}

pub fn apply(args: &ApplyArgs) -> Result<(), CliError> {
    let f = read_faust(&args.faust)?;
    let x = read_vector(&args.input)?;
    let mut flops = FlopCounter::default();
    let y = if args.transpose {
        f.apply_transpose_counted(&x, &mut flops)?
    } else {
        f.apply_counted(&x, &mut flops)?
    };
    match &args.output {
        Some(p) => write_vector(p, &y)?,
        None => y.iter().for_each(|v| println!("{v}")),
    }
    if args.count_flops {
        let out_len = y.len() as u64;
        let msg = format!(
            "flops={} multiply_adds={} scalings={} bound={}",
            flops.flops(),
            flops.multiply_adds,
            flops.scalings,
            2 * f.s_tot() as u64 + out_len
        );
        // Keep stdout clean when it carries the vector.
        if args.output.is_some() {
            println!("{msg}");
        } else {
            eprintln!("{msg}");
        }
    }
    Ok(())
}

pub fn svd_baseline(args: &SvdArgs, seed: u64) -> Result<(), CliError> {
    let a = read_matrix(&args.input)?;
    let max = a.rows().min(a.cols());
    let mut csv = String::from("rank,relative_error,parameters\n");
    for &r in &args.ranks {
        if r == 0 || r > max {
            return Err(CliError::Config(format!("rank {r} outside 1..={max}")));
        }
        let t = truncated_svd(&a, r, seed)?;
        let re = relative_error_dense(&a, &t.reconstruct())?;
        let _ = writeln!(csv, "{r},{re:e},{}", t.parameter_count());
    }
    emit(args.output.as_deref(), &csv)
}

pub fn localize(args: &LocalizeArgs, seed: u64) -> Result<(), CliError> {
    if args.dims.len() < 2 || args.nnz.len() != args.dims.len() - 1 {
        return Err(CliError::Config(format!(
            "--dims needs J+1 entries and --nnz J entries, got {} and {}",
            args.dims.len(),
            args.nnz.len()
        )));
    }
    let shapes: Vec<(usize, usize)> = args.dims.windows(2).map(|w| (w[0], w[1])).collect();
    let exact = synthetic::random_faust(&shapes, &args.nnz, seed)?;
    let m = exact.to_dense();
    let (rows, cols) = m.shape();

    let mut operators: Vec<(String, FaustOperator)> = vec![("exact".into(), exact)];
    let cfg = PalmConfig {
        seed,
        ..PalmConfig::with_iterations(args.iters)
    };
    let s = args.nnz.iter().copied().max().unwrap_or(1).min(rows * rows);
    for &k in &args.approx_k {
        let plan = make_schedule_plan(rows, cols, shapes.len(), k, s, 0.5, (rows * rows) as f64)?;
        let (f, _) = hierarchical_factorize(&m, &plan, &cfg, &cfg)?;
        operators.push((format!("approx-k{k}"), f));
    }
    for spec in &args.operators {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("operator `{spec}` is not LABEL=PATH")))?;
        operators.push((label.to_string(), read_faust(Path::new(path))?));
    }
    if args.zero_baseline {
        operators.push(("zero".into(), FaustOperator::zero(rows, cols)));
    }
    let coordinates = match &args.coordinates {
        Some(p) => {
            let c = read_matrix(p)?;
            Some((0..c.rows()).map(|i| c.row(i).to_vec()).collect())
        }
        None => None,
    };
    let report = localization_experiment(
        &m,
        &operators,
        &LocalizationConfig {
            trials: args.trials,
            seed,
            sources: args.sources,
            coordinates,
        },
    )?;
    write_atomic(&args.output, report.to_csv().as_bytes())?;
    for (label, f) in &operators {
        let re = relative_error(&m, f).unwrap_or(f64::NAN);
        println!("{label}: RE={re:.3e} s_tot={}", f.s_tot());
    }
    for s in report.summary() {
        let dist = s.mean_distance.map(|d| format!(" mean_distance={d:.4}")).unwrap_or_default();
        println!(
            "{}: mean_overlap={:.4} exact_rate={:.4}{dist}",
            s.label, s.mean_overlap, s.exact_rate
        );
    }
    Ok(())
}

pub fn denoise(args: &DenoiseArgs, seed: u64) -> Result<(), CliError> {
    let input = read_pgm(&args.input)?;
    let (noisy, clean) = match (args.sigma, &args.clean) {
        (Some(sigma), _) => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(CliError::Config(format!("--sigma must be nonnegative, got {sigma}")));
            }
            (add_gaussian_noise(&input, sigma, &mut synthetic::rng(seed)), Some(input))
        }
        (None, Some(p)) => (input, Some(read_pgm(p)?)),
        (None, None) => (input, None),
    };
    let cfg = DenoiseConfig {
        patch_size: args.patch,
        training_patches: args.training,
        atoms: args.atoms,
        t: args.t,
        ksvd_iters: args.ksvd_iters,
        factors: args.factors,
        k: args.k,
        s: args.s,
        rho: args.rho,
        p: args.p,
        palm_iters: args.palm_iters,
        remove_mean: !args.keep_mean,
        normalize_atoms: args.normalize_atoms,
        seed,
    };
    let mut out = denoise_image(&noisy, &cfg, clean.as_ref(), args.dense_baseline)?;
    out.report.sigma = args.sigma;
    write_pgm(&args.output, &out.image)?;
    if let Some(p) = &args.dictionary {
        write_faust(p, &out.dictionary)?;
    }
    if let Some(p) = &args.report {
        write_atomic(p, out.report.to_csv().as_bytes())?;
    }
    println!("{}", DenoiseReport::CSV_HEADER);
    println!("{}", out.report.csv_row());
    Ok(())
}
