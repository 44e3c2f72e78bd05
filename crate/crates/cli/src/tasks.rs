//! Task execution and the named verification checks.

use nalgebra::DMatrix;
use serde_json::{json, Value};

use symred_core::builtins::builtin;
use symred_core::dynamics::{
    check_noether, check_stratum_preservation, compare_full_vs_reduced, cross_section_scenario,
    integrate_full, integrate_reduced, reduced_trajectory_csv, trajectory_csv, Hamiltonian,
    HamiltonianSystem,
};
use symred_core::error::Error as CoreError;
use symred_core::groups::{check_equivariance, momentum_map, GroupSpec};
use symred_core::invariants::{
    express_in_generators, generator_relations, invariant_generators, molien_dimension,
    noether_residuals, reduced_structure_matrix, subalgebra_dimension, Completeness, HilbertMap,
};
use symred_core::poly::{Poly, VarSet};
use symred_core::strata::{
    abelian_model_level_set, enumerate_strata, frontier_diagnostic, local_model_match, normalizer_reduced_stratum,
    slice_model, zero_level_sampler, Stratification,
};
use symred_core::symplectic::{
    adapted_complex_structure, constant_rank_split, Subspace, SymplecticSpace,
};

use crate::config::{Model, TaskCfg};

pub const CHECK_NAMES: [&str; 13] = [
    "adapted_j",
    "constant_rank",
    "equivariance",
    "generators",
    "structure_matrix",
    "norm_expressibility",
    "stratification",
    "local_model",
    "prop13",
    "twin_dynamics",
    "conservation",
    "cross_section",
    "determinism",
];

pub struct TaskOutcome {
    pub results: Vec<Value>,
    pub verify_failures: Vec<String>,
    pub ambiguity: bool,
}

struct Ctx<'a> {
    model: &'a Model,
    output_dir: std::path::PathBuf,
    hilbert: Option<HilbertMap>,
    stratification: Option<Stratification>,
}

impl<'a> Ctx<'a> {
    fn hilbert(&mut self) -> Result<&HilbertMap, CoreError> {
        if self.hilbert.is_none() {
            self.hilbert = Some(hilbert_for(self.model)?);
        }
        Ok(self.hilbert.as_ref().unwrap())
    }

    fn stratification(&mut self) -> Result<&Stratification, CoreError> {
        if self.stratification.is_none() {
            let f = momentum_map(&self.model.spec)?;
            self.stratification = Some(enumerate_strata(&self.model.spec, &f)?);
        }
        Ok(self.stratification.as_ref().unwrap())
    }
}

fn hilbert_for(model: &Model) -> Result<HilbertMap, CoreError> {
    match &model.spec {
        GroupSpec::LieAlgebra(a) => {
            if let Some(name) = &model.builtin_name {
                return builtin(name)?.hilbert_map();
            }
            // A classical declared generating set applies when the algebra
            // matches the bundled rotation action.
            let so3 = symred_core::builtins::so3_algebra();
            if a.basis == so3.basis && a.structure == so3.structure {
                return builtin("so3_central_force")?.hilbert_map();
            }
            Err(CoreError::Precondition(
                "no generating set known for this algebra; generator sweeps require a \
                 finite group or torus"
                    .into(),
            ))
        }
        _ => invariant_generators(&model.spec, None),
    }
}

fn is_ambiguity(e: &CoreError) -> bool {
    matches!(e, CoreError::ToleranceAmbiguity { .. })
}

/// Execute the declared tasks in order. Verification failures are recorded,
/// not raised; tolerance-band ambiguities set the dedicated flag.
pub fn run_tasks(model: &Model, tasks: &[TaskCfg], output_dir: &std::path::Path) -> TaskOutcome {
    let mut ctx = Ctx {
        model,
        output_dir: output_dir.to_path_buf(),
        hilbert: None,
        stratification: None,
    };
    let mut results = Vec::new();
    let mut verify_failures = Vec::new();
    let mut ambiguity = false;
    for (index, task) in tasks.iter().enumerate() {
        let value = match task {
            TaskCfg::Invariants { degree_bound } => task_invariants(&mut ctx, *degree_bound),
            TaskCfg::Strata {} => task_strata(&mut ctx),
            TaskCfg::Simulate {
                t_final,
                dt,
                start,
                reduced,
                label,
            } => task_simulate(
                &mut ctx,
                index,
                *t_final,
                *dt,
                start.as_deref(),
                *reduced,
                label.as_deref(),
            ),
            TaskCfg::Verify { checks } => {
                let outcome = task_verify(&mut ctx, checks.as_deref());
                match outcome {
                    Ok((value, failures)) => {
                        verify_failures.extend(failures);
                        Ok(value)
                    }
                    Err(e) => Err(e),
                }
            }
            TaskCfg::Slice { point } => task_slice(&mut ctx, point.as_deref()),
        };
        match value {
            Ok(v) => results.push(v),
            Err(e) => {
                if is_ambiguity(&e) {
                    ambiguity = true;
                }
                verify_failures.push(format!("task {}: {e}", task.kind()));
                results.push(json!({
                    "task": task.kind(),
                    "error": e.to_string(),
                }));
            }
        }
    }
    TaskOutcome {
        results,
        verify_failures,
        ambiguity,
    }
}

fn poly_texts(polys: &[Poly], vars: &VarSet) -> Vec<String> {
    polys.iter().map(|p| p.display(vars)).collect()
}

fn task_invariants(ctx: &mut Ctx, degree_bound: Option<u32>) -> Result<Value, CoreError> {
    let model = ctx.model;
    let h = match degree_bound {
        Some(d) => invariant_generators(&model.spec, Some(d))?,
        None => hilbert_for(model)?,
    };
    let phase = VarSet::Phase {
        pairs: model.spec.n_pairs(),
    };
    let yvars = VarSet::Reduced { count: h.len() };
    let relations = generator_relations(&h, None)?;
    let lambda = reduced_structure_matrix(&h)?;
    let f = momentum_map(&model.spec)?;
    let noether_zero = noether_residuals(&h, &f)
        .iter()
        .all(|row| row.iter().all(|r| r.is_zero()));
    let value = json!({
        "task": "invariants",
        "generators": poly_texts(&h.generators, &phase),
        "degrees": h.degrees,
        "certified_degree": h.certified_degree,
        "complete": matches!(h.completeness, Completeness::NoetherBound),
        "relations": poly_texts(&relations, &yvars),
        "structure_matrix": lambda.matrix.iter()
            .map(|row| poly_texts(row, &yvars)).collect::<Vec<_>>(),
        "noether_zero": noether_zero,
    });
    ctx.hilbert = Some(h);
    Ok(value)
}

fn task_strata(ctx: &mut Ctx) -> Result<Value, CoreError> {
    let model = ctx.model;
    let strat = ctx.stratification()?.clone();
    let mut classes: Vec<Value> = Vec::new();
    for s in &strat.strata {
        // Per-stratum slice data at the representative point.
        let slice = match (&s.representative, s.realized) {
            (Some(rep), true) => {
                let sm = slice_model(rep, &model.spec, &model.space)?;
                json!({
                    "orbit_dim": sm.orbit_dim,
                    "null_dim": sm.nu_dim,
                    "slice_dim": sm.slice_dim(),
                })
            }
            _ => Value::Null,
        };
        classes.push(json!({
            "class": s.class_id.0,
            "label": s.label,
            "realized": s.realized,
            "fixed_dim": s.fixed_dim,
            "stratum_dim": s.stratum_dim,
            "supports": s.supports,
            "slice": slice,
        }));
    }
    let closure: Vec<Value> = strat
        .closure
        .iter()
        .map(|(lo, up)| json!([lo.0, up.0]))
        .collect();
    // Generator relations cut out the embedded image alongside the strata.
    let relations = match ctx.hilbert() {
        Ok(h) => {
            let yvars = VarSet::Reduced { count: h.len() };
            let rels = generator_relations(h, None)?;
            json!(poly_texts(&rels, &yvars))
        }
        Err(_) => Value::Null,
    };
    Ok(json!({
        "task": "strata",
        "classes": classes,
        "closure_hasse": closure,
        "relations": relations,
    }))
}

fn task_simulate(
    ctx: &mut Ctx,
    index: usize,
    t_final: f64,
    dt: f64,
    start: Option<&[f64]>,
    reduced: bool,
    label: Option<&str>,
) -> Result<Value, CoreError> {
    let model = ctx.model;
    let f = momentum_map(&model.spec)?;
    let start_owned: Vec<f64> = match start {
        Some(v) => v.to_vec(),
        None => match &model.scenario_start {
            Some(v) => v.clone(),
            None => {
                let (pts, _) = zero_level_sampler(&f, 1, 1.0, model.seed);
                pts.into_iter()
                    .next()
                    .ok_or_else(|| CoreError::Numerical("no zero-level start point found".into()))?
            }
        },
    };
    let label = label
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("simulate{}", index + 1));
    let file = format!("trajectory_{label}.csv");
    let path = ctx.output_dir.join(&file);
    if reduced {
        let hilbert = ctx.hilbert()?.clone();
        let lambda = reduced_structure_matrix(&hilbert)?;
        let h_red = express_in_generators(&ctx.model.hamiltonian, &hilbert)?;
        let y0 = hilbert.eval_f64(&start_owned);
        let traj = integrate_reduced(&lambda, &h_red, &y0, t_final, dt)?;
        std::fs::write(&path, reduced_trajectory_csv(&traj))
            .map_err(|e| CoreError::Numerical(format!("cannot write {file}: {e}")))?;
        Ok(json!({
            "task": "simulate",
            "reduced": true,
            "file": file,
            "steps": traj.len() - 1,
            "energy_drift": traj.energy_drift(),
        }))
    } else {
        let sys = HamiltonianSystem::new(
            model.space.clone(),
            Hamiltonian::Polynomial(model.hamiltonian.clone()),
            model.spec.clone(),
            f,
        )?;
        let traj = integrate_full(&sys, &start_owned, t_final, dt, None)?;
        std::fs::write(&path, trajectory_csv(&traj))
            .map_err(|e| CoreError::Numerical(format!("cannot write {file}: {e}")))?;
        Ok(json!({
            "task": "simulate",
            "reduced": false,
            "file": file,
            "steps": traj.len() - 1,
            "energy_drift": traj.energy_drift(),
            "momentum_drift": check_noether(&traj),
        }))
    }
}

fn task_slice(ctx: &mut Ctx, point: Option<&[f64]>) -> Result<Value, CoreError> {
    let model = ctx.model;
    let f = momentum_map(&model.spec)?;
    let point_owned: Vec<f64> = match point {
        Some(v) => v.to_vec(),
        None => {
            let (pts, _) = zero_level_sampler(&f, 1, 1.0, model.seed ^ 0x51ce);
            pts.into_iter()
                .next()
                .ok_or_else(|| CoreError::Numerical("no zero-level point for slice".into()))?
        }
    };
    let sm = slice_model(&point_owned, &model.spec, &model.space)?;
    let report = local_model_match(&point_owned, &model.spec, &model.space)?;
    let abelian = if !matches!(model.spec, GroupSpec::LieAlgebra(_)) {
        let r = abelian_model_level_set(&sm, &model.spec, 1000, model.seed ^ 0xab)?;
        json!({
            "samples": r.samples,
            "solutions": r.solutions,
            "counterexamples": r.counterexamples,
        })
    } else {
        Value::Null
    };
    Ok(json!({
        "task": "slice",
        "point": point_owned,
        "orbit_dim": sm.orbit_dim,
        "null_dim": sm.nu_dim,
        "slice_dim": sm.slice_dim(),
        "local_model": {
            "matched": report.matched,
            "dims_only": report.dims_only,
            "slice_side": report.slice_side,
            "ambient_side": report.ambient_side,
        },
        "abelian_level": abelian,
    }))
}

// ---------------------------------------------------------------------------
// Verification checks.

struct CheckResult {
    pass: bool,
    detail: String,
}

fn applicable_checks(model: &Model) -> Vec<&'static str> {
    let mut names = vec!["adapted_j", "constant_rank", "equivariance"];
    let has_hilbert = hilbert_for(model).is_ok();
    if has_hilbert {
        names.extend([
            "generators",
            "structure_matrix",
            "norm_expressibility",
            "twin_dynamics",
        ]);
    }
    match model.spec {
        GroupSpec::Finite(_) | GroupSpec::Torus(_) => {
            names.extend(["stratification", "local_model", "prop13"]);
        }
        GroupSpec::LieAlgebra(_) => {
            names.push("local_model");
        }
    }
    names.push("conservation");
    if model.builtin_name.as_deref() == Some("so3_central_force") {
        names.push("cross_section");
    }
    if has_hilbert {
        names.push("determinism");
    }
    names
}

fn task_verify(
    ctx: &mut Ctx,
    requested: Option<&[String]>,
) -> Result<(Value, Vec<String>), CoreError> {
    let applicable = applicable_checks(ctx.model);
    let selected: Vec<&'static str> = match requested {
        None => applicable.clone(),
        Some(names) if names.iter().any(|n| n == "all") => applicable.clone(),
        Some(names) => applicable
            .iter()
            .copied()
            .filter(|a| names.iter().any(|n| n == a))
            .collect(),
    };
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for name in selected {
        let result = run_check(ctx, name);
        let (pass, detail) = match result {
            Ok(r) => (r.pass, r.detail),
            Err(e) => {
                if is_ambiguity(&e) {
                    return Err(e);
                }
                (false, e.to_string())
            }
        };
        if !pass {
            failures.push(format!("{name}: {detail}"));
        }
        rows.push(json!({"check": name, "pass": pass, "detail": detail}));
    }
    let all_pass = failures.is_empty();
    Ok((
        json!({"task": "verify", "checks": rows, "all_pass": all_pass}),
        failures,
    ))
}

fn run_check(ctx: &mut Ctx, name: &'static str) -> Result<CheckResult, CoreError> {
    match name {
        "adapted_j" => check_adapted_j(ctx.model),
        "constant_rank" => check_constant_rank(ctx.model),
        "equivariance" => check_equivariance_zero(ctx.model),
        "generators" => check_generators(ctx),
        "structure_matrix" => check_structure_matrix(ctx),
        "norm_expressibility" => check_norm_expressibility(ctx),
        "stratification" => check_stratification(ctx),
        "local_model" => check_local_model(ctx.model),
        "prop13" => check_prop13(ctx.model),
        "twin_dynamics" => check_twin(ctx),
        "conservation" => check_conservation(ctx),
        "cross_section" => check_cross_section(ctx.model),
        "determinism" => check_determinism(ctx.model),
        other => Err(CoreError::Precondition(format!("unknown check {other}"))),
    }
}

fn xorshift(state: &mut u64) -> f64 {
    *state ^= *state << 13;
    *state ^= *state >> 7;
    *state ^= *state << 17;
    (*state % 2_000_000) as f64 / 1_000_000.0 - 1.0
}

fn check_adapted_j(model: &Model) -> Result<CheckResult, CoreError> {
    let mut seed = model.seed | 1;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 40 {
        let n = 1 + (seed % 10) as usize;
        let dim = 2 * n;
        let a = DMatrix::from_fn(dim, dim, |_, _| xorshift(&mut seed));
        let metric = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.25;
        let s = DMatrix::from_fn(dim, dim, |_, _| xorshift(&mut seed));
        let Ok(space) = SymplecticSpace::from_omega(&s - s.transpose()) else {
            continue;
        };
        let acs = adapted_complex_structure(&space, &metric)?;
        let r = acs.verify(&space);
        worst = worst.max(r.square_residual).max(r.symplectic_residual);
        if r.metric_min_eigenvalue <= 0.0 {
            return Ok(CheckResult {
                pass: false,
                detail: "metric not positive".into(),
            });
        }
        done += 1;
    }
    Ok(CheckResult {
        pass: worst <= 1e-9 * model.tolerance_scale,
        detail: format!("worst relative residual {worst:.3e}"),
    })
}

fn check_constant_rank(model: &Model) -> Result<CheckResult, CoreError> {
    let mut seed = model.seed | 3;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 40 {
        let n = 1 + (seed % 6) as usize;
        let dim = 2 * n;
        let cols = 1 + (seed % dim as u64) as usize;
        let m = DMatrix::from_fn(dim, cols, |_, _| xorshift(&mut seed));
        let Ok(w) = Subspace::new(m) else { continue };
        let space = SymplecticSpace::standard(n);
        let acs = adapted_complex_structure(&space, &DMatrix::identity(dim, dim))?;
        let crd = constant_rank_split(&w, &space, &acs)?;
        let (off, _) = crd.verify(&space);
        worst = worst.max(off);
        done += 1;
    }
    Ok(CheckResult {
        pass: worst <= 1e-9 * model.tolerance_scale,
        detail: format!("worst off-block entry {worst:.3e}"),
    })
}

fn check_equivariance_zero(model: &Model) -> Result<CheckResult, CoreError> {
    let f = momentum_map(&model.spec)?;
    let residuals = check_equivariance(&f, &model.spec);
    let pass = residuals.iter().all(|row| row.iter().all(|r| r.is_zero()));
    Ok(CheckResult {
        pass,
        detail: if pass {
            format!("all {}^2 residual polynomials are zero", f.algebra_dim())
        } else {
            "nonzero residual polynomial (sign convention mismatch)".into()
        },
    })
}

fn check_generators(ctx: &mut Ctx) -> Result<CheckResult, CoreError> {
    let model = ctx.model;
    let h = ctx.hilbert()?.clone();
    h.verify_minimal()?;
    if let GroupSpec::Finite(g) = &model.spec {
        let elements = symred_core::groups::close_group(g)?;
        for d in 1..=8u32 {
            let lhs = subalgebra_dimension(&h, d);
            let rhs = molien_dimension(&elements, d)?;
            if lhs != rhs {
                return Ok(CheckResult {
                    pass: false,
                    detail: format!("degree {d}: subalgebra dim {lhs} != Molien {rhs}"),
                });
            }
        }
    }
    let relations = generator_relations(&h, None)?;
    Ok(CheckResult {
        pass: true,
        detail: format!(
            "{} generators, degrees {:?}, {} relation(s)",
            h.len(),
            h.degrees,
            relations.len()
        ),
    })
}

fn check_structure_matrix(ctx: &mut Ctx) -> Result<CheckResult, CoreError> {
    let h = ctx.hilbert()?.clone();
    let lambda = reduced_structure_matrix(&h)?;
    let f = momentum_map(&ctx.model.spec)?;
    let anti = lambda.is_antisymmetric();
    let subst = lambda
        .substitution_residuals(&h)
        .iter()
        .all(|row| row.iter().all(|r| r.is_zero()));
    let jacobi = lambda
        .jacobi_residuals_substituted(&h)
        .iter()
        .all(|r| r.is_zero());
    let noether = noether_residuals(&h, &f)
        .iter()
        .all(|row| row.iter().all(|r| r.is_zero()));
    let pass = anti && subst && jacobi && noether;
    Ok(CheckResult {
        pass,
        detail: format!(
            "antisymmetric {anti}, substitution {subst}, jacobi {jacobi}, noether {noether}"
        ),
    })
}

fn check_norm_expressibility(ctx: &mut Ctx) -> Result<CheckResult, CoreError> {
    let h = ctx.hilbert()?.clone();
    let f = momentum_map(&ctx.model.spec)?;
    let norm2 = f.norm_squared_poly();
    let expr = express_in_generators(&norm2, &h)?;
    let substituted = expr.substitute(&h.generators);
    let mut pass = substituted == norm2;
    let mut detail = format!(
        "|F|^2 = {}",
        expr.display(&VarSet::Reduced { count: h.len() })
    );
    if ctx.model.builtin_name.as_deref() == Some("circle_1_-1") {
        let y = VarSet::Reduced { count: 4 };
        let frozen = Poly::parse("1/4*y1^2 - 1/2*y1*y2 + 1/4*y2^2", &y).expect("parses");
        if expr != frozen {
            pass = false;
            detail = format!("expected 1/4*(y1 - y2)^2, got {}", expr.display(&y));
        }
    }
    Ok(CheckResult { pass, detail })
}

fn check_stratification(ctx: &mut Ctx) -> Result<CheckResult, CoreError> {
    let model_name = ctx.model.builtin_name.clone();
    let spec = ctx.model.spec.clone();
    let strat = ctx.stratification()?.clone();
    let mismatches = strat.closure_vs_fixed_space_mismatches();
    if !mismatches.is_empty() {
        return Ok(CheckResult {
            pass: false,
            detail: format!("closure order disagrees with fixed-space inclusion: {mismatches:?}"),
        });
    }
    for s in strat.realized() {
        let report = normalizer_reduced_stratum(&spec, &strat, &s.class_id)?;
        if !report.dims_match || !report.orbit_agreement {
            return Ok(CheckResult {
                pass: false,
                detail: format!("normalizer-quotient reduction disagrees at {}", s.class_id),
            });
        }
    }
    if !frontier_diagnostic(&spec, &strat, ctx.model.seed ^ 0xf407)? {
        return Ok(CheckResult {
            pass: false,
            detail: "frontier diagnostic failed".into(),
        });
    }
    let expected: Option<(usize, usize, Vec<usize>)> = match model_name.as_deref() {
        Some("z2_cone") => Some((2, 2, vec![0, 2])),
        Some("circle_1_-1") => Some((2, 2, vec![0, 2])),
        Some("klein_r4") => Some((5, 4, vec![0, 2, 2, 4])),
        _ => None,
    };
    if let Some((classes, realized, dims)) = expected {
        let got_realized: Vec<_> = strat.realized().collect();
        let mut got_dims: Vec<usize> = got_realized.iter().filter_map(|s| s.stratum_dim).collect();
        got_dims.sort_unstable();
        if strat.strata.len() != classes || got_realized.len() != realized || got_dims != dims {
            return Ok(CheckResult {
                pass: false,
                detail: format!(
                    "expected {classes} classes / {realized} realized with dims {dims:?}, \
                     got {} / {} with {:?}",
                    strat.strata.len(),
                    got_realized.len(),
                    got_dims
                ),
            });
        }
    }
    let n_realized = strat.realized().count();
    Ok(CheckResult {
        pass: true,
        detail: format!("{} classes, {} realized", strat.strata.len(), n_realized),
    })
}

fn check_local_model(model: &Model) -> Result<CheckResult, CoreError> {
    let f = momentum_map(&model.spec)?;
    let (points, _) = zero_level_sampler(&f, 10, 1.2, model.seed ^ 0x10ca1);
    let mut checked = 0;
    let mut ambiguous = 0;
    for x in points
        .iter()
        .chain(std::iter::once(&vec![0.0; model.space.dim()]))
    {
        // A sample inside an isotropy guard band cannot be classified;
        // skip it and report, never guess.
        let report = match local_model_match(x, &model.spec, &model.space) {
            Ok(r) => r,
            Err(CoreError::ToleranceAmbiguity { .. }) => {
                ambiguous += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !report.matched {
            return Ok(CheckResult {
                pass: false,
                detail: format!(
                    "mismatch at {x:?}: slice {:?} vs ambient {:?}",
                    report.slice_side, report.ambient_side
                ),
            });
        }
        checked += 1;
    }
    Ok(CheckResult {
        pass: checked > 0,
        detail: format!("{checked} base points matched, {ambiguous} unclassifiable skipped"),
    })
}

fn check_prop13(model: &Model) -> Result<CheckResult, CoreError> {
    let f = momentum_map(&model.spec)?;
    let origin = vec![0.0; model.space.dim()];
    let sm0 = slice_model(&origin, &model.spec, &model.space)?;
    let r0 = abelian_model_level_set(&sm0, &model.spec, 1000, model.seed ^ 0x13)?;
    let (points, _) = zero_level_sampler(&f, 1, 1.0, model.seed ^ 0x14);
    let mut counterexamples = r0.counterexamples;
    let mut solutions = r0.solutions;
    if let Some(x) = points.first() {
        match slice_model(x, &model.spec, &model.space) {
            Ok(sm) => {
                let r = abelian_model_level_set(&sm, &model.spec, 1000, model.seed ^ 0x15)?;
                counterexamples += r.counterexamples;
                solutions += r.solutions;
            }
            // An unclassifiable sampled base point: the origin check stands.
            Err(CoreError::ToleranceAmbiguity { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(CheckResult {
        pass: counterexamples == 0 && solutions > 0,
        detail: format!("{solutions} solutions, {counterexamples} counterexamples"),
    })
}

fn scenario_start(model: &Model) -> Result<Vec<f64>, CoreError> {
    if let Some(v) = &model.scenario_start {
        return Ok(v.clone());
    }
    let f = momentum_map(&model.spec)?;
    let (pts, _) = zero_level_sampler(&f, 1, 1.0, model.seed ^ 0x5c);
    pts.into_iter()
        .next()
        .ok_or_else(|| CoreError::Numerical("no start point found".into()))
}

fn check_twin(ctx: &mut Ctx) -> Result<CheckResult, CoreError> {
    let model = ctx.model;
    let hm = ctx.hilbert()?.clone();
    let lambda = reduced_structure_matrix(&hm)?;
    let h_red = express_in_generators(&model.hamiltonian, &hm)?;
    let f = momentum_map(&model.spec)?;
    let sys = HamiltonianSystem::new(
        model.space.clone(),
        Hamiltonian::Polynomial(model.hamiltonian.clone()),
        model.spec.clone(),
        f,
    )?;
    let start = scenario_start(model)?;
    let report = compare_full_vs_reduced(&sys, &hm, &lambda, &h_red, &start, 5.0, 1e-3)?;
    let pass = report.max_deviation <= 1e-6 * model.tolerance_scale;
    Ok(CheckResult {
        pass,
        detail: format!("max deviation {:.3e}", report.max_deviation),
    })
}

fn check_conservation(ctx: &mut Ctx) -> Result<CheckResult, CoreError> {
    let model = ctx.model;
    let f = momentum_map(&model.spec)?;
    let sys = HamiltonianSystem::new(
        model.space.clone(),
        Hamiltonian::Polynomial(model.hamiltonian.clone()),
        model.spec.clone(),
        f,
    )?;
    let start = scenario_start(model)?;
    let traj = integrate_full(&sys, &start, 10.0, 1e-3, None)?;
    let drift = check_noether(&traj);
    if drift > 1e-8 * model.tolerance_scale {
        return Ok(CheckResult {
            pass: false,
            detail: format!("momentum drift {drift:.3e}"),
        });
    }
    // Fixed-space preservation from a middle stratum when one exists.
    let mut escape = 0.0f64;
    if !matches!(model.spec, GroupSpec::LieAlgebra(_)) {
        let strat = ctx.stratification()?;
        let candidate = strat
            .realized()
            .filter(|s| s.fixed_dim > 0 && s.fixed_dim < model.space.dim())
            .find_map(|s| {
                s.representative
                    .clone()
                    .map(|r| (r, s.fixed_subspace.clone()))
            });
        if let Some((rep, vh)) = candidate {
            let traj = integrate_full(&sys, &rep, 10.0, 1e-3, Some(&vh))?;
            escape = check_stratum_preservation(&traj, &vh);
        }
    } else {
        // Axis plane for the rotation system.
        if model.space.dim() == 6 {
            let mut basis = DMatrix::zeros(6, 2);
            basis[(0, 0)] = 1.0;
            basis[(3, 1)] = 1.0;
            let vh = Subspace::new(basis)?;
            let traj =
                integrate_full(&sys, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0], 10.0, 1e-3, Some(&vh))?;
            escape = check_stratum_preservation(&traj, &vh);
        }
    }
    let pass = escape <= 1e-8 * model.tolerance_scale;
    Ok(CheckResult {
        pass,
        detail: format!("momentum drift {drift:.3e}, fixed-space escape {escape:.3e}"),
    })
}

fn check_cross_section(model: &Model) -> Result<CheckResult, CoreError> {
    let f = momentum_map(&model.spec)?;
    let sys = HamiltonianSystem::new(
        model.space.clone(),
        Hamiltonian::Polynomial(model.hamiltonian.clone()),
        model.spec.clone(),
        f,
    )?;
    let start = model
        .scenario_start
        .clone()
        .ok_or_else(|| CoreError::Precondition("cross-section needs a scenario start".into()))?;
    let report = cross_section_scenario(&sys, (1.0, 2.0), &start, 20.0, 1e-3)?;
    let expect = std::f64::consts::PI * std::f64::consts::SQRT_2;
    let period_ok = (report.period_estimate - expect).abs() / expect <= 1e-5;
    let pass = report.out_of_plane <= 1e-9 * model.tolerance_scale
        && report.off_axis_momentum <= 1e-9 * model.tolerance_scale
        && report.momentum_magnitude_drift <= 1e-8 * model.tolerance_scale
        && period_ok;
    Ok(CheckResult {
        pass,
        detail: format!(
            "out-of-plane {:.3e}, |L| drift {:.3e}, period {:.8}",
            report.out_of_plane, report.momentum_magnitude_drift, report.period_estimate
        ),
    })
}

/// Serialize the deterministic artifacts twice and compare bytes.
fn check_determinism(model: &Model) -> Result<CheckResult, CoreError> {
    let render = || -> Result<String, CoreError> {
        let h = hilbert_for(model)?;
        let phase = VarSet::Phase {
            pairs: model.spec.n_pairs(),
        };
        let mut pieces = poly_texts(&h.generators, &phase).join(";");
        if !matches!(model.spec, GroupSpec::LieAlgebra(_)) {
            let f = momentum_map(&model.spec)?;
            let strat = enumerate_strata(&model.spec, &f)?;
            for s in &strat.strata {
                pieces.push_str(&format!("|{}:{:?}", s.class_id.0, s.stratum_dim));
            }
            let (pts, _) = zero_level_sampler(&f, 5, 1.0, model.seed);
            for p in pts {
                pieces.push_str(&format!("|{p:?}"));
            }
        }
        Ok(pieces)
    };
    let a = render()?;
    let b = render()?;
    Ok(CheckResult {
        pass: a == b,
        detail: if a == b {
            "identical artifacts across two runs".into()
        } else {
            "artifacts differ".into()
        },
    })
}
