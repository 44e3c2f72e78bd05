//! Hamiltonian flows on the full phase space and on the image of the
//! Hilbert map, with the conservation, stratum-preservation, and
//! trajectory-agreement checks that tie the two together.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::groups::{close_group, GroupSpec, MomentumMap};
use crate::invariants::{poisson_bracket, HilbertMap, PoissonStructure};
use crate::poly::{CompiledPoly, Poly};
use crate::symplectic::{Subspace, SymplecticSpace};

/// Per-step defect threshold; a step whose Richardson defect exceeds this
/// is retried with halved internal steps (up to ten halvings).
pub const STEP_DEFECT_TOL: f64 = 1e-6;

/// A Hamiltonian: an exact invariant polynomial, or a black-box smooth
/// function (full space only). Black boxes without a gradient use central
/// differences.
pub enum Hamiltonian {
    Polynomial(Poly),
    BlackBox {
        f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        grad: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    },
}

impl Hamiltonian {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Hamiltonian::Polynomial(p) => p.eval_f64(v),
            Hamiltonian::BlackBox { f, .. } => f(v),
        }
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Hamiltonian::Polynomial(p) => p.gradient().iter().map(|g| g.eval_f64(v)).collect(),
            Hamiltonian::BlackBox { f, grad } => match grad {
                Some(g) => g(v),
                None => central_gradient(f, v),
            },
        }
    }
}

fn central_gradient(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), v: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::with_capacity(v.len());
    let mut w = v.to_vec();
    for i in 0..v.len() {
        w[i] = v[i] + h;
        let fp = f(&w);
        w[i] = v[i] - h;
        let fm = f(&w);
        w[i] = v[i];
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// An invariant Hamiltonian on a symplectic representation.
pub struct HamiltonianSystem {
    pub space: SymplecticSpace,
    pub hamiltonian: Hamiltonian,
    pub spec: GroupSpec,
    pub momentum: MomentumMap,
}

impl HamiltonianSystem {
    /// Build and verify invariance: exact brackets `{h, F_a} = 0` (and
    /// generator fixedness for finite groups) for polynomials, sampled
    /// invariance for black boxes.
    pub fn new(
        space: SymplecticSpace,
        hamiltonian: Hamiltonian,
        spec: GroupSpec,
        momentum: MomentumMap,
    ) -> Result<Self> {
        match &hamiltonian {
            Hamiltonian::Polynomial(h) => {
                for fa in &momentum.components {
                    if !poisson_bracket(h, fa).is_zero() {
                        return Err(Error::NotInvariant(
                            "polynomial Hamiltonian does not commute with the momentum map".into(),
                        ));
                    }
                }
                if let GroupSpec::Finite(g) = &spec {
                    for gen in &g.generators {
                        if h.compose_linear(gen) != *h {
                            return Err(Error::NotInvariant(
                                "polynomial Hamiltonian is not fixed by the finite group".into(),
                            ));
                        }
                    }
                }
            }
            Hamiltonian::BlackBox { f, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(97);
                let dim = space.dim();
                for _ in 0..100 {
                    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let g = random_group_element(&spec, &mut rng)?;
                    let gv_vec = &g * DVector::from_column_slice(&v);
                    let gv: Vec<f64> = gv_vec.iter().cloned().collect();
                    if (f(&gv) - f(&v)).abs() > 1e-10 {
                        return Err(Error::NotInvariant(
                            "black-box Hamiltonian fails sampled invariance".into(),
                        ));
                    }
                }
            }
        }
        Ok(HamiltonianSystem {
            space,
            hamiltonian,
            spec,
            momentum,
        })
    }

    fn field(&self, v: &[f64]) -> Vec<f64> {
        let grad = DVector::from_vec(self.hamiltonian.gradient(v));
        self.space
            .hamiltonian_field(&grad)
            .iter()
            .cloned()
            .collect()
    }
}

fn random_group_element(spec: &GroupSpec, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    match spec {
        GroupSpec::Finite(g) => {
            let elements = close_group(g)?;
            let i = rng.gen_range(0..elements.len());
            Ok(elements[i].to_f64())
        }
        _ => {
            let gens = spec.generators_exact();
            let dim = spec.space_dim();
            let mut a = DMatrix::zeros(dim, dim);
            for g in &gens {
                a += g.to_f64() * rng.gen_range(-2.0..2.0);
            }
            Ok(matrix_exp(&a))
        }
    }
}

/// Scaling-and-squaring Taylor exponential for small dense matrices.
pub fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let s = norm.log2().ceil().max(0.0) as u32 + 1;
    let scaled = a / 2f64.powi(s as i32);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for k in 1..24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

/// A fixed-grid trajectory with aligned diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub momentum_values: Vec<Vec<f64>>,
    pub stratum_distance: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energy_drift(&self) -> f64 {
        let h0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }
}

fn rk4_step(field: &dyn Fn(&[f64]) -> Vec<f64>, v: &[f64], dt: f64) -> Vec<f64> {
    let k1 = field(v);
    let vk =
        |k: &[f64], c: f64| -> Vec<f64> { v.iter().zip(k).map(|(x, dx)| x + c * dx).collect() };
    let k2 = field(&vk(&k1, dt / 2.0));
    let k3 = field(&vk(&k2, dt / 2.0));
    let k4 = field(&vk(&k3, dt));
    v.iter()
        .enumerate()
        .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One output step with defect control: the Richardson comparison between a
/// full step and two half steps must stay under `STEP_DEFECT_TOL`, else the
/// internal step is halved (at most ten times).
fn controlled_step(field: &dyn Fn(&[f64]) -> Vec<f64>, v: &[f64], dt: f64) -> Result<Vec<f64>> {
    let mut substeps = 1usize;
    for _ in 0..=10 {
        let h = dt / substeps as f64;
        let mut coarse = v.to_vec();
        for _ in 0..substeps {
            coarse = rk4_step(field, &coarse, h);
        }
        let mut fine = v.to_vec();
        for _ in 0..2 * substeps {
            fine = rk4_step(field, &fine, h / 2.0);
        }
        let defect = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if defect <= STEP_DEFECT_TOL {
            return Ok(fine);
        }
        substeps *= 2;
    }
    Err(Error::Numerical(format!(
        "step defect stayed above {STEP_DEFECT_TOL} after ten halvings"
    )))
}

fn integrate(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    v0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if !(dt > 0.0) || t_final < dt {
        return Err(Error::Precondition("need dt > 0 and T >= dt".into()));
    }
    let steps = (t_final / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut v = v0.to_vec();
    times.push(0.0);
    states.push(v.clone());
    for s in 1..=steps {
        v = controlled_step(field, &v, dt)?;
        times.push(s as f64 * dt);
        states.push(v.clone());
    }
    Ok((times, states))
}

/// Integrate the full-space flow `v' = X_h(v)` on a uniform grid.
pub fn integrate_full(
    sys: &HamiltonianSystem,
    v0: &[f64],
    t_final: f64,
    dt: f64,
    fixed_space: Option<&Subspace>,
) -> Result<Trajectory> {
    let field = |v: &[f64]| sys.field(v);
    let (times, states) = integrate(&field, v0, t_final, dt)?;
    let energy = states.iter().map(|v| sys.hamiltonian.eval(v)).collect();
    let compiled: Vec<CompiledPoly> = sys
        .momentum
        .components
        .iter()
        .map(|c| c.compile())
        .collect();
    let momentum_values = states
        .iter()
        .map(|v| compiled.iter().map(|c| c.eval(v)).collect())
        .collect();
    let stratum_distance = fixed_space.map(|sub| {
        states
            .iter()
            .map(|v| sub.distance(&DVector::from_column_slice(v)))
            .collect()
    });
    Ok(Trajectory {
        times,
        states,
        energy,
        momentum_values,
        stratum_distance,
    })
}

/// Integrate the reduced equations `y_i' = sum_j Lambda_ij(y) dh/dy_j`.
pub fn integrate_reduced(
    lambda: &PoissonStructure,
    h_red: &Poly,
    y0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let m = lambda.len();
    if h_red.nvars != m || y0.len() != m {
        return Err(Error::Dimension(
            "reduced Hamiltonian/initial point dimension".into(),
        ));
    }
    let lam: Vec<Vec<CompiledPoly>> = lambda
        .matrix
        .iter()
        .map(|row| row.iter().map(|p| p.compile()).collect())
        .collect();
    let dh: Vec<CompiledPoly> = h_red.gradient().iter().map(|g| g.compile()).collect();
    let field = move |y: &[f64]| -> Vec<f64> {
        let grads: Vec<f64> = dh.iter().map(|g| g.eval(y)).collect();
        (0..m)
            .map(|i| (0..m).map(|j| lam[i][j].eval(y) * grads[j]).sum())
            .collect()
    };
    let (times, states) = integrate(&field, y0, t_final, dt)?;
    let energy = states.iter().map(|y| h_red.eval_f64(y)).collect();
    Ok(Trajectory {
        times,
        states,
        energy,
        momentum_values: Vec::new(),
        stratum_distance: None,
    })
}

/// Max momentum drift along a trajectory.
pub fn check_noether(traj: &Trajectory) -> f64 {
    let Some(first) = traj.momentum_values.first() else {
        return 0.0;
    };
    traj.momentum_values
        .iter()
        .flat_map(|row| row.iter().zip(first).map(|(v, v0)| (v - v0).abs()))
        .fold(0.0, f64::max)
}

/// Max distance from the fixed subspace along a trajectory started on it.
pub fn check_stratum_preservation(traj: &Trajectory, fixed: &Subspace) -> f64 {
    traj.states
        .iter()
        .map(|v| fixed.distance(&DVector::from_column_slice(v)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct TwinReport {
    pub max_deviation: f64,
    pub full_energy_drift: f64,
    pub reduced_energy_drift: f64,
}

/// Twin experiment: push the full trajectory through the Hilbert map and
/// compare with the reduced integration from `y0 = p(v0)`.
pub fn compare_full_vs_reduced(
    sys: &HamiltonianSystem,
    hilbert: &HilbertMap,
    lambda: &PoissonStructure,
    h_red: &Poly,
    v0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<TwinReport> {
    let full = integrate_full(sys, v0, t_final, dt, None)?;
    let y0 = hilbert.eval_f64(v0);
    let red = integrate_reduced(lambda, h_red, &y0, t_final, dt)?;
    let compiled: Vec<CompiledPoly> = hilbert.generators.iter().map(|p| p.compile()).collect();
    let mut max_dev = 0.0f64;
    for (v, y) in full.states.iter().zip(&red.states) {
        let pv: Vec<f64> = compiled.iter().map(|c| c.eval(v)).collect();
        let dev = pv
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_dev = max_dev.max(dev);
    }
    Ok(TwinReport {
        max_deviation: max_dev,
        full_energy_drift: full.energy_drift(),
        reduced_energy_drift: red.energy_drift(),
    })
}

/// Finite-difference check of the reduced equations along the pushed
/// trajectory: `d/dt p_i(gamma)` vs `sum_j Lambda_ij(p(gamma)) dh/dy_j`.
pub fn reduced_equation_residual(
    hilbert: &HilbertMap,
    lambda: &PoissonStructure,
    h_red: &Poly,
    traj: &Trajectory,
) -> f64 {
    let compiled: Vec<CompiledPoly> = hilbert.generators.iter().map(|p| p.compile()).collect();
    let lam: Vec<Vec<CompiledPoly>> = lambda
        .matrix
        .iter()
        .map(|row| row.iter().map(|p| p.compile()).collect())
        .collect();
    let dh: Vec<CompiledPoly> = h_red.gradient().iter().map(|g| g.compile()).collect();
    let m = compiled.len();
    let mut max_res = 0.0f64;
    let ys: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|v| compiled.iter().map(|c| c.eval(v)).collect())
        .collect();
    for t in 1..ys.len().saturating_sub(1) {
        let dt = traj.times[t + 1] - traj.times[t];
        let grads: Vec<f64> = dh.iter().map(|g| g.eval(&ys[t])).collect();
        for i in 0..m {
            let fd = (ys[t + 1][i] - ys[t - 1][i]) / (2.0 * dt);
            let rhs: f64 = (0..m).map(|j| lam[i][j].eval(&ys[t]) * grads[j]).sum();
            max_res = max_res.max((fd - rhs).abs());
        }
    }
    max_res
}

/// Forward-then-backward integration returns to the start within the
/// accumulated scheme error.
pub fn forward_backward_residual(
    sys: &HamiltonianSystem,
    v0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    let fwd = integrate_full(sys, v0, t_final, dt, None)?;
    let end = fwd.states.last().expect("nonempty").clone();
    let back_field = |v: &[f64]| -> Vec<f64> { sys.field(v).iter().map(|x| -x).collect() };
    let (_, back_states) = integrate(&back_field, &end, t_final, dt)?;
    let returned = back_states.last().expect("nonempty");
    Ok(v0
        .iter()
        .zip(returned)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Separation of points by the Hilbert map, checked exhaustively for finite
/// groups: `p(v) = p(w)` iff `v` and `w` lie on one group orbit.
pub fn separation_check(hilbert: &HilbertMap, seed: u64, trials: usize) -> Result<bool> {
    let GroupSpec::Finite(g) = &hilbert.spec else {
        return Err(Error::Precondition(
            "exhaustive separation check needs a finite group".into(),
        ));
    };
    let elements = close_group(g)?;
    let dim = 2 * g.n_pairs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pv = hilbert.eval_f64(&v);
        // Same orbit: equal images.
        for e in &elements {
            let w: Vec<f64> = (e.to_f64() * DVector::from_column_slice(&v))
                .iter()
                .cloned()
                .collect();
            let pw = hilbert.eval_f64(&w);
            if pv.iter().zip(&pw).any(|(a, b)| (a - b).abs() > 1e-9) {
                return Ok(false);
            }
        }
        // Off-orbit perturbation: images must differ.
        let w: Vec<f64> = v.iter().map(|x| x + rng.gen_range(0.05..0.2)).collect();
        let on_orbit = elements.iter().any(|e| {
            let ev = e.to_f64() * DVector::from_column_slice(&v);
            ev.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-12)
        });
        if !on_orbit {
            let pw = hilbert.eval_f64(&w);
            if pv.iter().zip(&pw).all(|(a, b)| (a - b).abs() <= 1e-12) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// The central-force cross-section scenario.

#[derive(Debug, Clone)]
pub struct CrossSectionReport {
    /// Max |L_1|, |L_2| along the flow (angular momentum stays on the axis).
    pub off_axis_momentum: f64,
    /// Max | |L|(t) - |L|(0) |.
    pub momentum_magnitude_drift: f64,
    /// Max |q_3|, |p_3| along the flow (motion stays in the plane).
    pub out_of_plane: f64,
    /// Estimated rotation period from the unwrapped planar angle.
    pub period_estimate: f64,
    pub energy_drift: f64,
}

/// Central-force flow restricted to the symplectic cross-section
/// `F^{-1}(B)` over an axis interval: the initial angular momentum must be
/// `(0, 0, l)` with `l` inside the open interval.
pub fn cross_section_scenario(
    sys: &HamiltonianSystem,
    b_interval: (f64, f64),
    v0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<CrossSectionReport> {
    if sys.space.dim() != 6 || sys.momentum.components.len() != 3 {
        return Err(Error::Precondition(
            "cross-section scenario needs the so(3) system".into(),
        ));
    }
    let l0 = sys.momentum.eval_f64(v0);
    if l0[0].abs() > 1e-12 || l0[1].abs() > 1e-12 {
        return Err(Error::Precondition(
            "initial angular momentum must point along e3".into(),
        ));
    }
    let (lo, hi) = b_interval;
    if !(l0[2] > lo && l0[2] < hi) {
        return Err(Error::Precondition(format!(
            "initial |L| = {} outside the open interval ({lo}, {hi})",
            l0[2]
        )));
    }
    let traj = integrate_full(sys, v0, t_final, dt, None)?;
    let mut off_axis: f64 = 0.0;
    let mut mag_drift: f64 = 0.0;
    let mut out_of_plane: f64 = 0.0;
    let mag0 = l0[2].abs();
    let mut angle_total = 0.0f64;
    let mut prev_angle = (v0[1]).atan2(v0[0]);
    for (v, l) in traj.states.iter().zip(&traj.momentum_values) {
        off_axis = off_axis.max(l[0].abs()).max(l[1].abs());
        let mag = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        mag_drift = mag_drift.max((mag - mag0).abs());
        out_of_plane = out_of_plane.max(v[2].abs()).max(v[5].abs());
        let angle = v[1].atan2(v[0]);
        let mut delta = angle - prev_angle;
        while delta > std::f64::consts::PI {
            delta -= 2.0 * std::f64::consts::PI;
        }
        while delta < -std::f64::consts::PI {
            delta += 2.0 * std::f64::consts::PI;
        }
        angle_total += delta;
        prev_angle = angle;
    }
    let period_estimate = if angle_total.abs() > 1e-6 {
        2.0 * std::f64::consts::PI * t_final / angle_total.abs()
    } else {
        f64::INFINITY
    };
    Ok(CrossSectionReport {
        off_axis_momentum: off_axis,
        momentum_magnitude_drift: mag_drift,
        out_of_plane,
        period_estimate,
        energy_drift: traj.energy_drift(),
    })
}

// ---------------------------------------------------------------------------
// CSV export.

/// Write a full-space trajectory as CSV:
/// `t, x1..x2n, h, F1..Fk, stratum_dist`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let dim = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let k = traj.momentum_values.first().map(|m| m.len()).unwrap_or(0);
    out.push('t');
    for i in 1..=dim {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",h");
    for a in 1..=k {
        out.push_str(&format!(",F{a}"));
    }
    if traj.stratum_distance.is_some() {
        out.push_str(",stratum_dist");
    }
    out.push('\n');
    for i in 0..traj.len() {
        out.push_str(&format!("{}", traj.times[i]));
        for x in &traj.states[i] {
            out.push_str(&format!(",{x}"));
        }
        out.push_str(&format!(",{}", traj.energy[i]));
        if k > 0 {
            for f in &traj.momentum_values[i] {
                out.push_str(&format!(",{f}"));
            }
        }
        if let Some(sd) = &traj.stratum_distance {
            out.push_str(&format!(",{}", sd[i]));
        }
        out.push('\n');
    }
    out
}

/// Write a reduced trajectory as CSV: `t, y1..ym, h`.
pub fn reduced_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let m = traj.states.first().map(|s| s.len()).unwrap_or(0);
    out.push('t');
    for i in 1..=m {
        out.push_str(&format!(",y{i}"));
    }
    out.push_str(",h\n");
    for i in 0..traj.len() {
        out.push_str(&format!("{}", traj.times[i]));
        for x in &traj.states[i] {
            out.push_str(&format!(",{x}"));
        }
        out.push_str(&format!(",{}\n", traj.energy[i]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::RatMat;
    use crate::groups::{momentum_map, FiniteGroup, TorusAction, DEFAULT_ORDER_BOUND};
    use crate::invariants::{
        express_in_generators, invariant_generators, reduced_structure_matrix,
    };
    use crate::poly::VarSet;

    fn z2_spec() -> GroupSpec {
        GroupSpec::Finite(FiniteGroup {
            generators: vec![RatMat::identity(2).neg()],
            n_pairs: 1,
            order_bound: DEFAULT_ORDER_BOUND,
        })
    }

    fn so3_system(h_text: &str) -> HamiltonianSystem {
        let spec = GroupSpec::LieAlgebra(crate::builtins::so3_algebra());
        let space = SymplecticSpace::standard(3);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 3 };
        let h = Poly::parse(h_text, &vars).unwrap();
        HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap()
    }

    #[test]
    fn harmonic_oscillator_period() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("1/2*q1^2 + 1/2*p1^2", &vars).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let traj = integrate_full(&sys, &[1.0, 0.0], 7.0, 1e-3, None).unwrap();
        // Unwrap the phase angle; period = 2 pi T / total angle.
        let mut total = 0.0f64;
        let mut prev = 0.0f64;
        for v in &traj.states {
            let a = v[1].atan2(v[0]);
            let mut d = a - prev;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d;
            prev = a;
        }
        let period = 2.0 * std::f64::consts::PI * 7.0 / total.abs();
        assert!(
            (period - 2.0 * std::f64::consts::PI).abs() < 1e-6,
            "period {period}"
        );
        assert!(traj.energy_drift() < 1e-10);
    }

    #[test]
    fn constant_hamiltonian_is_stationary() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let h = Poly::constant(2, crate::exact::rat(3));
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let traj = integrate_full(&sys, &[0.4, -0.2], 1.0, 1e-2, None).unwrap();
        for v in &traj.states {
            assert!((v[0] - 0.4).abs() < 1e-15 && (v[1] + 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn central_force_conserves_angular_momentum() {
        let sys = so3_system("1/2*p1^2 + 1/2*p2^2 + 1/2*p3^2 + q1^2 + q2^2 + q3^2");
        let v0 = [1.0, 0.0, 0.2, 0.0, 1.1, -0.3];
        let traj = integrate_full(&sys, &v0, 10.0, 1e-3, None).unwrap();
        assert!(
            check_noether(&traj) <= 1e-8,
            "drift {}",
            check_noether(&traj)
        );
    }

    #[test]
    fn energy_and_momentum_drift_scale_at_fourth_order() {
        // drift(dt) ~ C dt^4 for a nonlinear invariant flow: halving dt
        // cuts both drifts by roughly 16 and the estimated constant is
        // stable. (A purely linear flow contracts energy one order faster,
        // so the quartic potential matters here.)
        let sys = so3_system(
            "1/2*p1^2 + 1/2*p2^2 + 1/2*p3^2 + q1^4 + q2^4 + q3^4 \
             + 2*q1^2*q2^2 + 2*q1^2*q3^2 + 2*q2^2*q3^2",
        );
        let v0 = [1.0, 0.3, 0.0, 0.0, 1.1, -0.2];
        let run = |dt: f64| {
            let traj = integrate_full(&sys, &v0, 5.0, dt, None).unwrap();
            (traj.energy_drift(), check_noether(&traj))
        };
        let (e1, m1) = run(0.02);
        let (e2, m2) = run(0.01);
        let e_ratio = e1 / e2;
        let m_ratio = m1 / m2;
        assert!((12.0..=20.0).contains(&e_ratio), "energy ratio {e_ratio}");
        // Momentum errors oscillate rather than accumulate here, so the
        // contraction is at least 16x (the dt^4 bound holds with room).
        assert!(m_ratio >= 12.0, "momentum ratio {m_ratio}");
        let c1 = e1 / 0.02f64.powi(4);
        let c2 = e2 / 0.01f64.powi(4);
        assert!(
            (c1 / c2 - 1.0).abs() < 0.3,
            "drift constant unstable: {c1:.3e} vs {c2:.3e}"
        );
    }

    #[test]
    fn noether_vacuous_for_finite_group() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("q1^2 + p1^2", &vars).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let traj = integrate_full(&sys, &[0.5, 0.5], 1.0, 1e-2, None).unwrap();
        assert_eq!(check_noether(&traj), 0.0);
    }

    #[test]
    fn origin_is_stationary_for_invariant_quadratic() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("q1^2 + p1^2 + q1^2*p1^2", &vars).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let traj = integrate_full(&sys, &[0.0, 0.0], 2.0, 1e-2, None).unwrap();
        for v in &traj.states {
            assert_eq!(v, &vec![0.0, 0.0]);
        }
    }

    #[test]
    fn klein_fixed_plane_preserved() {
        let a =
            RatMat::from_i64_rows(&[&[-1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, -1, 0], &[0, 0, 0, 1]]);
        let b =
            RatMat::from_i64_rows(&[&[1, 0, 0, 0], &[0, -1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, -1]]);
        let spec = GroupSpec::Finite(FiniteGroup {
            generators: vec![a, b],
            n_pairs: 2,
            order_bound: DEFAULT_ORDER_BOUND,
        });
        let space = SymplecticSpace::standard(2);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 2 };
        // Generic invariant quartic-plus-quadratic.
        let h = Poly::parse("q1^2*q2^2 + p1^2*p2^2 + q1*p1 + q2^2 + 1/2*p2^2", &vars).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        // V^<a> = the (q2, p2) plane.
        let mut basis = DMatrix::zeros(4, 2);
        basis[(1, 0)] = 1.0;
        basis[(3, 1)] = 1.0;
        let vh = Subspace::new(basis).unwrap();
        let v0 = [0.0, 0.8, 0.0, -0.5];
        let traj = integrate_full(&sys, &v0, 10.0, 1e-3, Some(&vh)).unwrap();
        let escape = check_stratum_preservation(&traj, &vh);
        assert!(escape <= 1e-9, "escape {escape}");
    }

    #[test]
    fn twin_experiment_z2_cone() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let hilbert = invariant_generators(&spec, None).unwrap();
        let lambda = reduced_structure_matrix(&hilbert).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("q1^2 + p1^2", &vars).unwrap();
        let h_red = express_in_generators(&h, &hilbert).unwrap();
        let yvars = VarSet::Reduced { count: 3 };
        assert_eq!(h_red, Poly::parse("y1 + y3", &yvars).unwrap());
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let report =
            compare_full_vs_reduced(&sys, &hilbert, &lambda, &h_red, &[1.0, 0.0], 5.0, 1e-3)
                .unwrap();
        assert!(
            report.max_deviation <= 1e-7,
            "deviation {}",
            report.max_deviation
        );
    }

    #[test]
    fn twin_order_ratio_is_fourth_order() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let hilbert = invariant_generators(&spec, None).unwrap();
        let lambda = reduced_structure_matrix(&hilbert).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("q1^2 + p1^2", &vars).unwrap();
        let h_red = express_in_generators(&h, &hilbert).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let dev = |dt: f64| {
            compare_full_vs_reduced(&sys, &hilbert, &lambda, &h_red, &[1.0, 0.0], 5.0, dt)
                .unwrap()
                .max_deviation
        };
        let ratio = dev(0.02) / dev(0.01);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn circle_reduced_flow_is_linear_for_y3() {
        // h = Re(z1 z2) = q1 q2 - p1 p2 = y3 on the circle quotient; the
        // reduced equations are linear in y and must track the full flow.
        let spec = GroupSpec::Torus(TorusAction::new(vec![vec![1, -1]], 2));
        let space = SymplecticSpace::standard(2);
        let f = momentum_map(&spec).unwrap();
        let hilbert = invariant_generators(&spec, None).unwrap();
        let lambda = reduced_structure_matrix(&hilbert).unwrap();
        let vars = VarSet::Phase { pairs: 2 };
        let h = Poly::parse("q1*q2 - p1*p2", &vars).unwrap();
        let h_red = express_in_generators(&h, &hilbert).unwrap();
        let yvars = VarSet::Reduced { count: 4 };
        assert_eq!(h_red, Poly::parse("y3", &yvars).unwrap());
        // The right-hand sides are linear polynomials in y.
        for i in 0..4 {
            assert!(lambda.matrix[i][2].degree() <= 1);
        }
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let v0 = [0.9, 0.4, -0.2, 0.7];
        let report =
            compare_full_vs_reduced(&sys, &hilbert, &lambda, &h_red, &v0, 4.0, 1e-3).unwrap();
        assert!(
            report.max_deviation <= 1e-7,
            "deviation {}",
            report.max_deviation
        );
        // Constant reduced Hamiltonian: stationary trajectory.
        let c = Poly::constant(4, crate::exact::rat(5));
        let y0 = hilbert.eval_f64(&v0);
        let traj = integrate_reduced(&lambda, &c, &y0, 1.0, 1e-2).unwrap();
        for y in &traj.states {
            for (a, b) in y.iter().zip(&y0) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn reduced_equation_residual_small() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let hilbert = invariant_generators(&spec, None).unwrap();
        let lambda = reduced_structure_matrix(&hilbert).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("q1^2 + p1^2", &vars).unwrap();
        let h_red = express_in_generators(&h, &hilbert).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let traj = integrate_full(&sys, &[1.0, 0.0], 2.0, 1e-3, None).unwrap();
        let res = reduced_equation_residual(&hilbert, &lambda, &h_red, &traj);
        assert!(res <= 1e-5, "residual {res}");
    }

    #[test]
    fn forward_backward_recovers_start() {
        let sys = so3_system("1/2*p1^2 + 1/2*p2^2 + 1/2*p3^2 + q1^2 + q2^2 + q3^2");
        let v0 = [1.0, 0.0, 0.0, 0.0, 1.2, 0.0];
        let res = forward_backward_residual(&sys, &v0, 3.0, 1e-3).unwrap();
        assert!(res <= 1e-9, "forward-backward residual {res}");
    }

    #[test]
    fn separation_of_points_finite() {
        let hilbert = invariant_generators(&z2_spec(), None).unwrap();
        assert!(separation_check(&hilbert, 5, 20).unwrap());
    }

    #[test]
    fn cross_section_circular_orbit() {
        let sys = so3_system("1/2*p1^2 + 1/2*p2^2 + 1/2*p3^2 + q1^2 + q2^2 + q3^2");
        // Circular orbit: q = (1,0,0), p = (0, sqrt 2, 0); q'' = -2q so the
        // angular rate is sqrt 2 and the period is pi sqrt 2.
        let v0 = [1.0, 0.0, 0.0, 0.0, std::f64::consts::SQRT_2, 0.0];
        let report = cross_section_scenario(&sys, (1.0, 2.0), &v0, 20.0, 1e-3).unwrap();
        assert!(report.off_axis_momentum <= 1e-9);
        assert!(report.momentum_magnitude_drift <= 1e-8);
        assert!(report.out_of_plane <= 1e-9);
        let expect = std::f64::consts::PI * std::f64::consts::SQRT_2;
        assert!(
            (report.period_estimate - expect).abs() / expect <= 1e-5,
            "period {} vs {expect}",
            report.period_estimate
        );
    }

    #[test]
    fn cross_section_guards_initial_data() {
        let sys = so3_system("1/2*p1^2 + 1/2*p2^2 + 1/2*p3^2 + q1^2 + q2^2 + q3^2");
        // |L| = sqrt 2 outside (2, 3): precondition error.
        let v0 = [1.0, 0.0, 0.0, 0.0, std::f64::consts::SQRT_2, 0.0];
        assert!(cross_section_scenario(&sys, (2.0, 3.0), &v0, 1.0, 1e-2).is_err());
        // L not along e3.
        let v1 = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert!(cross_section_scenario(&sys, (0.5, 2.0), &v1, 1.0, 1e-2).is_err());
    }

    #[test]
    fn black_box_matches_polynomial() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let bb = Hamiltonian::BlackBox {
            f: Box::new(|v: &[f64]| v[0] * v[0] + v[1] * v[1]),
            grad: Some(Box::new(|v: &[f64]| vec![2.0 * v[0], 2.0 * v[1]])),
        };
        let sys = HamiltonianSystem::new(space, bb, spec, f).unwrap();
        let traj = integrate_full(&sys, &[1.0, 0.0], 1.0, 1e-3, None).unwrap();
        // Against the closed-form double-speed rotation.
        let end = traj.states.last().unwrap();
        let expect = [(2.0f64).cos(), -(2.0f64).sin()];
        assert!((end[0] - expect[0]).abs() < 1e-9);
        assert!((end[1] - expect[1]).abs() < 1e-9);
    }

    #[test]
    fn non_invariant_polynomial_rejected() {
        let spec = GroupSpec::Torus(TorusAction::new(vec![vec![1, -1]], 2));
        let space = SymplecticSpace::standard(2);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 2 };
        let h = Poly::parse("q1", &vars).unwrap();
        assert!(HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).is_err());
    }

    #[test]
    fn csv_headers() {
        let spec = z2_spec();
        let space = SymplecticSpace::standard(1);
        let f = momentum_map(&spec).unwrap();
        let vars = VarSet::Phase { pairs: 1 };
        let h = Poly::parse("q1^2 + p1^2", &vars).unwrap();
        let sys = HamiltonianSystem::new(space, Hamiltonian::Polynomial(h), spec, f).unwrap();
        let vh = Subspace::full(2);
        let traj = integrate_full(&sys, &[1.0, 0.0], 0.01, 1e-2, Some(&vh)).unwrap();
        let csv = trajectory_csv(&traj);
        assert!(csv.starts_with("t,x1,x2,h,stratum_dist\n"));
        let red = reduced_trajectory_csv(&traj);
        assert!(red.starts_with("t,y1,y2,h\n"));
    }
}
