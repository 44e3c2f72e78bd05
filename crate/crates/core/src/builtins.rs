//! The four bundled example systems, used by the verification suites and
//! exposed through the command-line tool.

use crate::error::{Error, Result};
use crate::exact::{rat, RatMat};
use crate::groups::{FiniteGroup, GroupSpec, MatrixLieAlgebra, TorusAction, DEFAULT_ORDER_BOUND};
use crate::invariants::HilbertMap;
use crate::poly::{Poly, VarSet};
use crate::symplectic::SymplecticSpace;

/// A packaged example: space, group action, invariant Hamiltonian, and a
/// scenario start point for the dynamics checks.
pub struct Builtin {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: GroupSpec,
    /// Invariant Hamiltonian in the canonical text form.
    pub hamiltonian_text: &'static str,
    /// Start point for the bundled dynamics scenario.
    pub scenario_start: Vec<f64>,
}

impl Builtin {
    pub fn space(&self) -> SymplecticSpace {
        SymplecticSpace::standard(self.spec.n_pairs())
    }

    pub fn hamiltonian(&self) -> Poly {
        let vars = VarSet::Phase {
            pairs: self.spec.n_pairs(),
        };
        Poly::parse(self.hamiltonian_text, &vars).expect("builtin Hamiltonian parses")
    }

    /// The Hilbert map: computed by the generator sweep where available,
    /// declared from the classical generating set for the rotation algebra.
    pub fn hilbert_map(&self) -> Result<HilbertMap> {
        match &self.spec {
            GroupSpec::LieAlgebra(_) => {
                let vars = VarSet::Phase { pairs: 3 };
                let gens = vec![
                    Poly::parse("q1^2 + q2^2 + q3^2", &vars).expect("poly"),
                    Poly::parse("q1*p1 + q2*p2 + q3*p3", &vars).expect("poly"),
                    Poly::parse("p1^2 + p2^2 + p3^2", &vars).expect("poly"),
                ];
                HilbertMap::declare(self.spec.clone(), gens, 2)
            }
            _ => crate::invariants::invariant_generators(&self.spec, None),
        }
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["z2_cone", "circle_1_-1", "klein_r4", "so3_central_force"];

pub fn builtin(name: &str) -> Result<Builtin> {
    match name {
        "z2_cone" => Ok(Builtin {
            name: "z2_cone",
            description: "Antipodal Z2 action on the plane; the reduced space is a cone",
            spec: GroupSpec::Finite(FiniteGroup {
                generators: vec![RatMat::identity(2).neg()],
                n_pairs: 1,
                order_bound: DEFAULT_ORDER_BOUND,
            }),
            hamiltonian_text: "q1^2 + p1^2",
            scenario_start: vec![1.0, 0.0],
        }),
        "circle_1_-1" => Ok(Builtin {
            name: "circle_1_-1",
            description: "Circle action on C^2 with weights (1, -1)",
            spec: GroupSpec::Torus(TorusAction::new(vec![vec![1, -1]], 2)),
            hamiltonian_text: "q1^2 + p1^2 + q2^2 + p2^2",
            scenario_start: vec![0.8, 0.8, 0.0, 0.0],
        }),
        "klein_r4" => Ok(Builtin {
            name: "klein_r4",
            description: "Two commuting symplectic sign flips on R^4",
            spec: GroupSpec::Finite(FiniteGroup {
                generators: vec![
                    RatMat::from_i64_rows(&[
                        &[-1, 0, 0, 0],
                        &[0, 1, 0, 0],
                        &[0, 0, -1, 0],
                        &[0, 0, 0, 1],
                    ]),
                    RatMat::from_i64_rows(&[
                        &[1, 0, 0, 0],
                        &[0, -1, 0, 0],
                        &[0, 0, 1, 0],
                        &[0, 0, 0, -1],
                    ]),
                ],
                n_pairs: 2,
                order_bound: DEFAULT_ORDER_BOUND,
            }),
            hamiltonian_text: "q1^2*q2^2 + p1^2*p2^2 + q1*p1 + q2^2 + 1/2*p2^2",
            scenario_start: vec![0.0, 0.8, 0.0, -0.5],
        }),
        "so3_central_force" => Ok(Builtin {
            name: "so3_central_force",
            description: "Central force on T*R^3 with V(s) = s under the rotation algebra",
            spec: GroupSpec::LieAlgebra(so3_algebra()),
            hamiltonian_text: "1/2*p1^2 + 1/2*p2^2 + 1/2*p3^2 + q1^2 + q2^2 + q3^2",
            scenario_start: vec![1.0, 0.0, 0.0, 0.0, std::f64::consts::SQRT_2, 0.0],
        }),
        other => Err(Error::Precondition(format!("unknown builtin {other:?}"))),
    }
}

/// The rotation algebra acting block-diagonally on positions and momenta,
/// with integer generator matrices and epsilon-tensor structure constants.
pub fn so3_algebra() -> MatrixLieAlgebra {
    let r1 = [[0i64, 0, 0], [0, 0, -1], [0, 1, 0]];
    let r2 = [[0i64, 0, 1], [0, 0, 0], [-1, 0, 0]];
    let r3 = [[0i64, -1, 0], [1, 0, 0], [0, 0, 0]];
    let block = |r: &[[i64; 3]; 3]| {
        RatMat::from_fn(6, 6, |i, j| {
            let (bi, bj) = (i / 3, j / 3);
            if bi == bj {
                rat(r[i % 3][j % 3])
            } else {
                rat(0)
            }
        })
    };
    let eps = |a: usize, b: usize, c: usize| -> i64 {
        match (a, b, c) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
            _ => 0,
        }
    };
    let mut structure = vec![vec![vec![rat(0); 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                structure[a][b][c] = rat(eps(a, b, c));
            }
        }
    }
    MatrixLieAlgebra {
        basis: vec![block(&r1), block(&r2), block(&r3)],
        structure,
        n_pairs: 3,
    }
}
