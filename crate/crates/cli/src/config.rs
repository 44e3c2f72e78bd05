//! Model configuration: JSON schema, validation, and resolution into core
//! data structures.

use serde::{Deserialize, Serialize};
use symred_core::builtins::{builtin, Builtin};
use symred_core::exact::{Rat, RatMat};
use symred_core::groups::{
    FiniteGroup, GroupSpec, MatrixLieAlgebra, TorusAction, DEFAULT_ORDER_BOUND,
};
use symred_core::poly::{Poly, VarSet};
use symred_core::symplectic::SymplecticSpace;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupCfg>,
    /// Polynomial text or `builtin:<name>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub tasks: Vec<TaskCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceCfg {
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolCfg {
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Exact rational literal: an integer or a `"p/q"` string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalLit {
    Int(i64),
    Text(String),
}

impl RationalLit {
    pub fn to_rat(&self) -> Result<Rat, String> {
        match self {
            RationalLit::Int(n) => Ok(symred_core::exact::rat(*n)),
            RationalLit::Text(s) => s
                .parse::<Rat>()
                .map_err(|_| format!("bad rational literal {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupCfg {
    Finite {
        generators: Vec<Vec<Vec<RationalLit>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        order_bound: Option<usize>,
    },
    Torus {
        weights: Vec<Vec<i64>>,
    },
    LieAlgebra {
        basis: Vec<Vec<Vec<RationalLit>>>,
        structure: Vec<Vec<Vec<RationalLit>>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskCfg {
    Invariants {
        #[serde(skip_serializing_if = "Option::is_none")]
        degree_bound: Option<u32>,
    },
    Strata {},
    Simulate {
        t_final: f64,
        dt: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        start: Option<Vec<f64>>,
        #[serde(default)]
        reduced: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Verify {
        #[serde(skip_serializing_if = "Option::is_none")]
        checks: Option<Vec<String>>,
    },
    Slice {
        #[serde(skip_serializing_if = "Option::is_none")]
        point: Option<Vec<f64>>,
    },
}

impl TaskCfg {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskCfg::Invariants { .. } => "invariants",
            TaskCfg::Strata {} => "strata",
            TaskCfg::Simulate { .. } => "simulate",
            TaskCfg::Verify { .. } => "verify",
            TaskCfg::Slice { .. } => "slice",
        }
    }

    fn needs_seed(&self) -> bool {
        matches!(
            self,
            TaskCfg::Verify { .. }
                | TaskCfg::Slice { point: None }
                | TaskCfg::Simulate { start: None, .. }
        )
    }
}

/// A fully resolved model ready for task execution.
pub struct Model {
    pub builtin_name: Option<String>,
    pub space: SymplecticSpace,
    pub spec: GroupSpec,
    pub hamiltonian: Poly,
    pub scenario_start: Option<Vec<f64>>,
    pub seed: u64,
    pub tolerance_scale: f64,
}

fn mat_from_lits(rows: &[Vec<RationalLit>]) -> Result<RatMat, String> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix literal".into());
    }
    let mut data = Vec::with_capacity(nrows * ncols);
    for row in rows {
        for lit in row {
            data.push(lit.to_rat()?);
        }
    }
    Ok(RatMat::from_rows(
        &data.chunks(ncols).map(|c| c.to_vec()).collect::<Vec<_>>(),
    ))
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config does not match the schema: {e}"))
    }

    /// Validate and resolve into core structures. All failures here are
    /// configuration errors (exit code 2).
    pub fn resolve(
        &self,
        seed_override: Option<u64>,
        tol_override: Option<f64>,
    ) -> Result<Model, String> {
        if self.builtin.is_some() && (self.space.is_some() || self.group.is_some()) {
            return Err("a builtin reference cannot be combined with explicit space/group".into());
        }
        let seed = seed_override.or(self.seed);
        if seed.is_none() && self.tasks.iter().any(|t| t.needs_seed()) {
            return Err(
                "a seed is mandatory for sampled tasks (verify, slice, simulate without start)"
                    .into(),
            );
        }
        let tolerance_scale = tol_override
            .unwrap_or_else(|| self.tolerances.as_ref().map(|t| t.scale).unwrap_or(1.0));
        if !(tolerance_scale > 0.0) {
            return Err("tolerance scale must be positive".into());
        }

        let (space, spec, hamiltonian_text, scenario, name): (
            SymplecticSpace,
            GroupSpec,
            String,
            Option<Vec<f64>>,
            Option<String>,
        ) = if let Some(bname) = &self.builtin {
            let b: Builtin = builtin(bname).map_err(|e| e.to_string())?;
            let text = match &self.hamiltonian {
                Some(t) => resolve_hamiltonian_text(t)?,
                None => b.hamiltonian_text.to_string(),
            };
            (
                b.space(),
                b.spec.clone(),
                text,
                Some(b.scenario_start.clone()),
                Some(bname.clone()),
            )
        } else {
            let space_cfg = self.space.as_ref().ok_or("missing space section")?;
            if space_cfg.dim == 0 || space_cfg.dim % 2 != 0 {
                return Err(format!(
                    "space dim must be a positive even integer, got {}",
                    space_cfg.dim
                ));
            }
            let n = space_cfg.dim / 2;
            let group_cfg = self.group.as_ref().ok_or("missing group section")?;
            let spec = match group_cfg {
                GroupCfg::Finite {
                    generators,
                    order_bound,
                } => {
                    let gens: Result<Vec<RatMat>, String> =
                        generators.iter().map(|g| mat_from_lits(g)).collect();
                    GroupSpec::Finite(FiniteGroup {
                        generators: gens?,
                        n_pairs: n,
                        order_bound: order_bound.unwrap_or(DEFAULT_ORDER_BOUND),
                    })
                }
                GroupCfg::Torus { weights } => {
                    if weights.iter().any(|row| row.len() != n) {
                        return Err("torus weight rows must have length n".into());
                    }
                    GroupSpec::Torus(TorusAction::new(weights.clone(), n))
                }
                GroupCfg::LieAlgebra { basis, structure } => {
                    let basis: Result<Vec<RatMat>, String> =
                        basis.iter().map(|g| mat_from_lits(g)).collect();
                    let k = structure.len();
                    let mut c = vec![vec![vec![symred_core::exact::rat(0); k]; k]; k];
                    for (a, plane) in structure.iter().enumerate() {
                        if plane.len() != k {
                            return Err("structure constants must be k x k x k".into());
                        }
                        for (b, row) in plane.iter().enumerate() {
                            if row.len() != k {
                                return Err("structure constants must be k x k x k".into());
                            }
                            for (cc, lit) in row.iter().enumerate() {
                                c[a][b][cc] = lit.to_rat()?;
                            }
                        }
                    }
                    GroupSpec::LieAlgebra(MatrixLieAlgebra {
                        basis: basis?,
                        structure: c,
                        n_pairs: n,
                    })
                }
            };
            if spec.space_dim() != space_cfg.dim {
                return Err("group data does not match the space dimension".into());
            }
            let text = self
                .hamiltonian
                .as_ref()
                .ok_or("missing hamiltonian")
                .and_then(|t| resolve_hamiltonian_text(t).map_err(|_| "bad hamiltonian reference"))
                .map_err(|e| e.to_string())?;
            (SymplecticSpace::standard(n), spec, text, None, None)
        };

        spec.validate()
            .map_err(|e| format!("invalid group data: {e}"))?;
        let vars = VarSet::Phase {
            pairs: spec.n_pairs(),
        };
        let hamiltonian = Poly::parse(&hamiltonian_text, &vars)
            .map_err(|e| format!("hamiltonian does not parse: {e}"))?;

        for task in &self.tasks {
            if let TaskCfg::Simulate { start: Some(v), .. } = task {
                if v.len() != spec.space_dim() {
                    return Err("simulate start point has the wrong dimension".into());
                }
            }
            if let TaskCfg::Slice { point: Some(v) } = task {
                if v.len() != spec.space_dim() {
                    return Err("slice point has the wrong dimension".into());
                }
            }
            if let TaskCfg::Verify {
                checks: Some(names),
            } = task
            {
                for name in names {
                    if name != "all" && !crate::tasks::CHECK_NAMES.contains(&name.as_str()) {
                        return Err(format!("unknown verify check {name:?}"));
                    }
                }
            }
        }

        Ok(Model {
            builtin_name: name,
            space,
            spec,
            hamiltonian,
            scenario_start: scenario,
            seed: seed.unwrap_or(0),
            tolerance_scale,
        })
    }
}

fn resolve_hamiltonian_text(text: &str) -> Result<String, String> {
    if let Some(name) = text.strip_prefix("builtin:") {
        let b = builtin(name).map_err(|e| e.to_string())?;
        Ok(b.hamiltonian_text.to_string())
    } else {
        Ok(text.to_string())
    }
}

/// The expanded config for a builtin, as served by `symred builtin <name>`.
pub fn builtin_config(name: &str) -> Result<ModelConfig, String> {
    let b = builtin(name).map_err(|e| e.to_string())?;
    let group = match &b.spec {
        GroupSpec::Finite(g) => GroupCfg::Finite {
            generators: g.generators.iter().map(rat_mat_to_lits).collect(),
            order_bound: None,
        },
        GroupSpec::Torus(t) => GroupCfg::Torus {
            weights: t.weights.clone(),
        },
        GroupSpec::LieAlgebra(a) => GroupCfg::LieAlgebra {
            basis: a.basis.iter().map(rat_mat_to_lits).collect(),
            structure: a
                .structure
                .iter()
                .map(|plane| {
                    plane
                        .iter()
                        .map(|row| row.iter().map(rat_to_lit).collect())
                        .collect()
                })
                .collect(),
        },
    };
    Ok(ModelConfig {
        builtin: None,
        space: Some(SpaceCfg {
            dim: b.spec.space_dim(),
        }),
        group: Some(group),
        hamiltonian: Some(b.hamiltonian_text.to_string()),
        tasks: vec![
            TaskCfg::Invariants { degree_bound: None },
            TaskCfg::Strata {},
            TaskCfg::Verify { checks: None },
        ],
        seed: Some(42),
        tolerances: None,
        output_dir: None,
    })
}

fn rat_mat_to_lits(m: &RatMat) -> Vec<Vec<RationalLit>> {
    (0..m.nrows)
        .map(|i| (0..m.ncols).map(|j| rat_to_lit(&m[(i, j)])).collect())
        .collect()
}

fn rat_to_lit(r: &Rat) -> RationalLit {
    if r.is_integer() {
        if let Ok(n) = r.to_integer().to_string().parse::<i64>() {
            return RationalLit::Int(n);
        }
    }
    RationalLit::Text(r.to_string())
}
