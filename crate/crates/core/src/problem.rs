//! Continuous problem description: geometry, coefficients and the indefinite
//! weight, plus the JSON configuration format and the builtin problems.
//!
//! Coefficients are piecewise constant on the grid cells. In 2D cells are
//! numbered row by row, `cell = cy * nx + cx`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible `|r|` on a cell.
pub const MIN_ABS_WEIGHT: f64 = 1e-12;
const ALIGN_TOL: f64 = 1e-9;

/// How interface nodes (nodes touching cells of both signs) get their weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceWeight {
    /// Lumped cell average: each adjacent cell contributes its share of `r`.
    /// Interface nodes may end up massless; they are then condensed out of
    /// the eigenproblem (see [`crate::discretization::CondensedPencil`]).
    #[default]
    Average,
    /// The interface node takes the value of the bounded side `Ω₊`.
    BoundedSide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub dimension: usize,
    /// `[lo, hi]` per axis.
    pub outer_box: Vec<[f64; 2]>,
    /// Boxes (per-axis intervals) whose union is `Ω₊`. In 2D exactly one.
    pub plus_region: Vec<Vec<[f64; 2]>>,
    /// Marks `outer_box` as a truncation of the unbounded exterior.
    pub truncation: bool,
}

impl DomainSpec {
    fn in_plus(&self, point: &[f64]) -> bool {
        self.plus_region.iter().any(|b| {
            b.iter()
                .zip(point)
                .all(|(iv, &x)| x > iv[0] && x < iv[1])
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    /// `diffusion[axis][cell]`, diagonal tensor only.
    pub diffusion: Vec<Vec<f64>>,
    /// Potential `a` per cell.
    pub potential: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    /// `r` per cell.
    pub values: Vec<f64>,
    /// Coordinates per axis where `r` changes sign.
    pub sign_interfaces: Vec<Vec<f64>>,
}

/// Name and parameters of the builtin a spec was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub coefficients: CoefficientField,
    pub weight: WeightField,
    /// Cells per axis.
    pub grid: Vec<usize>,
    pub interface_weight: InterfaceWeight,
    pub origin: Option<BuiltinRef>,
}

impl ProblemSpec {
    pub fn dimension(&self) -> usize {
        self.domain.dimension
    }

    pub fn n_cells(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.domain
            .outer_box
            .iter()
            .zip(&self.grid)
            .map(|(b, &n)| (b[1] - b[0]) / n as f64)
            .collect()
    }

    /// Center of cell `c`.
    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut idx = c;
        (0..self.dimension())
            .map(|d| {
                let k = idx % self.grid[d];
                idx /= self.grid[d];
                self.domain.outer_box[d][0] + (k as f64 + 0.5) * h[d]
            })
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// `essinf |r|` over the cells.
    pub fn weight_essinf(&self) -> f64 {
        self.weight
            .values
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// `essinf a` over the cells.
    pub fn potential_essinf(&self) -> f64 {
        self.coefficients
            .potential
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `r` over the cells of `Ω₋` (negative, closest to zero).
    pub fn minus_weight_max(&self) -> f64 {
        self.weight
            .values
            .iter()
            .copied()
            .filter(|v| *v < 0.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn label(&self) -> String {
        match &self.origin {
            Some(b) if b.params.is_empty() => b.name.clone(),
            Some(b) => {
                let ps: Vec<String> = b.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                format!("{}({})", b.name, ps.join(","))
            }
            None => format!("custom{}d", self.dimension()),
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration format

/// Per-cell field as written in a configuration: one value or one per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellField {
    Uniform(f64),
    PerCell(Vec<f64>),
}

impl CellField {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        let v = match self {
            CellField::Uniform(x) => vec![*x; n],
            CellField::PerCell(v) if v.len() == n => v.clone(),
            CellField::PerCell(v) => {
                return Err(Error::Config(format!(
                    "{what}: expected {n} cell values, got {}",
                    v.len()
                )))
            }
        };
        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!("{what}: non-finite value on cell {bad}")));
        }
        Ok(v)
    }

    fn collapse(v: &[f64]) -> CellField {
        match v.first() {
            Some(&x) if v.iter().all(|y| y.to_bits() == x.to_bits()) => CellField::Uniform(x),
            _ => CellField::PerCell(v.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiffusionField {
    Isotropic(CellField),
    PerAxis(Vec<CellField>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightTable {
    Regions { plus: f64, minus: f64 },
    Cells { cells: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridRequest {
    Cells { cells: Vec<usize> },
    Spacing { h: f64 },
}

/// The JSON document accepted by [`load_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<BuiltinRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plus_region: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub truncation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<CellField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridRequest>,
    #[serde(default)]
    pub interface_weight: InterfaceWeight,
    /// Settings for the command-line runner; ignored by the problem model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<serde_json::Value>,
}

/// Parses and fully validates a JSON configuration.
pub fn load_problem(config_text: &str) -> Result<ProblemSpec> {
    let cfg: ProblemConfig =
        serde_json::from_str(config_text).map_err(|e| Error::Config(e.to_string()))?;
    spec_from_config(&cfg)
}

pub fn spec_from_config(cfg: &ProblemConfig) -> Result<ProblemSpec> {
    let Some(dimension) = cfg.dimension else {
        let b = cfg
            .problem
            .as_ref()
            .ok_or_else(|| Error::Config("need either `dimension` or `problem`".into()))?;
        let mut spec = builtin_problem(&b.name, &b.params)?;
        spec.interface_weight = cfg.interface_weight;
        return Ok(spec);
    };
    if !(1..=2).contains(&dimension) {
        return Err(Error::Config(format!("dimension must be 1 or 2, got {dimension}")));
    }
    let missing = |f: &str| Error::Config(format!("missing field `{f}`"));
    let outer_box = cfg.outer_box.clone().ok_or_else(|| missing("outer_box"))?;
    if outer_box.len() != dimension {
        return Err(Error::Config("outer_box needs one interval per axis".into()));
    }
    for b in &outer_box {
        if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) {
            return Err(Error::Config(format!("bad interval {b:?}")));
        }
    }
    let raw_plus = cfg.plus_region.clone().ok_or_else(|| missing("plus_region"))?;
    let plus_region: Vec<Vec<[f64; 2]>> = if dimension == 1 {
        raw_plus.iter().map(|iv| vec![*iv]).collect()
    } else {
        if raw_plus.len() != 2 {
            return Err(Error::Config(
                "2D plus_region must be one rectangle [[x0,x1],[y0,y1]]".into(),
            ));
        }
        vec![raw_plus.clone()]
    };
    let domain = DomainSpec {
        dimension,
        outer_box,
        plus_region,
        truncation: cfg.truncation,
    };
    let grid = match cfg.grid.as_ref().ok_or_else(|| missing("grid"))? {
        GridRequest::Cells { cells } => {
            if cells.len() != dimension || cells.iter().any(|&n| n < 2) {
                return Err(Error::Config("grid.cells needs ≥ 2 cells per axis".into()));
            }
            cells.clone()
        }
        GridRequest::Spacing { h } => cells_for_spacing(&domain.outer_box, *h)?,
    };
    let n_cells: usize = grid.iter().product();

    let diffusion = match cfg.diffusion.as_ref().ok_or_else(|| missing("diffusion"))? {
        DiffusionField::Isotropic(f) => {
            let v = f.expand(n_cells, "diffusion")?;
            vec![v; dimension]
        }
        DiffusionField::PerAxis(fs) => {
            if fs.len() != dimension {
                return Err(Error::Config("diffusion needs one field per axis".into()));
            }
            fs.iter()
                .map(|f| f.expand(n_cells, "diffusion"))
                .collect::<Result<_>>()?
        }
    };
    let potential = cfg
        .potential
        .as_ref()
        .ok_or_else(|| missing("potential"))?
        .expand(n_cells, "potential")?;

    let mut spec = ProblemSpec {
        domain,
        coefficients: CoefficientField {
            diffusion,
            potential,
        },
        weight: WeightField {
            values: Vec::new(),
            sign_interfaces: Vec::new(),
        },
        grid,
        interface_weight: cfg.interface_weight,
        origin: cfg.problem.clone(),
    };
    let values = match cfg.weight.as_ref().ok_or_else(|| missing("weight"))? {
        WeightTable::Regions { plus, minus } => (0..n_cells)
            .map(|c| {
                if spec.domain.in_plus(&spec.cell_center(c)) {
                    *plus
                } else {
                    *minus
                }
            })
            .collect(),
        WeightTable::Cells { cells } => CellField::PerCell(cells.clone()).expand(n_cells, "weight")?,
    };
    spec.weight.values = values;
    spec.weight.sign_interfaces = sign_interfaces(&spec.domain);
    validate(&spec)?;
    Ok(spec)
}

fn cells_for_spacing(outer_box: &[[f64; 2]], h: f64) -> Result<Vec<usize>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
    }
    outer_box
        .iter()
        .enumerate()
        .map(|(axis, b)| {
            let len = b[1] - b[0];
            let n = (len / h).round();
            if n < 2.0 || (n * h - len).abs() > ALIGN_TOL * len.max(1.0) {
                return Err(Error::GridMisalignment {
                    axis,
                    coordinate: b[1],
                    spacing: h,
                });
            }
            Ok(n as usize)
        })
        .collect()
}

fn sign_interfaces(domain: &DomainSpec) -> Vec<Vec<f64>> {
    (0..domain.dimension)
        .map(|d| {
            let mut v: Vec<f64> = domain
                .plus_region
                .iter()
                .flat_map(|b| [b[d][0], b[d][1]])
                .filter(|&x| x > domain.outer_box[d][0] && x < domain.outer_box[d][1])
                .collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect()
}

/// Checks every invariant of a spec assembled by hand or from a config.
pub fn validate(spec: &ProblemSpec) -> Result<()> {
    let dom = &spec.domain;
    let n_cells = spec.n_cells();
    if spec.coefficients.potential.len() != n_cells
        || spec.weight.values.len() != n_cells
        || spec.coefficients.diffusion.len() != dom.dimension
        || spec.coefficients.diffusion.iter().any(|v| v.len() != n_cells)
    {
        return Err(Error::Config("coefficient tables do not match the grid".into()));
    }
    let h = spec.spacing();
    for boxes in &dom.plus_region {
        if boxes.len() != dom.dimension {
            return Err(Error::Config("plus_region box has wrong dimension".into()));
        }
        for (d, iv) in boxes.iter().enumerate() {
            let ob = dom.outer_box[d];
            if !(iv[0] < iv[1]) || iv[0] < ob[0] || iv[1] > ob[1] {
                return Err(Error::Config(format!("plus_region interval {iv:?} not inside outer_box")));
            }
            if dom.truncation && (iv[0] <= ob[0] || iv[1] >= ob[1]) {
                return Err(Error::Config(
                    "truncated exterior: plus_region must stay away from the outer boundary".into(),
                ));
            }
        }
    }
    for (axis, coords) in spec.weight.sign_interfaces.iter().enumerate() {
        for &x in coords {
            let k = (x - dom.outer_box[axis][0]) / h[axis];
            if (k - k.round()).abs() > ALIGN_TOL * k.abs().max(1.0) {
                return Err(Error::GridMisalignment {
                    axis,
                    coordinate: x,
                    spacing: h[axis],
                });
            }
        }
    }
    for (cell, &r) in spec.weight.values.iter().enumerate() {
        if !(r.abs() >= MIN_ABS_WEIGHT) {
            return Err(Error::SingularWeight { cell, value: r });
        }
        let plus = dom.in_plus(&spec.cell_center(cell));
        if plus != (r > 0.0) {
            return Err(Error::Config(format!(
                "sign of r on cell {cell} disagrees with plus_region"
            )));
        }
    }
    validate_ellipticity(spec)?;
    partition_domain(spec)?;
    Ok(())
}

/// Uniform ellipticity constant `C = min a_d(x)`.
pub fn validate_ellipticity(spec: &ProblemSpec) -> Result<f64> {
    let mut c = f64::INFINITY;
    for (axis, vals) in spec.coefficients.diffusion.iter().enumerate() {
        for (cell, &v) in vals.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::EllipticityViolation { cell, axis, value: v });
            }
            c = c.min(v);
        }
    }
    Ok(c)
}

/// Sign partition of the cells and the interface node set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub plus_cells: Vec<usize>,
    pub minus_cells: Vec<usize>,
    /// Interior grid nodes (linear index, see [`crate::discretization::Grid`])
    /// touching cells of both signs.
    pub gamma: Vec<usize>,
    pub measure_plus: f64,
    pub measure_minus: f64,
}

pub fn partition_domain(spec: &ProblemSpec) -> Result<Partition> {
    let (plus_cells, minus_cells): (Vec<usize>, Vec<usize>) =
        (0..spec.n_cells()).partition(|&c| spec.weight.values[c] > 0.0);
    if plus_cells.is_empty() {
        return Err(Error::DegeneratePartition("plus"));
    }
    if minus_cells.is_empty() {
        return Err(Error::DegeneratePartition("minus"));
    }
    let vol = spec.cell_volume();
    let grid = crate::discretization::Grid::new(spec);
    let gamma = (0..grid.n_interior())
        .filter(|&i| {
            let cells = grid.adjacent_cells(i);
            let plus = cells.iter().filter(|&&c| spec.weight.values[c] > 0.0).count();
            plus > 0 && plus < cells.len()
        })
        .collect();
    Ok(Partition {
        measure_plus: plus_cells.len() as f64 * vol,
        measure_minus: minus_cells.len() as f64 * vol,
        plus_cells,
        minus_cells,
        gamma,
    })
}

/// Canonical configuration text; `load_problem(emit_config(s)) == s`.
pub fn emit_config(spec: &ProblemSpec) -> String {
    serde_json::to_string_pretty(&config_from_spec(spec)).expect("config serializes")
}

pub fn config_from_spec(spec: &ProblemSpec) -> ProblemConfig {
    let diffusion = {
        let axes: Vec<CellField> = spec
            .coefficients
            .diffusion
            .iter()
            .map(|v| CellField::collapse(v))
            .collect();
        if axes.iter().all(|a| a == &axes[0]) {
            DiffusionField::Isotropic(axes[0].clone())
        } else {
            DiffusionField::PerAxis(axes)
        }
    };
    let plus_region = if spec.dimension() == 1 {
        spec.domain.plus_region.iter().map(|b| b[0]).collect()
    } else {
        spec.domain.plus_region[0].clone()
    };
    let weight = {
        let plus = spec.weight.values.iter().copied().find(|v| *v > 0.0);
        let minus = spec.weight.values.iter().copied().find(|v| *v < 0.0);
        match (plus, minus) {
            (Some(p), Some(m))
                if spec.weight.values.iter().all(|v| {
                    v.to_bits() == p.to_bits() || v.to_bits() == m.to_bits()
                }) =>
            {
                WeightTable::Regions { plus: p, minus: m }
            }
            _ => WeightTable::Cells {
                cells: spec.weight.values.clone(),
            },
        }
    };
    ProblemConfig {
        problem: spec.origin.clone(),
        dimension: Some(spec.dimension()),
        outer_box: Some(spec.domain.outer_box.clone()),
        plus_region: Some(plus_region),
        truncation: spec.domain.truncation,
        diffusion: Some(diffusion),
        potential: Some(CellField::collapse(&spec.coefficients.potential)),
        weight: Some(weight),
        grid: Some(GridRequest::Cells {
            cells: spec.grid.clone(),
        }),
        interface_weight: spec.interface_weight,
        experiment: None,
    }
}

// ---------------------------------------------------------------------------
// Builtins

const BUILTIN_PARAMS: &[(&str, &[&str])] = &[
    ("P1", &["h", "L"]),
    ("P2", &["c", "h", "L"]),
    ("P3", &["c", "L", "h"]),
    ("P4", &["L", "h", "c"]),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_PARAMS.iter().map(|(n, _)| *n)
}

pub fn builtin_accepts(name: &str, param: &str) -> bool {
    BUILTIN_PARAMS
        .iter()
        .any(|(n, ps)| *n == name && ps.contains(&param))
}

/// The canonical problems:
///
/// * `P1(h, L)`: 1D on `(-L, 1)`, `a_d = 1`, `a = 0`, `r = ±1` on `(0,1)` / `(-L,0)`.
/// * `P2(c, h, L)`: `P1` with `a ≡ -c`.
/// * `P3(c, L, h)`: 2D on `(-L,L)²`, `Ω₊ = (-½,½)²`, `a ≡ -c`.
/// * `P4(L, h, c)`: `P3` with `c = 0` and `h = L/64` by default.
pub fn builtin_problem(name: &str, params: &BTreeMap<String, f64>) -> Result<ProblemSpec> {
    let accepted = BUILTIN_PARAMS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))?
        .1;
    if let Some(k) = params.keys().find(|k| !accepted.contains(&k.as_str())) {
        return Err(Error::UnknownParameter(format!("{name} has no parameter {k}")));
    }
    let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
    let origin = Some(BuiltinRef {
        name: name.to_string(),
        params: params.clone(),
    });
    let one_d = |c: f64, h: f64, l: f64| ProblemConfig {
        problem: origin.clone(),
        dimension: Some(1),
        outer_box: Some(vec![[-l, 1.0]]),
        plus_region: Some(vec![[0.0, 1.0]]),
        truncation: false,
        diffusion: Some(DiffusionField::Isotropic(CellField::Uniform(1.0))),
        potential: Some(CellField::Uniform(-c)),
        weight: Some(WeightTable::Regions {
            plus: 1.0,
            minus: -1.0,
        }),
        grid: Some(GridRequest::Spacing { h }),
        interface_weight: InterfaceWeight::Average,
        experiment: None,
    };
    let two_d = |c: f64, l: f64, h: f64| ProblemConfig {
        problem: origin.clone(),
        dimension: Some(2),
        outer_box: Some(vec![[-l, l], [-l, l]]),
        plus_region: Some(vec![[-0.5, 0.5], [-0.5, 0.5]]),
        truncation: true,
        diffusion: Some(DiffusionField::Isotropic(CellField::Uniform(1.0))),
        potential: Some(CellField::Uniform(-c)),
        weight: Some(WeightTable::Regions {
            plus: 1.0,
            minus: -1.0,
        }),
        grid: Some(GridRequest::Spacing { h }),
        interface_weight: InterfaceWeight::Average,
        experiment: None,
    };
    let cfg = match name {
        "P1" => one_d(0.0, get("h", 0.01), get("L", 1.0)),
        "P2" => one_d(get("c", 30.0), get("h", 1e-3), get("L", 1.0)),
        "P3" => two_d(get("c", 20.0), get("L", 2.0), get("h", 0.125)),
        "P4" => {
            let l = get("L", 8.0);
            two_d(get("c", 0.0), l, get("h", l / 64.0))
        }
        _ => unreachable!(),
    };
    spec_from_config(&cfg)
}

/// Parses `P2`, `P2(c=30)` or `P3(c=20, L=2, h=0.125)`.
pub fn parse_builtin_expr(expr: &str) -> Option<(String, BTreeMap<String, f64>)> {
    let expr = expr.trim();
    let (name, rest) = match expr.find('(') {
        Some(i) => (&expr[..i], Some(&expr[i + 1..])),
        None => (expr, None),
    };
    let name = name.trim();
    if !builtin_names().any(|n| n == name) {
        return None;
    }
    let mut params = BTreeMap::new();
    if let Some(rest) = rest {
        let body = rest.strip_suffix(')')?;
        for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=')?;
            params.insert(k.trim().to_string(), v.trim().parse().ok()?);
        }
    }
    Some((name.to_string(), params))
}

/// Refined copy with `factor` times as many cells per axis.
pub fn refine(spec: &ProblemSpec, factor: usize) -> Result<ProblemSpec> {
    if factor < 2 {
        return Err(Error::InvalidFactor(factor));
    }
    let old_nx = spec.grid[0];
    let new_grid: Vec<usize> = spec.grid.iter().map(|n| n * factor).collect();
    let new_nx = new_grid[0];
    let n_new: usize = new_grid.iter().product();
    let parent = |c: usize| -> usize {
        if spec.dimension() == 1 {
            c / factor
        } else {
            let (cx, cy) = (c % new_nx, c / new_nx);
            (cy / factor) * old_nx + cx / factor
        }
    };
    let expand = |v: &Vec<f64>| (0..n_new).map(|c| v[parent(c)]).collect::<Vec<_>>();
    let mut out = spec.clone();
    out.grid = new_grid;
    out.coefficients.diffusion = spec.coefficients.diffusion.iter().map(expand).collect();
    out.coefficients.potential = expand(&spec.coefficients.potential);
    out.weight.values = expand(&spec.weight.values);
    if let Some(b) = out.origin.as_mut() {
        if let Some(h) = b.params.get_mut("h") {
            *h /= factor as f64;
        }
    }
    Ok(out)
}
