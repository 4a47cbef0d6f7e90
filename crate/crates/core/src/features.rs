//! Candidate function library `Theta(X, U)` with a descriptor per column.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pv_plant::Schema;
use crate::simulator::Trajectory;

/// Product of variable powers, factors in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    /// `(variable index, power)`; powers are at least one.
    pub factors: Vec<(usize, u32)>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|f| f.1).sum()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        let mut v = 1.0;
        for &(j, p) in &self.factors {
            v *= if p == 1 { z[j] } else { z[j].powi(p as i32) };
        }
        v
    }

    fn name(&self, names: &[String]) -> String {
        self.factors
            .iter()
            .map(|&(j, p)| {
                if p == 1 {
                    names[j].clone()
                } else {
                    format!("{}^{p}", names[j])
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigFunction {
    Sin,
    Cos,
}

/// One library column. Variable indices refer to the `states ++ inputs`
/// vector of the schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TermDescriptor {
    Constant,
    Monomial(Monomial),
    Trig { func: TrigFunction, var: usize },
    Rational { numerator: Monomial, denominator: usize },
}

impl TermDescriptor {
    /// Value on the variable vector `z = [x, u]`.
    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        Ok(match self {
            TermDescriptor::Constant => 1.0,
            TermDescriptor::Monomial(m) => m.eval(z),
            TermDescriptor::Trig { func, var } => match func {
                TrigFunction::Sin => z[*var].sin(),
                TrigFunction::Cos => z[*var].cos(),
            },
            TermDescriptor::Rational {
                numerator,
                denominator,
            } => {
                let d = z[*denominator];
                if !(d > 0.0) {
                    return Err(Error::SingularState(format!(
                        "rational term with non-positive denominator {d}"
                    )));
                }
                numerator.eval(z) / d
            }
        })
    }
}

/// Canonical, stable name of a term, e.g. `1`, `i_cd^2`, `v_gd*i_gd/v_dc`.
pub fn term_name(d: &TermDescriptor, names: &[String]) -> String {
    match d {
        TermDescriptor::Constant => "1".to_string(),
        TermDescriptor::Monomial(m) => m.name(names),
        TermDescriptor::Trig { func, var } => {
            let f = match func {
                TrigFunction::Sin => "sin",
                TrigFunction::Cos => "cos",
            };
            format!("{f}({})", names[*var])
        }
        TermDescriptor::Rational {
            numerator,
            denominator,
        } => format!("{}/{}", numerator.name(names), names[*denominator]),
    }
}

/// Options selecting the candidate functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LibrarySpec {
    pub max_degree: u32,
    pub include_constant: bool,
    pub trig: bool,
    pub rational: bool,
    /// Highest numerator degree of rational terms.
    pub rational_degree: u32,
    /// Variables allowed as denominators; each must be positive definite.
    pub denominators: Vec<String>,
    /// Variables left out of the library entirely.
    pub exclude: Vec<String>,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self {
            max_degree: 2,
            include_constant: true,
            trig: false,
            rational: false,
            rational_degree: 2,
            denominators: Vec::new(),
            exclude: Vec::new(),
        }
    }
}

impl LibrarySpec {
    /// Degree-2 polynomials plus monomials over `v_dc`. The constant grid
    /// frequency is left out because it duplicates the constant column.
    pub fn for_schema(schema: Schema) -> Self {
        let exclude = match schema.input_index("omega0") {
            Some(_) => vec!["omega0".into()],
            None => Vec::new(),
        };
        Self {
            rational: true,
            denominators: vec!["v_dc".into()],
            exclude,
            ..Self::default()
        }
    }

    pub fn polynomial(max_degree: u32) -> Self {
        Self {
            max_degree,
            ..Self::default()
        }
    }

    /// One-line `key=value` form used in model files.
    pub fn to_line(&self) -> String {
        format!(
            "max_degree={};constant={};trig={};rational={};rational_degree={};denominators={};exclude={}",
            self.max_degree,
            self.include_constant,
            self.trig,
            self.rational,
            self.rational_degree,
            self.denominators.join(" "),
            self.exclude.join(" ")
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut spec = LibrarySpec::default();
        let bad = |k: &str| Error::Parse(format!("bad library field `{k}`"));
        let list = |v: &str| -> Vec<String> { v.split_whitespace().map(String::from).collect() };
        for field in line.split(';') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(field))?;
            match k.trim() {
                "max_degree" => spec.max_degree = v.parse().map_err(|_| bad(k))?,
                "constant" => spec.include_constant = v.parse().map_err(|_| bad(k))?,
                "trig" => spec.trig = v.parse().map_err(|_| bad(k))?,
                "rational" => spec.rational = v.parse().map_err(|_| bad(k))?,
                "rational_degree" => spec.rational_degree = v.parse().map_err(|_| bad(k))?,
                "denominators" => spec.denominators = list(v),
                "exclude" => spec.exclude = list(v),
                _ => return Err(bad(k)),
            }
        }
        Ok(spec)
    }
}

/// Multisets of size `degree` drawn from `vars`, in lexicographic order.
fn combinations(vars: &[usize], degree: u32) -> Vec<Monomial> {
    fn rec(vars: &[usize], start: usize, left: u32, cur: &mut Vec<usize>, out: &mut Vec<Monomial>) {
        if left == 0 {
            let mut factors: Vec<(usize, u32)> = Vec::new();
            for &v in cur.iter() {
                match factors.last_mut() {
                    Some((last, p)) if *last == v => *p += 1,
                    _ => factors.push((v, 1)),
                }
            }
            out.push(Monomial { factors });
            return;
        }
        for i in start..vars.len() {
            cur.push(vars[i]);
            rec(vars, i, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(vars, 0, degree, &mut Vec::new(), &mut out);
    out
}

/// Descriptors over variables taken in the order `order`.
///
/// Columns: constant, degree 1, degree 2, ..., sines, cosines, rational terms.
pub fn enumerate_terms(
    spec: &LibrarySpec,
    order: &[usize],
    denominators: &[usize],
) -> Result<Vec<TermDescriptor>> {
    if spec.max_degree < 1 {
        return Err(Error::InvalidArgument("library degree must be at least 1".into()));
    }
    let mut out = Vec::new();
    if spec.include_constant {
        out.push(TermDescriptor::Constant);
    }
    for d in 1..=spec.max_degree {
        out.extend(combinations(order, d).into_iter().map(TermDescriptor::Monomial));
    }
    if spec.trig {
        for func in [TrigFunction::Sin, TrigFunction::Cos] {
            out.extend(order.iter().map(|&var| TermDescriptor::Trig { func, var }));
        }
    }
    if spec.rational {
        for &den in denominators {
            let vars: Vec<usize> = order.iter().copied().filter(|&v| v != den).collect();
            for d in 1..=spec.rational_degree {
                out.extend(combinations(&vars, d).into_iter().map(|numerator| {
                    TermDescriptor::Rational {
                        numerator,
                        denominator: den,
                    }
                }));
            }
        }
    }
    Ok(out)
}

/// Descriptors for a PV schema: inputs enumerate before states.
pub fn schema_terms(schema: Schema, spec: &LibrarySpec) -> Result<Vec<TermDescriptor>> {
    let names = schema.variable_names();
    for v in spec.exclude.iter().chain(&spec.denominators) {
        if !names.iter().any(|n| n == v) {
            return Err(Error::SchemaMismatch(format!("{schema} has no variable `{v}`")));
        }
    }
    let n = schema.n_states();
    let kept = |j: &usize| !spec.exclude.iter().any(|e| *e == names[*j]);
    let order: Vec<usize> = (n..names.len()).chain(0..n).filter(kept).collect();
    let mut denominators = Vec::new();
    if spec.rational {
        for d in &spec.denominators {
            if !schema.is_positive_definite(d) {
                return Err(Error::InvalidArgument(format!(
                    "`{d}` is not positive definite and cannot be a denominator"
                )));
            }
            let j = names.iter().position(|n| n == d).expect("checked above");
            if !kept(&j) {
                return Err(Error::InvalidArgument(format!("denominator `{d}` is excluded")));
            }
            denominators.push(j);
        }
    }
    enumerate_terms(spec, &order, &denominators)
}

/// Evaluated library over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLibrary {
    pub spec: LibrarySpec,
    pub descriptors: Vec<TermDescriptor>,
    /// `N x K`.
    pub theta: DMatrix<f64>,
    pub variable_names: Vec<String>,
    /// Columns that are identically zero on this trajectory.
    pub degenerate: Vec<usize>,
}

impl FeatureLibrary {
    pub fn n_terms(&self) -> usize {
        self.descriptors.len()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.descriptors
            .iter()
            .map(|d| term_name(d, &self.variable_names))
            .collect()
    }
}

/// The row `[x, u]` at sample `k`.
pub(crate) fn variables_at(traj: &Trajectory, k: usize) -> Vec<f64> {
    let mut z: Vec<f64> = traj.x.row(k).iter().copied().collect();
    z.extend(traj.u.row(k).iter());
    z
}

/// Evaluates the library on every sample of `traj`.
pub fn build_library(traj: &Trajectory, spec: &LibrarySpec) -> Result<FeatureLibrary> {
    if traj.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let descriptors = schema_terms(traj.schema, spec)?;
    let mut theta = DMatrix::zeros(traj.len(), descriptors.len());
    for k in 0..traj.len() {
        let z = variables_at(traj, k);
        for (j, d) in descriptors.iter().enumerate() {
            theta[(k, j)] = d.evaluate(&z).map_err(|e| e.at(traj.times[k]))?;
        }
    }
    let variable_names = traj.schema.variable_names();
    let degenerate: Vec<usize> = (0..descriptors.len())
        .filter(|&j| theta.column(j).iter().all(|v| *v == 0.0))
        .collect();
    for &j in &degenerate {
        log::warn!(
            "library column `{}` is identically zero",
            term_name(&descriptors[j], &variable_names)
        );
    }
    Ok(FeatureLibrary {
        spec: spec.clone(),
        descriptors,
        theta,
        variable_names,
        degenerate,
    })
}

/// One library row at state `x` and input `u`.
pub fn evaluate_library(descriptors: &[TermDescriptor], x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mut z = x.to_vec();
    z.extend_from_slice(u);
    descriptors.iter().map(|d| d.evaluate(&z)).collect()
}
