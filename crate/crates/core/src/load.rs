//! Volume and surface loads, built from closures or from arithmetic
//! expressions in `x1, x2, x3`.

use crate::error::Error;
use crate::mesh::{CubeFace, Point};
use evalexpr::{
    build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult,
    Node, Value,
};
use evalexpr::error::EvalexprResultValue;
use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Four-component field: three mechanical components and one electric.
#[derive(Clone)]
pub struct VectorField(Arc<dyn Fn(&Point) -> Vector4<f64> + Send + Sync>);

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VectorField(..)")
    }
}

impl VectorField {
    pub fn new(f: impl Fn(&Point) -> Vector4<f64> + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(v: [f64; 4]) -> Self {
        let v = Vector4::from(v);
        Self::new(move |_| v)
    }

    pub fn zero() -> Self {
        Self::constant([0.0; 4])
    }

    pub fn eval(&self, x: &Point) -> Vector4<f64> {
        (self.0)(x)
    }

    /// Keep the selected components, zero the others.
    pub fn masked(&self, keep: [bool; 4]) -> Self {
        let f = self.clone();
        Self::new(move |x| {
            let mut v = f.eval(x);
            for (i, k) in keep.iter().enumerate() {
                if !k {
                    v[i] = 0.0;
                }
            }
            v
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let f = self.clone();
        Self::new(move |x| f.eval(x) * s)
    }

    pub fn sum(a: &Self, b: &Self) -> Self {
        let (a, b) = (a.clone(), b.clone());
        Self::new(move |x| a.eval(x) + b.eval(x))
    }
}

/// Variables and functions visible to load expressions.
struct PointContext {
    vars: [Value<DefaultNumericTypes>; 4],
}

impl PointContext {
    fn new(x: &Point) -> Self {
        Self {
            vars: [
                Value::Float(x[0]),
                Value::Float(x[1]),
                Value::Float(x[2]),
                Value::Float(std::f64::consts::PI),
            ],
        }
    }
}

impl Context for PointContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value<DefaultNumericTypes>> {
        match identifier {
            "x1" => Some(&self.vars[0]),
            "x2" => Some(&self.vars[1]),
            "x3" => Some(&self.vars[2]),
            "pi" => Some(&self.vars[3]),
            _ => None,
        }
    }

    fn call_function(
        &self,
        identifier: &str,
        argument: &Value<DefaultNumericTypes>,
    ) -> EvalexprResultValue<DefaultNumericTypes> {
        let a = argument.as_number()?;
        let v = match identifier {
            "sin" => a.sin(),
            "cos" => a.cos(),
            "tan" => a.tan(),
            "exp" => a.exp(),
            "sqrt" => a.sqrt(),
            "abs" => a.abs(),
            _ => return Err(EvalexprError::FunctionIdentifierNotFound(identifier.into())),
        };
        Ok(Value::Float(v))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        true
    }

    fn set_builtin_functions_disabled(&mut self, _: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Ok(())
    }
}

/// Parsed scalar expression in `x1, x2, x3` and `pi`, with `+ - * / ^`
/// and the functions `sin cos tan exp sqrt abs`.
#[derive(Clone)]
pub struct ScalarExpr {
    source: String,
    tree: Arc<Node<DefaultNumericTypes>>,
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({:?})", self.source)
    }
}

impl ScalarExpr {
    pub fn parse(source: &str) -> Result<Self, Error> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Config(format!("expression {source:?}: {e}")))?;
        let expr = Self { source: source.to_string(), tree: Arc::new(tree) };
        expr.try_eval(&Point::new(0.1, 0.2, 0.3))?;
        Ok(expr)
    }

    fn try_eval(&self, x: &Point) -> Result<f64, Error> {
        self.tree
            .eval_number_with_context(&PointContext::new(x))
            .map_err(|e| Error::Config(format!("expression {:?}: {e}", self.source)))
    }

    /// Value at `x`; NaN if evaluation fails.
    pub fn eval(&self, x: &Point) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Four expressions, one per state component.
pub fn field_from_expressions(sources: &[String; 4]) -> Result<VectorField, Error> {
    let exprs: Vec<ScalarExpr> = sources.iter().map(|s| ScalarExpr::parse(s)).collect::<Result<_, _>>()?;
    Ok(VectorField::new(move |x| {
        Vector4::new(exprs[0].eval(x), exprs[1].eval(x), exprs[2].eval(x), exprs[3].eval(x))
    }))
}

/// Surface load on a set of cube faces.
#[derive(Debug, Clone)]
pub struct SurfaceLoad {
    pub faces: Vec<CubeFace>,
    pub field: VectorField,
}

/// Volume load plus surface loads on the loaded part of the cube boundary.
#[derive(Debug, Clone)]
pub struct LoadSet {
    pub volume: VectorField,
    pub surface: Vec<SurfaceLoad>,
}

impl Default for LoadSet {
    fn default() -> Self {
        Self { volume: VectorField::zero(), surface: Vec::new() }
    }
}

impl LoadSet {
    pub fn with_volume(mut self, f: VectorField) -> Self {
        self.volume = f;
        self
    }

    pub fn with_surface(mut self, faces: &[CubeFace], field: VectorField) -> Self {
        self.surface.push(SurfaceLoad { faces: faces.to_vec(), field });
        self
    }

    /// Surface load density at `x` on `face`.
    pub fn surface_at(&self, face: CubeFace, x: &Point) -> Vector4<f64> {
        self.surface
            .iter()
            .filter(|s| s.faces.contains(&face))
            .map(|s| s.field.eval(x))
            .sum()
    }

    fn masked(&self, keep: [bool; 4]) -> Self {
        Self {
            volume: self.volume.masked(keep),
            surface: self
                .surface
                .iter()
                .map(|s| SurfaceLoad { faces: s.faces.clone(), field: s.field.masked(keep) })
                .collect(),
        }
    }

    /// Forces only.
    pub fn mechanical_part(&self) -> Self {
        self.masked([true, true, true, false])
    }

    /// Charges only.
    pub fn electric_part(&self) -> Self {
        self.masked([false, false, false, true])
    }

    /// Linear combination of load sets.
    pub fn combination(terms: &[(f64, &LoadSet)]) -> Self {
        let mut out = LoadSet::default();
        for (c, l) in terms {
            out.volume = VectorField::sum(&out.volume, &l.volume.scaled(*c));
            for s in &l.surface {
                out.surface.push(SurfaceLoad { faces: s.faces.clone(), field: s.field.scaled(*c) });
            }
        }
        out
    }

    /// Default test load: compressive traction with shear on the top face,
    /// a sinusoidal surface charge on the `x1 = 1/2` face, a tangential
    /// traction on the `x2 = 1/2` face and a constant body force.
    pub fn default_test() -> Self {
        LoadSet::default()
            .with_volume(VectorField::constant([0.1, -0.05, 0.2, 0.0]))
            .with_surface(&[CubeFace::ZPlus], VectorField::constant([0.25, 0.15, -1.0, 0.0]))
            .with_surface(
                &[CubeFace::XPlus],
                VectorField::new(|x| Vector4::new(0.0, 0.0, 0.0, (std::f64::consts::PI * x[1] + 0.5).sin())),
            )
            .with_surface(
                &[CubeFace::YPlus],
                VectorField::new(|x| Vector4::new(0.0, 0.0, 0.3 * (std::f64::consts::PI * x[2]).cos(), 0.0)),
            )
    }
}

/// Serializable description of a load set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    /// Volume load expressions, one per component.
    #[serde(default = "zero_exprs")]
    pub volume: [String; 4],
    #[serde(default)]
    pub surface: Vec<SurfaceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub faces: Vec<CubeFace>,
    pub value: [String; 4],
}

fn zero_exprs() -> [String; 4] {
    ["0".into(), "0".into(), "0".into(), "0".into()]
}

impl LoadSpec {
    pub fn build(&self) -> Result<LoadSet, Error> {
        let mut l = LoadSet::default().with_volume(field_from_expressions(&self.volume)?);
        for s in &self.surface {
            if s.faces.contains(&CubeFace::ZMinus) {
                return Err(Error::Config("the clamped bottom face cannot carry loads".into()));
            }
            l = l.with_surface(&s.faces, field_from_expressions(&s.value)?);
        }
        Ok(l)
    }

    /// Expression form of [`LoadSet::default_test`].
    pub fn default_test() -> Self {
        let s = |v: [&str; 4]| v.map(String::from);
        Self {
            volume: s(["0.1", "-0.05", "0.2", "0"]),
            surface: vec![
                SurfaceSpec { faces: vec![CubeFace::ZPlus], value: s(["0.25", "0.15", "-1", "0"]) },
                SurfaceSpec { faces: vec![CubeFace::XPlus], value: s(["0", "0", "0", "sin(pi*x2 + 0.5)"]) },
                SurfaceSpec { faces: vec![CubeFace::YPlus], value: s(["0", "0", "0.3*cos(pi*x3)", "0"]) },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_evaluate() {
        let e = ScalarExpr::parse("2*x1 - x2^2 + sin(pi*x3)").unwrap();
        let x = Point::new(0.5, 2.0, 0.5);
        assert!((e.eval(&x) - (1.0 - 4.0 + 1.0)).abs() < 1e-14);
        assert!(ScalarExpr::parse("foo(x1)").is_err());
        assert!(ScalarExpr::parse("x4 + 1").is_err());
        assert!(ScalarExpr::parse("1 +").is_err());
    }

    #[test]
    fn spec_and_closure_defaults_agree() {
        let a = LoadSet::default_test();
        let b = LoadSpec::default_test().build().unwrap();
        for x in [Point::new(0.5, 0.1, -0.2), Point::new(0.3, 0.5, 0.25), Point::new(0.0, 0.2, 0.5)] {
            for f in CubeFace::ALL {
                assert!((a.surface_at(f, &x) - b.surface_at(f, &x)).norm() < 1e-14);
            }
            assert!((a.volume.eval(&x) - b.volume.eval(&x)).norm() < 1e-14);
        }
    }

    #[test]
    fn split_recombines() {
        let l = LoadSet::default_test();
        let s = LoadSet::combination(&[(1.0, &l.mechanical_part()), (1.0, &l.electric_part())]);
        let x = Point::new(0.5, 0.3, 0.1);
        assert!((s.surface_at(CubeFace::XPlus, &x) - l.surface_at(CubeFace::XPlus, &x)).norm() < 1e-15);
    }
}
