//! Affine matrix-valued expressions over named decision variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LmiError;
use crate::ss::linalg::{self, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarShape {
    Symmetric(usize),
    Full(usize, usize),
}

impl VarShape {
    pub fn scalars(&self) -> usize {
        match *self {
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Symmetric(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
        }
    }
}

/// Handle to a declared variable; its scalars occupy `offset..offset + shape.scalars()`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Var {
    pub id: usize,
    pub offset: usize,
    pub shape: VarShape,
}

impl Var {
    pub fn is_scalar(&self) -> bool {
        self.shape == VarShape::Full(1, 1)
    }

    /// Matrix obtained by setting scalar `k` of this variable to one.
    pub fn basis(&self, k: usize) -> Mat {
        let (r, c) = self.shape.dims();
        let mut e = Mat::zeros(r, c);
        match self.shape {
            VarShape::Symmetric(n) => {
                let (i, j) = sym_index(n, k);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
            }
            VarShape::Full(r, _) => e[(k % r, k / r)] = 1.0,
        }
        e
    }

    /// Assemble the matrix value from the global solution vector.
    pub fn value(&self, x: &[f64]) -> Mat {
        let (r, c) = self.shape.dims();
        let mut m = Mat::zeros(r, c);
        for k in 0..self.shape.scalars() {
            m += self.basis(k) * x[self.offset + k];
        }
        m
    }

    /// Inverse of [`value`]: scalars of `m` in this variable's layout.
    pub fn scalars_of(&self, m: &Mat) -> Vec<f64> {
        match self.shape {
            VarShape::Symmetric(n) => (0..self.shape.scalars())
                .map(|k| {
                    let (i, j) = sym_index(n, k);
                    0.5 * (m[(i, j)] + m[(j, i)])
                })
                .collect(),
            VarShape::Full(..) => m.iter().copied().collect(),
        }
    }
}

/// Column-major upper triangle: k ↦ (i, j) with i ≤ j.
fn sym_index(n: usize, k: usize) -> (usize, usize) {
    let mut j = 0;
    let mut start = 0;
    while start + j + 1 <= k {
        start += j + 1;
        j += 1;
    }
    debug_assert!(j < n);
    (k - start, j)
}

/// constant + Σ_k x_k · coeff_k over the global scalar vector x.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineExpr {
    pub rows: usize,
    pub cols: usize,
    pub constant: Mat,
    pub coeffs: BTreeMap<usize, Mat>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, constant: Mat::zeros(rows, cols), coeffs: BTreeMap::new() }
    }

    pub fn constant(m: Mat) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), constant: m, coeffs: BTreeMap::new() }
    }

    fn from_map(v: &Var, rows: usize, cols: usize, f: impl Fn(&Mat) -> Mat) -> Self {
        let mut e = Self::zeros(rows, cols);
        for k in 0..v.shape.scalars() {
            let c = f(&v.basis(k));
            if c.iter().any(|&x| x != 0.0) {
                e.coeffs.insert(v.offset + k, c);
            }
        }
        e
    }

    /// L·V·R
    pub fn lr(left: &Mat, v: &Var, right: &Mat) -> Self {
        Self::from_map(v, left.nrows(), right.ncols(), |e| left * e * right)
    }

    /// L·Vᵀ·R
    pub fn lrt(left: &Mat, v: &Var, right: &Mat) -> Self {
        Self::from_map(v, left.nrows(), right.ncols(), |e| left * e.transpose() * right)
    }

    pub fn var(v: &Var) -> Self {
        let (r, c) = v.shape.dims();
        Self::lr(&Mat::identity(r, r), v, &Mat::identity(c, c))
    }

    /// s·M for a scalar variable s.
    pub fn scaled(v: &Var, m: &Mat) -> Self {
        assert!(v.is_scalar(), "scaled() needs a scalar variable");
        Self::from_map(v, m.nrows(), m.ncols(), |e| m * e[(0, 0)])
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            coeffs: self.coeffs.iter().map(|(&k, c)| (k, c.transpose())).collect(),
        }
    }

    /// X + Xᵀ
    pub fn he(&self) -> Self {
        self.add(&self.transpose())
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "affine add: shape mismatch");
        let mut out = self.clone();
        out.constant += &o.constant;
        for (&k, c) in &o.coeffs {
            out.coeffs.entry(k).and_modify(|m| *m += c).or_insert_with(|| c.clone());
        }
        out
    }

    pub fn add_const(&self, m: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * s,
            coeffs: self.coeffs.iter().map(|(&k, c)| (k, c * s)).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul_left(&self, l: &Mat) -> Self {
        Self {
            rows: l.nrows(),
            cols: self.cols,
            constant: l * &self.constant,
            coeffs: self.coeffs.iter().map(|(&k, c)| (k, l * c)).collect(),
        }
    }

    pub fn mul_right(&self, r: &Mat) -> Self {
        Self {
            rows: self.rows,
            cols: r.ncols(),
            constant: &self.constant * r,
            coeffs: self.coeffs.iter().map(|(&k, c)| (k, c * r)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (&k, c) in &self.coeffs {
            m += c * x[k];
        }
        m
    }

    pub fn max_var_index(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (&self.constant - self.constant.transpose()).norm() <= tol * (1.0 + self.constant.norm())
            && self.coeffs.values().all(|c| (c - c.transpose()).norm() <= tol * (1.0 + c.norm()))
    }
}

/// Lower-triangular block layout of a symmetric expression; blocks of size 0 vanish.
#[derive(Clone, Debug)]
pub struct BlockLmi {
    sizes: Vec<usize>,
    blocks: BTreeMap<(usize, usize), AffineExpr>,
}

impl BlockLmi {
    pub fn new(sizes: &[usize]) -> Self {
        Self { sizes: sizes.to_vec(), blocks: BTreeMap::new() }
    }

    /// Set block (i, j) with i ≥ j; the (j, i) block is its transpose.
    pub fn set(&mut self, i: usize, j: usize, e: AffineExpr) {
        assert!(i >= j, "only lower blocks are stored");
        assert_eq!((e.rows, e.cols), (self.sizes[i], self.sizes[j]), "block ({i},{j}) has the wrong shape");
        self.blocks.insert((i, j), e);
    }

    pub fn set_const(&mut self, i: usize, j: usize, m: Mat) {
        self.set(i, j, AffineExpr::constant(m));
    }

    pub fn build(&self) -> AffineExpr {
        let offs: Vec<usize> = self
            .sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let n: usize = self.sizes.iter().sum();
        let mut out = AffineExpr::zeros(n, n);
        let place = |dst: &mut Mat, src: &Mat, r: usize, c: usize| {
            if src.nrows() > 0 && src.ncols() > 0 {
                dst.view_mut((r, c), src.shape()).copy_from(src);
            }
        };
        for (&(i, j), e) in &self.blocks {
            let (ri, cj) = (offs[i], offs[j]);
            let mut lower = Mat::zeros(n, n);
            place(&mut lower, &e.constant, ri, cj);
            if i != j {
                place(&mut lower, &e.constant.transpose(), cj, ri);
            }
            out.constant += lower;
            for (&k, c) in &e.coeffs {
                let mut m = Mat::zeros(n, n);
                place(&mut m, c, ri, cj);
                if i != j {
                    place(&mut m, &c.transpose(), cj, ri);
                }
                out.coeffs.entry(k).and_modify(|x| *x += &m).or_insert(m);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// expr ≼ −δI
    NegDef,
    /// expr ≽ δI
    PosDef,
}

#[derive(Clone, Debug)]
pub struct LmiConstraint {
    pub name: String,
    pub expr: AffineExpr,
    pub sense: Sense,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarInfo {
    pub name: String,
    pub var: Var,
}

#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    pub vars: Vec<VarInfo>,
    pub constraints: Vec<LmiConstraint>,
    /// minimize Σ objective[k]·x_k
    pub objective: BTreeMap<usize, f64>,
    /// expressions kept for later constraints, e.g. "acl_q" = A·Q + B·F̂
    pub named: BTreeMap<String, AffineExpr>,
    n_scalars: usize,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> Var {
        assert!(self.var(name).is_none(), "variable {name} declared twice");
        let v = Var { id: self.vars.len(), offset: self.n_scalars, shape };
        self.n_scalars += shape.scalars();
        self.vars.push(VarInfo { name: name.to_string(), var: v });
        v
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarShape::Symmetric(n))
    }
    pub fn full(&mut self, name: &str, r: usize, c: usize) -> Var {
        self.declare(name, VarShape::Full(r, c))
    }
    pub fn scalar(&mut self, name: &str) -> Var {
        self.declare(name, VarShape::Full(1, 1))
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.vars.iter().find(|v| v.name == name).map(|v| v.var)
    }

    pub fn require(&self, name: &str) -> Result<Var, LmiError> {
        self.var(name).ok_or_else(|| LmiError::MissingVariable(name.to_string()))
    }

    pub fn add_constraint(&mut self, name: &str, expr: AffineExpr, sense: Sense, margin: f64) {
        if expr.rows == 0 {
            return;
        }
        self.constraints.push(LmiConstraint { name: name.to_string(), expr, sense, margin });
    }

    /// expr ≼ −δI
    pub fn neg_def(&mut self, name: &str, expr: AffineExpr, margin: f64) {
        self.add_constraint(name, expr, Sense::NegDef, margin);
    }

    /// expr ≽ δI
    pub fn pos_def(&mut self, name: &str, expr: AffineExpr, margin: f64) {
        self.add_constraint(name, expr, Sense::PosDef, margin);
    }

    /// v ≤ bound for a scalar variable.
    pub fn upper_bound(&mut self, v: &Var, bound: f64) {
        let e = AffineExpr::var(v).add_const(&Mat::from_element(1, 1, -bound));
        self.neg_def(&format!("bound_{}", v.id), e, 0.0);
    }

    pub fn minimize(&mut self, v: &Var) {
        assert!(v.is_scalar());
        self.objective.clear();
        self.objective.insert(v.offset, 1.0);
    }

    /// Copy with every constraint relaxed by a common slack t, minimizing t.
    /// The original problem is strictly feasible iff the optimum is below zero.
    pub fn phase_one(&self) -> (LmiProblem, Var) {
        let mut p = self.clone();
        p.named.clear();
        let t = p.scalar("phase_one_slack");
        for c in &mut p.constraints {
            let eye = Mat::identity(c.expr.rows, c.expr.rows);
            let shift = AffineExpr::scaled(&t, &eye);
            c.expr = match c.sense {
                Sense::NegDef => c.expr.sub(&shift),
                Sense::PosDef => c.expr.add(&shift),
            };
        }
        // t ≥ −1 keeps the relaxed problem bounded
        p.pos_def("phase_one_floor", AffineExpr::var(&t).add_const(&Mat::from_element(1, 1, 1.0)), 0.0);
        p.minimize(&t);
        (p, t)
    }

    /// Every constraint is square, symmetric and references declared scalars only.
    pub fn validate(&self) -> Result<(), LmiError> {
        for c in &self.constraints {
            if !c.expr.is_symmetric(1e-12) {
                return Err(LmiError::Malformed(format!("constraint {} is not symmetric", c.name)));
            }
            if c.expr.max_var_index().is_some_and(|k| k >= self.n_scalars) {
                return Err(LmiError::Malformed(format!("constraint {} references an undeclared variable", c.name)));
            }
        }
        if self.objective.keys().any(|&k| k >= self.n_scalars) {
            return Err(LmiError::Malformed("objective references an undeclared variable".into()));
        }
        Ok(())
    }

    /// Value of every variable at `x`, by name.
    pub fn values(&self, x: &[f64]) -> BTreeMap<String, Mat> {
        self.vars.iter().map(|v| (v.name.clone(), v.var.value(x))).collect()
    }

    /// Signed margin of each constraint at `x`: positive when satisfied.
    /// Uses the Jacobi-scaled matrix so margins are comparable across blocks.
    pub fn margins(&self, x: &[f64]) -> Vec<(String, f64)> {
        self.constraints
            .iter()
            .map(|c| {
                let m = c.expr.eval(x);
                let m = match c.sense {
                    Sense::NegDef => -m,
                    Sense::PosDef => m,
                };
                (c.name.clone(), jacobi_min_eig(&m))
            })
            .collect()
    }
}

/// λ_min(S M S) with S = diag(1/√|m_ii|) (unit entries where the diagonal vanishes).
pub fn jacobi_min_eig(m: &Mat) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let d = m[(i, i)].abs();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = Mat::from_fn(n, n, |i, j| s[i] * m[(i, j)] * s[j]);
    linalg::min_sym_eig(&scaled)
}
