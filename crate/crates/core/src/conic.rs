//! Solver-agnostic second-order cone programs and the Clarabel backend.
//!
//! A problem maximizes `objective · x + objective_constant` over real
//! variables `x` subject to cone constraints built from affine rows
//! `a · x + c`.  A `NonNeg` constraint asks each row to be `≥ 0`; a `Soc`
//! constraint asks `rows[0] ≥ ‖rows[1..]‖`.
//!
//! Complex variables occupy interleaved `(re, im)` pairs.
//!
//! # Dump format
//!
//! [`ConicProblem::to_dump`] writes one record per line, fields separated by
//! single spaces, floats in Rust's shortest round-trip form:
//!
//! ```text
//! conic-problem v1
//! label <label>
//! vars <n>
//! block <name> <role> <offset> <len> <scale>      (one per block, in order)
//! objective <constant> <nnz> <idx>:<coef> ...
//! constraints <count>
//! cone <nonneg|soc> <rows> <label>                (then <rows> row lines)
//! row <constant> <nnz> <idx>:<coef> ...
//! end
//! ```
//!
//! Labels and block names must not contain whitespace.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// Tolerance requested from the backend.
pub const SOLVER_TOL: f64 = 1e-8;
/// Tolerance enforced when re-checking a returned point.
pub const REVALIDATION_TOL: f64 = 1e-6;

/// Affine function `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: vec![], constant: c }
    }

    pub fn var(idx: usize, coef: f64) -> Self {
        Self { terms: vec![(idx, coef)], constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }

    pub fn add_term(&mut self, idx: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((idx, coef));
        }
        self
    }

    pub fn add(&mut self, other: &LinExpr, factor: f64) -> &mut Self {
        for &(i, a) in &other.terms {
            self.add_term(i, a * factor);
        }
        self.constant += other.constant * factor;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = LinExpr::default();
        out.add(self, factor);
        out
    }

    /// `Re{c^H z}` for a complex variable block at `offset`.
    pub fn add_re_inner(&mut self, c: &CVec, offset: usize) -> &mut Self {
        for (i, ci) in c.iter().enumerate() {
            self.add_term(offset + 2 * i, ci.re);
            self.add_term(offset + 2 * i + 1, ci.im);
        }
        self
    }

    /// Merge repeated indices and drop zeros.
    pub fn compact(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, a) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => out.push((i, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }
}

/// Real and imaginary rows of `M z + b` for a complex block `z` at `offset`.
pub fn complex_rows(m: &CMat, offset: usize, b: Option<&CVec>) -> Vec<LinExpr> {
    let mut rows = Vec::with_capacity(2 * m.nrows());
    for i in 0..m.nrows() {
        let mut re = LinExpr::default();
        let mut im = LinExpr::default();
        for j in 0..m.ncols() {
            let a = m[(i, j)];
            re.add_term(offset + 2 * j, a.re).add_term(offset + 2 * j + 1, -a.im);
            im.add_term(offset + 2 * j, a.im).add_term(offset + 2 * j + 1, a.re);
        }
        if let Some(b) = b {
            re.constant = b[i].re;
            im.constant = b[i].im;
        }
        rows.push(re);
        rows.push(im);
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    NonNeg,
    Soc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeConstraint {
    pub kind: ConeKind,
    pub label: String,
    pub rows: Vec<LinExpr>,
}

impl ConeConstraint {
    /// How far `x` is outside the cone (0 when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self.kind {
            ConeKind::NonNeg => self.rows.iter().map(|r| (-r.eval(x)).max(0.0)).fold(0.0, f64::max),
            ConeKind::Soc => {
                let t = self.rows[0].eval(x);
                let v: f64 = self.rows[1..].iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt();
                (v - t).max(0.0)
            }
        }
    }
}

/// What a variable block stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    /// Stacked precoder/phase variable `ψ` (complex).
    Psi,
    /// Absorptive combiner `u` (complex).
    Combiner,
    /// Majorant slacks `δ`, `χ`.
    Slack,
    /// Feasibility slacks `λ̄`.
    Feasibility,
    /// Epigraph or auxiliary bound variables.
    Auxiliary,
}

impl VarRole {
    fn as_str(self) -> &'static str {
        match self {
            VarRole::Psi => "psi",
            VarRole::Combiner => "combiner",
            VarRole::Slack => "slack",
            VarRole::Feasibility => "feasibility",
            VarRole::Auxiliary => "auxiliary",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "psi" => VarRole::Psi,
            "combiner" => VarRole::Combiner,
            "slack" => VarRole::Slack,
            "feasibility" => VarRole::Feasibility,
            "auxiliary" => VarRole::Auxiliary,
            _ => return None,
        })
    }
}

/// A named run of variables; the modelled quantity is `scale · x[offset..offset+len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBlock {
    pub name: String,
    pub role: VarRole,
    pub offset: usize,
    pub len: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProblem {
    pub label: String,
    pub num_vars: usize,
    /// Maximized.
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<ConeConstraint>,
    pub blocks: Vec<VarBlock>,
}

impl ConicProblem {
    pub fn new(label: &str) -> Self {
        Self { label: label.to_string(), ..Default::default() }
    }

    /// Append a block of `len` real variables and return its offset.
    pub fn add_block(&mut self, name: &str, role: VarRole, len: usize, scale: f64) -> usize {
        let offset = self.num_vars;
        self.blocks.push(VarBlock { name: name.to_string(), role, offset, len, scale });
        self.num_vars += len;
        self.objective.resize(self.num_vars, 0.0);
        offset
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn add_objective(&mut self, expr: &LinExpr, factor: f64) {
        for &(i, a) in &expr.terms {
            self.objective[i] += a * factor;
        }
        self.objective_constant += expr.constant * factor;
    }

    pub fn add_nonneg(&mut self, label: &str, rows: Vec<LinExpr>) {
        self.constraints.push(ConeConstraint { kind: ConeKind::NonNeg, label: label.to_string(), rows });
    }

    /// `‖v‖ ≤ t`.
    pub fn add_soc(&mut self, label: &str, t: LinExpr, v: Vec<LinExpr>) {
        let mut rows = Vec::with_capacity(v.len() + 1);
        rows.push(t);
        rows.extend(v);
        self.constraints.push(ConeConstraint { kind: ConeKind::Soc, label: label.to_string(), rows });
    }

    /// `‖v‖² ≤ s`, as `‖(v, (s−1)/2)‖ ≤ (s+1)/2`.
    pub fn add_squared_norm_bound(&mut self, label: &str, v: Vec<LinExpr>, s: &LinExpr) {
        let mut top = s.scaled(0.5);
        top.constant += 0.5;
        let mut first = s.scaled(0.5);
        first.constant -= 0.5;
        let mut rows = Vec::with_capacity(v.len() + 1);
        rows.push(first);
        rows.extend(v);
        self.add_soc(label, top, rows);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.objective_constant
    }

    /// Largest violation over all constraints, with the label of the worst one.
    pub fn max_violation(&self, x: &[f64]) -> (f64, Option<&str>) {
        let mut worst = (0.0, None);
        for c in &self.constraints {
            let v = c.violation(x);
            if v > worst.0 {
                worst = (v, Some(c.label.as_str()));
            }
        }
        worst
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.rows.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("problem '{}': {m}", self.label)));
        if self.objective.len() != self.num_vars {
            return bad("objective length differs from variable count".into());
        }
        let mut covered = vec![0u8; self.num_vars];
        for b in &self.blocks {
            if b.offset + b.len > self.num_vars {
                return bad(format!("block '{}' exceeds variable count", b.name));
            }
            for c in &mut covered[b.offset..b.offset + b.len] {
                *c += 1;
            }
        }
        if covered.iter().any(|&c| c != 1) {
            return bad("blocks must cover every variable exactly once".into());
        }
        for c in &self.constraints {
            if c.rows.is_empty() || (c.kind == ConeKind::Soc && c.rows.len() < 2) {
                return bad(format!("cone '{}' has too few rows", c.label));
            }
            if c.rows.iter().flat_map(|r| &r.terms).any(|&(i, a)| i >= self.num_vars || !a.is_finite()) {
                return bad(format!("cone '{}' has an invalid term", c.label));
            }
        }
        Ok(())
    }

    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let terms = |s: &mut String, t: &[(usize, f64)]| {
            let _ = write!(s, " {}", t.len());
            for (i, a) in t {
                let _ = write!(s, " {i}:{a:?}");
            }
        };
        let _ = writeln!(s, "conic-problem v1\nlabel {}\nvars {}", self.label, self.num_vars);
        for b in &self.blocks {
            let _ = writeln!(s, "block {} {} {} {} {:?}", b.name, b.role.as_str(), b.offset, b.len, b.scale);
        }
        let obj: Vec<(usize, f64)> =
            self.objective.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, a)| (i, *a)).collect();
        let _ = write!(s, "objective {:?}", self.objective_constant);
        terms(&mut s, &obj);
        let _ = writeln!(s, "\nconstraints {}", self.constraints.len());
        for c in &self.constraints {
            let kind = match c.kind {
                ConeKind::NonNeg => "nonneg",
                ConeKind::Soc => "soc",
            };
            let _ = writeln!(s, "cone {kind} {} {}", c.rows.len(), c.label);
            for r in &c.rows {
                let _ = write!(s, "row {:?}", r.constant);
                terms(&mut s, &r.terms);
                s.push('\n');
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let err = |m: &str| Error::InvalidArgument(format!("dump: {m}"));
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| err("unexpected end"));
        let num = |t: Option<&str>| -> Result<f64> {
            t.and_then(|v| v.parse().ok()).ok_or_else(|| err("bad number"))
        };
        let idx = |t: Option<&str>| -> Result<usize> {
            t.and_then(|v| v.parse().ok()).ok_or_else(|| err("bad integer"))
        };
        let parse_terms = |f: &mut std::str::SplitWhitespace| -> Result<Vec<(usize, f64)>> {
            let n = idx(f.next())?;
            (0..n)
                .map(|_| {
                    let (i, a) = f.next().and_then(|t| t.split_once(':')).ok_or_else(|| err("bad term"))?;
                    Ok((idx(Some(i))?, num(Some(a))?))
                })
                .collect()
        };
        if next()? != "conic-problem v1" {
            return Err(err("missing header"));
        }
        let label = next()?.strip_prefix("label ").ok_or_else(|| err("missing label"))?.to_string();
        let num_vars = idx(next()?.strip_prefix("vars "))?;
        let mut p = ConicProblem { label, num_vars, objective: vec![0.0; num_vars], ..Default::default() };
        loop {
            let line = next()?;
            let mut f = line.split_whitespace();
            match f.next() {
                Some("block") => {
                    let name = f.next().ok_or_else(|| err("block name"))?.to_string();
                    let role = f.next().and_then(VarRole::parse).ok_or_else(|| err("block role"))?;
                    let (offset, len, scale) = (idx(f.next())?, idx(f.next())?, num(f.next())?);
                    p.blocks.push(VarBlock { name, role, offset, len, scale });
                }
                Some("objective") => {
                    p.objective_constant = num(f.next())?;
                    for (i, a) in parse_terms(&mut f)? {
                        *p.objective.get_mut(i).ok_or_else(|| err("objective index"))? = a;
                    }
                    break;
                }
                _ => return Err(err("expected block or objective")),
            }
        }
        let count = idx(next()?.strip_prefix("constraints "))?;
        for _ in 0..count {
            let line = next()?;
            let mut f = line.split_whitespace();
            if f.next() != Some("cone") {
                return Err(err("expected cone"));
            }
            let kind = match f.next() {
                Some("nonneg") => ConeKind::NonNeg,
                Some("soc") => ConeKind::Soc,
                _ => return Err(err("cone kind")),
            };
            let n = idx(f.next())?;
            let label = f.next().unwrap_or("").to_string();
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let line = next()?;
                let mut f = line.split_whitespace();
                if f.next() != Some("row") {
                    return Err(err("expected row"));
                }
                let constant = num(f.next())?;
                rows.push(LinExpr { terms: parse_terms(&mut f)?, constant });
            }
            p.constraints.push(ConeConstraint { kind, label, rows });
        }
        if next()? != "end" {
            return Err(err("missing end"));
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Raw solver variables (unscaled).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest constraint violation found when re-checking `x`.
    pub max_violation: f64,
    pub iterations: u32,
}

impl SolveResult {
    /// Values of a block with its scale applied.
    pub fn values(&self, problem: &ConicProblem, name: &str) -> Option<Vec<f64>> {
        let b = problem.block(name)?;
        Some(self.x[b.offset..b.offset + b.len].iter().map(|v| v * b.scale).collect())
    }

    /// Complex values of an interleaved block, scale applied.
    pub fn complex_values(&self, problem: &ConicProblem, name: &str) -> Option<CVec> {
        let v = self.values(problem, name)?;
        Some(CVec::from_iterator(v.len() / 2, v.chunks(2).map(|p| C64::new(p[0], p[1]))))
    }

    /// `Ok(self)` when optimal, otherwise the status tagged with the problem label.
    pub fn require_optimal(self, problem: &ConicProblem) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            status => Err(Error::Solver { status, label: problem.label.clone() }),
        }
    }
}

fn to_clarabel(p: &ConicProblem) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let m = p.num_rows();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.num_vars];
    let mut b = Vec::with_capacity(m);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0;
    for c in &p.constraints {
        for r in &c.rows {
            let mut r = r.clone();
            r.compact();
            for &(i, a) in &r.terms {
                cols[i].push((row, -a));
            }
            b.push(r.constant);
            row += 1;
        }
        match (c.kind, cones.last_mut()) {
            (ConeKind::NonNeg, Some(SupportedConeT::NonnegativeConeT(n))) => *n += c.rows.len(),
            (ConeKind::NonNeg, _) => cones.push(SupportedConeT::NonnegativeConeT(c.rows.len())),
            (ConeKind::Soc, _) => cones.push(SupportedConeT::SecondOrderConeT(c.rows.len())),
        }
    }
    let mut colptr = Vec::with_capacity(p.num_vars + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in cols {
        for (r, a) in col {
            rowval.push(r);
            nzval.push(a);
        }
        colptr.push(rowval.len());
    }
    (CscMatrix::new(m, p.num_vars, colptr, rowval, nzval), b, cones)
}

/// Solve with Clarabel and re-check the answer against the problem description.
pub fn solve(problem: &ConicProblem) -> Result<SolveResult> {
    problem.validate()?;
    let (a, b, cones) = to_clarabel(problem);
    let n = problem.num_vars;
    let p = CscMatrix::zeros((n, n));
    let q: Vec<f64> = problem.objective.iter().map(|c| -c).collect();
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(SOLVER_TOL)
        .tol_gap_rel(SOLVER_TOL)
        .tol_feas(SOLVER_TOL)
        .max_iter(200)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("solver settings: {e}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::InvalidArgument(format!("problem '{}': {e}", problem.label)))?;
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let finite = x.iter().all(|v| v.is_finite());
    let (max_violation, _) = if finite { problem.max_violation(&x) } else { (f64::INFINITY, None) };
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved if max_violation <= REVALIDATION_TOL => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::NumericalFailure,
    };
    Ok(SolveResult {
        status,
        objective: if finite { problem.objective_value(&x) } else { f64::NAN },
        x,
        max_violation,
        iterations: sol.iterations,
    })
}
