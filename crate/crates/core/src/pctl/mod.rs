//! PCTL over action atoms: syntax tree, text syntax, derived operators.

mod ast;
mod parser;

use std::collections::BTreeSet;

pub use ast::{Bound, Comparator, PathFormula, StateFormula};
pub use parser::{
    parse_formula, parse_formula_lines, parse_formula_raw, ParseError, ParseErrorKind,
};

/// Removes `F` and `G` sugar.
///
/// `F<=k φ` becomes `true U<=k φ`. For always, `P⋈p [ G<=k φ ]` becomes
/// `P⋈' 1-p [ F<=k !φ ]` with the comparator flipped, since
/// `Prob(G φ) = 1 - Prob(F !φ)` under every policy.
pub fn rewrite_derived(f: &StateFormula) -> StateFormula {
    match f {
        StateFormula::True | StateFormula::Action(_) => f.clone(),
        StateFormula::Not(inner) => StateFormula::not(rewrite_derived(inner)),
        StateFormula::And(l, r) => StateFormula::and(rewrite_derived(l), rewrite_derived(r)),
        StateFormula::Prob {
            cmp,
            threshold,
            path,
        } => match path.as_ref() {
            PathFormula::Next(body) => {
                StateFormula::prob(*cmp, *threshold, PathFormula::Next(rewrite_derived(body)))
            }
            PathFormula::Until { left, bound, right } => StateFormula::prob(
                *cmp,
                *threshold,
                PathFormula::until(rewrite_derived(left), *bound, rewrite_derived(right)),
            ),
            PathFormula::Eventually { bound, body } => StateFormula::prob(
                *cmp,
                *threshold,
                PathFormula::until(StateFormula::True, *bound, rewrite_derived(body)),
            ),
            PathFormula::Always { bound, body } => StateFormula::prob(
                cmp.flipped(),
                1.0 - *threshold,
                PathFormula::until(
                    StateFormula::True,
                    *bound,
                    StateFormula::not(rewrite_derived(body)),
                ),
            ),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormulaMetrics {
    /// Number of operators (`!`, `&`, `P`, `X`, `U`), at least 1.
    pub length: usize,
    /// Largest finite until bound, or 1 when there is none.
    pub max_bound: u64,
}

pub fn formula_metrics(f: &StateFormula) -> FormulaMetrics {
    fn walk(f: &StateFormula, ops: &mut usize, bound: &mut Option<u64>) {
        match f {
            StateFormula::True | StateFormula::Action(_) => {}
            StateFormula::Not(inner) => {
                *ops += 1;
                walk(inner, ops, bound);
            }
            StateFormula::And(l, r) => {
                *ops += 1;
                walk(l, ops, bound);
                walk(r, ops, bound);
            }
            StateFormula::Prob { path, .. } => {
                *ops += 2;
                match path.as_ref() {
                    PathFormula::Next(body) => walk(body, ops, bound),
                    PathFormula::Until {
                        left,
                        bound: b,
                        right,
                    } => {
                        if let Bound::Steps(k) = b {
                            *bound = Some(bound.map_or(*k, |m| m.max(*k)));
                        }
                        walk(left, ops, bound);
                        walk(right, ops, bound);
                    }
                    PathFormula::Eventually { bound: b, body }
                    | PathFormula::Always { bound: b, body } => {
                        if let Bound::Steps(k) = b {
                            *bound = Some(bound.map_or(*k, |m| m.max(*k)));
                        }
                        walk(body, ops, bound);
                    }
                }
            }
        }
    }
    let mut ops = 0;
    let mut bound = None;
    walk(f, &mut ops, &mut bound);
    FormulaMetrics {
        length: ops.max(1),
        max_bound: bound.unwrap_or(1),
    }
}

/// All action labels used as atoms.
pub fn atoms_of(f: &StateFormula) -> BTreeSet<String> {
    fn walk(f: &StateFormula, out: &mut BTreeSet<String>) {
        match f {
            StateFormula::True => {}
            StateFormula::Action(a) => {
                out.insert(a.clone());
            }
            StateFormula::Not(inner) => walk(inner, out),
            StateFormula::And(l, r) => {
                walk(l, out);
                walk(r, out);
            }
            StateFormula::Prob { path, .. } => match path.as_ref() {
                PathFormula::Next(b)
                | PathFormula::Eventually { body: b, .. }
                | PathFormula::Always { body: b, .. } => walk(b, out),
                PathFormula::Until { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            },
        }
    }
    let mut out = BTreeSet::new();
    walk(f, &mut out);
    out
}
