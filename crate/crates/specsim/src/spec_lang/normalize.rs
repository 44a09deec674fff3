//! Formula normalization and decomposition: negation normal form, splitting
//! disjunctions into mutually exclusive cases, and separating a root
//! implication into precondition and postcondition.

use super::ast::Formula;

/// Rewrite to negation normal form: no implications remain and negation
/// applies only to atomic propositions. Temporal operators are preserved;
/// negation is pushed through them by duality, with the strong next `X`
/// flipping to the weak next `WX` and vice versa so finite-trace semantics
/// are preserved at the last frame. `¬(a U b)` becomes
/// `G ¬b || (¬b U (¬a && ¬b))`.
pub fn normalize(f: &Formula) -> Formula {
    norm(f, false)
}

fn norm(f: &Formula, negated: bool) -> Formula {
    match f {
        Formula::Ap(name) => {
            if negated {
                Formula::not(Formula::Ap(name.clone()))
            } else {
                Formula::Ap(name.clone())
            }
        }
        Formula::Not(g) => norm(g, !negated),
        Formula::And(a, b) => {
            if negated {
                Formula::or(norm(a, true), norm(b, true))
            } else {
                Formula::and(norm(a, false), norm(b, false))
            }
        }
        Formula::Or(a, b) => {
            if negated {
                Formula::and(norm(a, true), norm(b, true))
            } else {
                Formula::or(norm(a, false), norm(b, false))
            }
        }
        Formula::Implies(a, b) => {
            if negated {
                Formula::and(norm(a, false), norm(b, true))
            } else {
                Formula::or(norm(a, true), norm(b, false))
            }
        }
        Formula::Next(g) => {
            if negated {
                Formula::WeakNext(Box::new(norm(g, true)))
            } else {
                Formula::next(norm(g, false))
            }
        }
        Formula::WeakNext(g) => {
            if negated {
                Formula::next(norm(g, true))
            } else {
                Formula::WeakNext(Box::new(norm(g, false)))
            }
        }
        Formula::Eventually(g) => {
            if negated {
                Formula::globally(norm(g, true))
            } else {
                Formula::eventually(norm(g, false))
            }
        }
        Formula::Globally(g) => {
            if negated {
                Formula::eventually(norm(g, true))
            } else {
                Formula::globally(norm(g, false))
            }
        }
        Formula::Until(a, b) => {
            if negated {
                let nb = norm(b, true);
                Formula::or(
                    Formula::globally(nb.clone()),
                    Formula::until(nb.clone(), Formula::and(norm(a, true), nb)),
                )
            } else {
                Formula::until(norm(a, false), norm(b, false))
            }
        }
    }
}

/// Split every disjunction reachable through conjunctions and `X` into three
/// mutually exclusive cases: `a && !b`, `!a && b`, and `a && b`, recursively.
/// The input must be normalized. The outputs are pairwise mutually exclusive
/// and their disjunction is equivalent to the input. Disjunctions under `F`,
/// `G`, or `U` are left in place: splitting there would break mutual
/// exclusivity. The inserted exclusion negations are normalized but not split
/// further; recursing into them would not terminate, because negating an
/// until introduces a fresh disjunction around a larger until.
pub fn split_disjunctions(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::Or(a, b) => {
            let cases_a = split_disjunctions(a);
            let cases_b = split_disjunctions(b);
            let not_a = normalize(&Formula::not((**a).clone()));
            let not_b = normalize(&Formula::not((**b).clone()));
            let mut out: Vec<Formula> = cases_a
                .iter()
                .map(|ca| Formula::and(ca.clone(), not_b.clone()))
                .collect();
            out.extend(cases_b.iter().map(|cb| Formula::and(not_a.clone(), cb.clone())));
            for ca in &cases_a {
                for cb in &cases_b {
                    out.push(Formula::and(ca.clone(), cb.clone()));
                }
            }
            out
        }
        Formula::And(a, b) => {
            let left = split_disjunctions(a);
            let right = split_disjunctions(b);
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    out.push(Formula::and(l.clone(), r.clone()));
                }
            }
            out
        }
        Formula::Next(a) => split_disjunctions(a).into_iter().map(Formula::next).collect(),
        _ => vec![f.clone()],
    }
}

/// Split a specification into precondition and postcondition: if the root
/// (before any normalization) is an implication, its operands are returned;
/// nested implications stay inside the operands.
pub fn decompose_pre_post(f: &Formula) -> (Formula, Option<Formula>) {
    match f {
        Formula::Implies(a, b) => ((**a).clone(), Some((**b).clone())),
        other => (other.clone(), None),
    }
}
