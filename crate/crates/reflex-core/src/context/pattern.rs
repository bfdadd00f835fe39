//! Pattern queries over the context model: existentially quantified
//! conjunctions of structural atoms, with a limited universal form for
//! post-state checks. Matching is closed-world and deterministic; when a
//! witness exists, the lexicographically smallest assignment is returned.

use std::collections::BTreeMap;

use super::ContextModel;

/// A pattern term: either a variable to solve for or a concrete element id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn cnst(id: impl Into<String>) -> Self {
        Term::Const(id.into())
    }

    fn resolve<'a>(&'a self, env: &'a BTreeMap<String, String>) -> Option<&'a str> {
        match self {
            Term::Const(id) => Some(id),
            Term::Var(name) => env.get(name).map(String::as_str),
        }
    }
}

/// One proposition of a pattern. Variables range over element ids; type
/// names and assumption names are always literal.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternAtom {
    IsComponent(Term),
    IsConnector(Term),
    ComponentTypeIs(Term, String),
    ConnectorTypeIs(Term, String),
    /// Both elements are components realized by the same service type.
    SameComponentType(Term, Term),
    Bound(Term, Term),
    /// Closed-world absence of a binding.
    NotBound(Term, Term),
    AssumptionTrue(String),
    Distinct(Term, Term),
}

impl PatternAtom {
    /// Evaluate with every variable resolved; `None` when a variable is
    /// still free.
    fn eval(&self, ctx: &ContextModel, env: &BTreeMap<String, String>) -> Option<bool> {
        let holds = match self {
            PatternAtom::IsComponent(a) => ctx.is_component(a.resolve(env)?),
            PatternAtom::IsConnector(a) => ctx.is_connector(a.resolve(env)?),
            PatternAtom::ComponentTypeIs(a, ty) => {
                ctx.component_type(a.resolve(env)?) == Some(ty.as_str())
            }
            PatternAtom::ConnectorTypeIs(a, ty) => {
                ctx.connector_type(a.resolve(env)?) == Some(ty.as_str())
            }
            PatternAtom::SameComponentType(a, b) => {
                let ta = ctx.component_type(a.resolve(env)?);
                ta.is_some() && ta == ctx.component_type(b.resolve(env)?)
            }
            PatternAtom::Bound(a, b) => ctx.bound(a.resolve(env)?, b.resolve(env)?),
            PatternAtom::NotBound(a, b) => !ctx.bound(a.resolve(env)?, b.resolve(env)?),
            PatternAtom::AssumptionTrue(name) => ctx.assumption_holds(name),
            PatternAtom::Distinct(a, b) => a.resolve(env)? != b.resolve(env)?,
        };
        Some(holds)
    }
}

/// `for var where guard holds, body must hold`. The guard is evaluated over
/// the current context, so the clause constrains present structure only.
#[derive(Debug, Clone, PartialEq)]
pub struct ForAllClause {
    pub var: String,
    pub guard: Vec<PatternAtom>,
    pub body: Vec<PatternAtom>,
}

/// An existential conjunction with optional universal clauses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pattern {
    /// Variables to solve for, in binding order.
    pub exists: Vec<String>,
    pub atoms: Vec<PatternAtom>,
    pub foralls: Vec<ForAllClause>,
}

impl Pattern {
    pub fn conjunction(atoms: Vec<PatternAtom>) -> Self {
        Pattern {
            exists: Vec::new(),
            atoms,
            foralls: Vec::new(),
        }
    }
}

/// True when the context satisfies the pattern.
pub fn entails(ctx: &ContextModel, pattern: &Pattern) -> bool {
    find_binding(ctx, pattern).is_some()
}

/// Solve the pattern, returning the lexicographically smallest witness for
/// the existential variables; `None` when the pattern does not hold.
pub fn find_binding(ctx: &ContextModel, pattern: &Pattern) -> Option<BTreeMap<String, String>> {
    let domain: Vec<String> = ctx.elements().map(str::to_owned).collect();
    let mut env = BTreeMap::new();
    solve(ctx, pattern, &domain, 0, &mut env)
}

fn solve(
    ctx: &ContextModel,
    pattern: &Pattern,
    domain: &[String],
    depth: usize,
    env: &mut BTreeMap<String, String>,
) -> Option<BTreeMap<String, String>> {
    if depth == pattern.exists.len() {
        // All variables bound: every atom must now evaluate, and hold.
        for atom in &pattern.atoms {
            if !atom.eval(ctx, env).unwrap_or(false) {
                return None;
            }
        }
        for clause in &pattern.foralls {
            if !check_forall(ctx, clause, domain, env) {
                return None;
            }
        }
        return Some(env.clone());
    }
    let var = &pattern.exists[depth];
    for candidate in domain {
        env.insert(var.clone(), candidate.clone());
        // Prune early: reject as soon as a fully-bound atom fails.
        let viable = pattern
            .atoms
            .iter()
            .all(|atom| atom.eval(ctx, env).unwrap_or(true));
        if viable {
            if let Some(witness) = solve(ctx, pattern, domain, depth + 1, env) {
                return Some(witness);
            }
        }
        env.remove(var);
    }
    None
}

fn check_forall(
    ctx: &ContextModel,
    clause: &ForAllClause,
    domain: &[String],
    env: &BTreeMap<String, String>,
) -> bool {
    for candidate in domain {
        let mut inner = env.clone();
        inner.insert(clause.var.clone(), candidate.clone());
        let guard_holds = clause
            .guard
            .iter()
            .all(|atom| atom.eval(ctx, &inner).unwrap_or(false));
        if guard_holds {
            let body_holds = clause
                .body
                .iter()
                .all(|atom| atom.eval(ctx, &inner).unwrap_or(false));
            if !body_holds {
                return false;
            }
        }
    }
    true
}
