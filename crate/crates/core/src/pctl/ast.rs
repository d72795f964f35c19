use std::fmt;

/// Probability comparison `⋈` in `P⋈p[ψ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Gt,
    Le,
    Ge,
}

impl Comparator {
    /// The comparator used by the always/eventually duality (`<` ↔ `>`, `≤` ↔ `≥`).
    pub fn flipped(self) -> Self {
        match self {
            Comparator::Lt => Comparator::Gt,
            Comparator::Gt => Comparator::Lt,
            Comparator::Le => Comparator::Ge,
            Comparator::Ge => Comparator::Le,
        }
    }

    /// Lower-bound comparators (`>`, `≥`).
    pub fn is_lower_bound(self) -> bool {
        matches!(self, Comparator::Gt | Comparator::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
        }
    }

    /// Exact comparison `value ⋈ threshold`.
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Gt => value > threshold,
            Comparator::Le => value <= threshold,
            Comparator::Ge => value >= threshold,
        }
    }
}

/// Step bound of an until/eventually/always operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bound {
    Steps(u64),
    Unbounded,
}

impl Bound {
    pub fn steps(self) -> Option<u64> {
        match self {
            Bound::Steps(k) => Some(k),
            Bound::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateFormula {
    True,
    /// Holds at `s` iff the action is enabled at `s`.
    Action(String),
    Not(Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
    Prob {
        cmp: Comparator,
        threshold: f64,
        path: Box<PathFormula>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathFormula {
    Next(StateFormula),
    Until {
        left: StateFormula,
        bound: Bound,
        right: StateFormula,
    },
    /// Sugar, removed by [`super::rewrite_derived`].
    Eventually { bound: Bound, body: StateFormula },
    /// Sugar, removed by [`super::rewrite_derived`].
    Always { bound: Bound, body: StateFormula },
}

impl StateFormula {
    pub fn atom(label: &str) -> Self {
        StateFormula::Action(label.to_owned())
    }

    pub fn not(f: StateFormula) -> Self {
        StateFormula::Not(Box::new(f))
    }

    pub fn and(l: StateFormula, r: StateFormula) -> Self {
        StateFormula::And(Box::new(l), Box::new(r))
    }

    pub fn prob(cmp: Comparator, threshold: f64, path: PathFormula) -> Self {
        StateFormula::Prob {
            cmp,
            threshold,
            path: Box::new(path),
        }
    }

    /// True when no sugar node occurs anywhere in the formula.
    pub fn is_core(&self) -> bool {
        match self {
            StateFormula::True | StateFormula::Action(_) => true,
            StateFormula::Not(f) => f.is_core(),
            StateFormula::And(l, r) => l.is_core() && r.is_core(),
            StateFormula::Prob { path, .. } => match path.as_ref() {
                PathFormula::Next(f) => f.is_core(),
                PathFormula::Until { left, right, .. } => left.is_core() && right.is_core(),
                PathFormula::Eventually { .. } | PathFormula::Always { .. } => false,
            },
        }
    }
}

impl PathFormula {
    pub fn until(left: StateFormula, bound: Bound, right: StateFormula) -> Self {
        PathFormula::Until { left, bound, right }
    }
}

fn write_bound(f: &mut fmt::Formatter<'_>, op: &str, bound: Bound) -> fmt::Result {
    match bound {
        Bound::Steps(k) => write!(f, "{op}<={k}"),
        Bound::Unbounded => write!(f, "{op}"),
    }
}

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateFormula::True => write!(f, "true"),
            StateFormula::Action(a) => write!(f, "{a}"),
            StateFormula::Not(inner) => write!(f, "!{inner}"),
            StateFormula::And(l, r) => write!(f, "({l} & {r})"),
            StateFormula::Prob {
                cmp,
                threshold,
                path,
            } => write!(f, "P{}{} [ {} ]", cmp.symbol(), threshold, path),
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(body) => write!(f, "X {body}"),
            PathFormula::Until { left, bound, right } => {
                write!(f, "{left} ")?;
                write_bound(f, "U", *bound)?;
                write!(f, " {right}")
            }
            PathFormula::Eventually { bound, body } => {
                write_bound(f, "F", *bound)?;
                write!(f, " {body}")
            }
            PathFormula::Always { bound, body } => {
                write_bound(f, "G", *bound)?;
                write!(f, " {body}")
            }
        }
    }
}
