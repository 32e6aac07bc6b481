use crate::{PolyExpr, ScalarAffine, SosError};
use polyalg::{monomial_basis, Monomial, ParityFilter, Polynomial, VarSet};
use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// One scalar decision variable per basis monomial.
    Free,
    /// A symmetric Gram matrix over the basis; lower-triangle entries are
    /// the decision variables and the matrix is constrained PSD.
    Sos,
}

/// What a decision is for. Only used for reporting program sizes; the
/// lowering treats all decisions identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionRole {
    /// A certificate object (V, barrier lift, controller, slack, scalar).
    Structural,
    /// A Positivstellensatz multiplier attached to a generator.
    Multiplier,
    /// The residual SOS block gamma_0 closing a membership identity.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DecisionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MembershipId(pub usize);

#[derive(Debug, Clone)]
pub struct PolyDecision {
    pub name: Arc<str>,
    pub kind: DecisionKind,
    pub role: DecisionRole,
    pub basis: Vec<Monomial>,
    pub varset: Arc<VarSet>,
    /// Scalar decision-variable handles owned by this decision.
    pub vars: Range<usize>,
}

impl PolyDecision {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Dimension of the polynomial coefficient space this object searches:
    /// basis size for free decisions, Gram lower-triangle size for SOS.
    pub fn coeff_dim(&self) -> usize {
        self.num_vars()
    }
}

/// One quadratic-module membership `target ∈ M(g_2, ..., g_n)`, recorded as
/// the identity `target = sum_i multiplier_i * g_i + gamma_0` with `gamma_0`
/// a fresh SOS residual block.
#[derive(Debug, Clone)]
pub struct Membership {
    pub label: String,
    pub target: PolyExpr,
    /// Fully-formed products multiplier_i * g_i.
    pub products: Vec<PolyExpr>,
    /// Decisions created for this membership (multipliers, then residual).
    pub owned: Vec<DecisionId>,
    pub residual: DecisionId,
    pub identity_degree: u32,
}

/// Generator with its multiplier policy.
pub struct GeneratorSpec {
    pub generator: PolyExpr,
    pub multiplier: MultiplierSpec,
}

pub enum MultiplierSpec {
    /// Fresh SOS multiplier of the given degree (generator must be fixed).
    NewSos { name: String, deg: u32 },
    /// Fresh free polynomial multiplier (generator must be fixed). Used for
    /// generators entering through equality constraints.
    NewFree { name: String, deg: u32 },
    /// Multiplier fixed to a known polynomial; the generator may then carry
    /// decision variables.
    Fixed(Polynomial),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub sense: Sense,
    pub linear: ScalarAffine,
}

/// Declarative SOS program: polynomial decisions, membership constraints,
/// scalar side constraints and a linear objective.
pub struct SosProgram {
    pub varset: Arc<VarSet>,
    pub decisions: Vec<PolyDecision>,
    by_name: BTreeMap<String, DecisionId>,
    pub memberships: Vec<Membership>,
    /// Scalar constraints `affine >= 0`.
    pub scalar_ineqs: Vec<(String, ScalarAffine)>,
    /// Scalar constraints `affine == 0`.
    pub scalar_eqs: Vec<(String, ScalarAffine)>,
    pub objective: Option<Objective>,
    next_var: usize,
}

impl SosProgram {
    pub fn new(varset: Arc<VarSet>) -> Self {
        SosProgram {
            varset,
            decisions: Vec::new(),
            by_name: BTreeMap::new(),
            memberships: Vec::new(),
            scalar_ineqs: Vec::new(),
            scalar_eqs: Vec::new(),
            objective: None,
            next_var: 0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.next_var
    }

    pub fn decision(&self, id: DecisionId) -> &PolyDecision {
        &self.decisions[id.0]
    }

    pub fn lookup(&self, name: &str) -> Result<DecisionId, SosError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| SosError::UnknownDecision(name.to_string()))
    }

    /// Register a polynomial decision over an explicit monomial basis.
    pub fn declare_poly(
        &mut self,
        name: &str,
        basis: Vec<Monomial>,
        kind: DecisionKind,
        role: DecisionRole,
    ) -> Result<DecisionId, SosError> {
        let vs = self.varset.clone();
        self.declare_poly_in(&vs, name, basis, kind, role)
    }

    /// Like [`declare_poly`] but over an explicit variable set (used by
    /// constraints on extended spaces, e.g. state x input variables).
    pub fn declare_poly_in(
        &mut self,
        varset: &Arc<VarSet>,
        name: &str,
        basis: Vec<Monomial>,
        kind: DecisionKind,
        role: DecisionRole,
    ) -> Result<DecisionId, SosError> {
        if basis.is_empty() {
            return Err(SosError::EmptyBasis(name.to_string()));
        }
        if self.by_name.contains_key(name) {
            return Err(SosError::DuplicateDecision(name.to_string()));
        }
        let n = basis.len();
        let nvars = match kind {
            DecisionKind::Free => n,
            DecisionKind::Sos => n * (n + 1) / 2,
        };
        let vars = self.next_var..self.next_var + nvars;
        self.next_var += nvars;
        let id = DecisionId(self.decisions.len());
        self.decisions.push(PolyDecision {
            name: Arc::from(name),
            kind,
            role,
            basis,
            varset: varset.clone(),
            vars,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Degree-based declaration over the program's ambient variables.
    pub fn declare_poly_deg(
        &mut self,
        name: &str,
        deg: u32,
        kind: DecisionKind,
        role: DecisionRole,
    ) -> Result<DecisionId, SosError> {
        let basis = match kind {
            DecisionKind::Free => monomial_basis(self.varset.dim(), deg, ParityFilter::All),
            // Gram basis of an SOS polynomial of degree <= deg.
            DecisionKind::Sos => {
                monomial_basis(self.varset.dim(), deg / 2, ParityFilter::All)
            }
        };
        self.declare_poly(name, basis, kind, role)
    }

    /// A single scalar decision (free, basis = {1}).
    pub fn declare_scalar(&mut self, name: &str) -> Result<DecisionId, SosError> {
        self.declare_poly(
            name,
            vec![Monomial::one(self.varset.dim())],
            DecisionKind::Free,
            DecisionRole::Structural,
        )
    }

    /// The expression for a declared decision.
    pub fn expr(&self, id: DecisionId) -> PolyExpr {
        let d = &self.decisions[id.0];
        let mut linear = BTreeMap::new();
        match d.kind {
            DecisionKind::Free => {
                for (k, m) in d.basis.iter().enumerate() {
                    linear.insert(
                        d.vars.start + k,
                        Polynomial::from_terms(d.varset.clone(), [(m.clone(), 1.0)]),
                    );
                }
            }
            DecisionKind::Sos => {
                // Column-major upper triangle (j outer, i <= j): matches the
                // svec layout of the PSD cone in the lowering.
                let mut k = 0;
                for j in 0..d.basis.len() {
                    for i in 0..=j {
                        let m = d.basis[i].mul(&d.basis[j]);
                        let w = if i == j { 1.0 } else { 2.0 };
                        linear.insert(
                            d.vars.start + k,
                            Polynomial::from_terms(d.varset.clone(), [(m, w)]),
                        );
                        k += 1;
                    }
                }
            }
        }
        PolyExpr {
            constant: Polynomial::zero(d.varset.clone()),
            linear,
            sources: vec![d.name.clone()],
        }
    }

    /// Scalar expression for a declared scalar decision.
    pub fn scalar_expr(&self, id: DecisionId) -> ScalarAffine {
        let d = &self.decisions[id.0];
        debug_assert_eq!(d.num_vars(), 1);
        ScalarAffine::var(d.vars.start)
    }

    /// Add `target ∈ M(generators)` with the given multiplier policies. The
    /// SOS residual gamma_0 is created automatically with degree equal to
    /// the identity degree (rounded up to even), unless overridden.
    pub fn add_membership(
        &mut self,
        label: &str,
        target: PolyExpr,
        generators: Vec<GeneratorSpec>,
        residual_deg_override: Option<u32>,
    ) -> Result<MembershipId, SosError> {
        // multipliers and the residual live over the target's variable set
        let mvs = target.varset().clone();
        let mdim = mvs.dim();
        let mut owned = Vec::new();
        let mut products = Vec::new();
        for (k, g) in generators.into_iter().enumerate() {
            let product = match g.multiplier {
                MultiplierSpec::Fixed(p) => g.generator.mul_poly(&p)?,
                MultiplierSpec::NewSos { name, deg } => {
                    if g.generator.has_decisions() {
                        return Err(SosError::DecisionGeneratorNeedsFixedMultiplier(
                            format!("{label}/gen{k}"),
                        ));
                    }
                    let basis = monomial_basis(mdim, deg / 2, ParityFilter::All);
                    let id = self.declare_poly_in(
                        &mvs,
                        &name,
                        basis,
                        DecisionKind::Sos,
                        DecisionRole::Multiplier,
                    )?;
                    owned.push(id);
                    self.expr(id).mul_poly(&g.generator.constant)?
                }
                MultiplierSpec::NewFree { name, deg } => {
                    if g.generator.has_decisions() {
                        return Err(SosError::DecisionGeneratorNeedsFixedMultiplier(
                            format!("{label}/gen{k}"),
                        ));
                    }
                    let basis = monomial_basis(mdim, deg, ParityFilter::All);
                    let id = self.declare_poly_in(
                        &mvs,
                        &name,
                        basis,
                        DecisionKind::Free,
                        DecisionRole::Multiplier,
                    )?;
                    owned.push(id);
                    self.expr(id).mul_poly(&g.generator.constant)?
                }
            };
            products.push(product);
        }
        let mut identity_degree = target.degree();
        for p in &products {
            identity_degree = identity_degree.max(p.degree());
        }
        // gamma_0 must have even degree; round the identity up if needed.
        let residual_deg = residual_deg_override.unwrap_or(identity_degree + identity_degree % 2);
        let identity_degree = identity_degree.max(residual_deg);
        let residual = self.declare_poly_in(
            &mvs,
            &format!("{label}/gamma0"),
            monomial_basis(mdim, residual_deg / 2, ParityFilter::All),
            DecisionKind::Sos,
            DecisionRole::Residual,
        )?;
        owned.push(residual);
        let id = MembershipId(self.memberships.len());
        self.memberships.push(Membership {
            label: label.to_string(),
            target,
            products,
            owned,
            residual,
            identity_degree,
        });
        Ok(id)
    }

    /// Scalar constraint `affine >= 0`.
    pub fn add_scalar_ineq(&mut self, label: &str, affine: ScalarAffine) {
        self.scalar_ineqs.push((label.to_string(), affine));
    }

    /// Scalar constraint `affine == 0`.
    pub fn add_scalar_eq(&mut self, label: &str, affine: ScalarAffine) {
        self.scalar_eqs.push((label.to_string(), affine));
    }

    pub fn set_objective(&mut self, sense: Sense, linear: ScalarAffine) {
        self.objective = Some(Objective { sense, linear });
    }

    /// Coefficient-space dimension searched by this program, split by role.
    /// This is the "number of SDP variables" reported for program-size
    /// comparisons: structural + multiplier decisions count, residual
    /// gamma_0 blocks are constraint apparatus and do not.
    pub fn searched_dims(&self) -> (usize, usize, usize) {
        let mut structural = 0;
        let mut multiplier = 0;
        let mut residual = 0;
        for d in &self.decisions {
            match d.role {
                DecisionRole::Structural => structural += d.coeff_dim(),
                DecisionRole::Multiplier => multiplier += d.coeff_dim(),
                DecisionRole::Residual => residual += d.coeff_dim(),
            }
        }
        (structural, multiplier, residual)
    }
}
