//! Constructed resource counts per formula id, for side-by-side bound checks.

use crate::arith::{build_modular_adder, build_single_bit_csa, build_toffoli, ArithError};
use crate::comm::{build_bell_measure, build_fanout, build_teleport, build_unfanout, CommError};
use crate::formulas::{self, BoundCheck, FormulaError, FormulaId};
use crate::model::ResourceReport;
use crate::modexp::{estimate_modexp_constructed, qcla_conversion_resources};
use crate::mult::{
    build_multiplier_symbolic, build_partial_products, mma_stage_count, plan_partial_products, MultError, Variant,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Mult(#[from] MultError),
}

/// Largest odd modulus below 2^n; the default when none is given.
pub fn default_modulus(n: usize) -> u64 {
    (1u64 << n.min(62)) - 1
}

/// Counted or rolled-up resources of the block behind `id`. For channels n is
/// the chain length; the fixed-size gadgets ignore it.
pub fn constructed(id: FormulaId, n: usize, m: Option<u64>) -> Result<Option<ResourceReport>, EstimateError> {
    let m = m.unwrap_or_else(|| default_modulus(n));
    Ok(Some(match id {
        FormulaId::Bell => build_bell_measure([0, 0], [1, 0])?.resources(),
        FormulaId::Teleport => build_teleport(n)?.resources(),
        FormulaId::Fanout => build_fanout(n)?.resources(),
        FormulaId::Unfanout => build_unfanout(n)?.resources(),
        FormulaId::Toffoli => build_toffoli().resources(),
        FormulaId::SingleBitCsa => build_single_bit_csa().resources(),
        FormulaId::ModularAdder => build_modular_adder(n, m)?.circuit.count_resources(),
        FormulaId::Ppc => build_partial_products(&plan_partial_products(n, m, Variant::Parallel, None)?)?.resources(),
        FormulaId::Mm => build_multiplier_symbolic(n, m)?.resources(),
        FormulaId::Qcla => qcla_conversion_resources(n),
        FormulaId::Modexp => estimate_modexp_constructed(n, formulas::ksv_t(n as u64) as usize)?,
        _ => return Ok(None),
    }))
}

/// Constructed value of a scalar id: the planned t′ at n, or the stage count of
/// the built tree over n numbers.
pub fn constructed_scalar(id: FormulaId, n: usize, m: Option<u64>) -> Result<Option<u64>, EstimateError> {
    let m = m.unwrap_or_else(|| default_modulus(n));
    Ok(match id {
        FormulaId::TPrime => Some(plan_partial_products(n, m, Variant::Parallel, None)?.t_prime() as u64),
        FormulaId::MmaHeight => Some(mma_stage_count(n) as u64),
        _ => None,
    })
}

/// Formula against construction for a report-valued id.
pub fn check(id: FormulaId, n: usize, m: Option<u64>) -> Result<Option<BoundCheck>, EstimateError> {
    match constructed(id, n, m)? {
        Some(r) => Ok(Some(formulas::check_bounds(&r, id, n as u64)?)),
        None => Ok(None),
    }
}
