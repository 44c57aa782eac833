//! Code-size accounting for the instrumentation strategies. The broad and
//! narrow single-store schemes cost one added instruction per exported site;
//! the conventional scheme is modelled at two per site (address
//! materialisation plus the store) even though the emitted code carries one,
//! so its size column reflects the scheme being compared against.

use super::instrument::{export_count, instrument};
use super::{Strategy, ToyIsaError, ToyProgram};

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMetrics {
    pub strategy: Strategy,
    pub lib_instrumentation: bool,
    pub original_instructions: usize,
    pub original_bytes: usize,
    /// Exported access sites.
    pub sites: usize,
    /// Added instructions under the strategy's cost model.
    pub added_instructions: usize,
    /// Modelled instrumented size: original plus four bytes per added
    /// instruction.
    pub code_size_bytes: usize,
    /// `added_instructions * 4 / original_bytes`, as a percentage.
    pub overhead_percent: f64,
}

/// Measures an instrumented program against the original it claims to come
/// from. Fails when `instrumented` is not exactly `instrument(original)`
/// under its recorded strategy and ablation flag.
pub fn measure(
    original: &ToyProgram,
    instrumented: &ToyProgram,
) -> Result<StrategyMetrics, ToyIsaError> {
    let tag = instrumented.instrumented_with.ok_or_else(|| ToyIsaError::MismatchedOrigin {
        reason: "program carries no instrumentation record".into(),
    })?;
    let expected = instrument(original, tag.strategy, tag.lib_instrumentation);
    if expected.instrs != instrumented.instrs
        || expected.base != instrumented.base
        || expected.init_regs != instrumented.init_regs
    {
        return Err(ToyIsaError::MismatchedOrigin {
            reason: format!(
                "program does not match the original instrumented with '{}'",
                tag.strategy
            ),
        });
    }

    let sites = export_count(instrumented);
    let added_instructions = sites * tag.strategy.added_per_site();
    let original_bytes = original.code_bytes();
    let overhead_percent = if original_bytes == 0 {
        0.0
    } else {
        (added_instructions as f64) * 4.0 * 100.0 / (original_bytes as f64)
    };
    Ok(StrategyMetrics {
        strategy: tag.strategy,
        lib_instrumentation: tag.lib_instrumentation,
        original_instructions: original.len(),
        original_bytes,
        sites,
        added_instructions,
        code_size_bytes: original_bytes + added_instructions * 4,
        overhead_percent,
    })
}

/// Instruments `original` under every strategy and measures each result.
pub fn strategy_table(
    original: &ToyProgram,
    lib_instrumentation: bool,
) -> Result<Vec<StrategyMetrics>, ToyIsaError> {
    Strategy::ALL
        .into_iter()
        .map(|s| measure(original, &instrument(original, s, lib_instrumentation)))
        .collect()
}
