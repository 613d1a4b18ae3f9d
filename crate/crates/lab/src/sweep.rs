//! Cell-parallel Monte Carlo sweeps.
//!
//! Each cell draws from its own stream key, so the result is identical to the
//! sequential `ridge::sweep_cells` regardless of thread count or scheduling.

use rayon::prelude::*;
use storage_scaling_core::ridge::{self, CellResult, LambdaPolicy};
use storage_scaling_core::{Result, SpectrumConfig};

pub fn sweep_cells_parallel(
    config: &SpectrumConfig,
    n_list: &[usize],
    m_list: &[usize],
    policy: LambdaPolicy,
    replicates: usize,
    seed: u64,
) -> Result<Vec<CellResult>> {
    ridge::check_sweep(config, n_list, m_list)?;
    let cells: Vec<(usize, usize)> = (0..n_list.len())
        .flat_map(|ni| (0..m_list.len()).map(move |mi| (ni, mi)))
        .collect();
    // largest cells first so a slow tail does not serialize the pool
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&k| {
        let (ni, mi) = cells[k];
        std::cmp::Reverse(n_list[ni].min(config.q.pow(m_list[mi] as u32 + 1)))
    });
    let mut results: Vec<(usize, CellResult)> = order
        .into_par_iter()
        .map(|k| {
            let (ni, mi) = cells[k];
            let key = ridge::cell_key(seed, ni, mi);
            ridge::simulate_cell(config, n_list[ni], m_list[mi], policy, replicates, key).map(|c| (k, c))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|(k, _)| *k);
    Ok(results.into_iter().map(|(_, c)| c).collect())
}
