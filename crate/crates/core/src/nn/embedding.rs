use candle_core::{DType, Device, Tensor};

use super::ParamStore;
use crate::{Error, Result};

/// Builds a `u32` index tensor after checking every id is below `limit`.
pub fn ids_tensor(ids: &[u32], dims: &[usize], limit: usize, device: &Device) -> Result<Tensor> {
    if let Some(&bad) = ids.iter().find(|&&i| i as usize >= limit) {
        return Err(Error::IndexOutOfRange {
            index: bad as usize,
            limit,
        });
    }
    Ok(Tensor::from_slice(ids, dims, device)?)
}

/// Plain lookup table.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    table: Tensor,
    rows: usize,
    dim: usize,
}

impl EmbeddingTable {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, dim: usize) -> Result<Self> {
        let table = store.normal(name, &[rows, dim], 1.0 / (dim as f64).sqrt())?;
        Ok(Self { table, rows, dim })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Row lookup for an index tensor of any shape; output gains a trailing `dim` axis.
    pub fn lookup(&self, ids: &Tensor) -> Result<Tensor> {
        let mut dims = ids.dims().to_vec();
        let flat = self.table.embedding(&ids.flatten_all()?)?;
        dims.push(self.dim);
        Ok(flat.reshape(dims)?)
    }
}

/// Item table shared by target items and history items.
///
/// Row `num_items` is the padding row. It starts at zero and every lookup of
/// it is multiplied by zero, so it receives no gradient and stays zero.
#[derive(Clone, Debug)]
pub struct ItemEmbedding {
    inner: EmbeddingTable,
    num_items: usize,
}

impl ItemEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, num_items: usize, dim: usize) -> Result<Self> {
        let std = 1.0 / (dim as f64).sqrt();
        let table = store.normal(name, &[num_items + 1, dim], std)?;
        let var = store.get(name).expect("just created");
        let zero_row = Tensor::zeros((1, dim), table.dtype(), table.device())?;
        let fixed = table.slice_assign(&[num_items..num_items + 1, 0..dim], &zero_row)?;
        var.set(&fixed)?;
        Ok(Self {
            inner: EmbeddingTable {
                table,
                rows: num_items + 1,
                dim,
            },
            num_items,
        })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn pad(&self) -> u32 {
        self.num_items as u32
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn table(&self) -> &Tensor {
        &self.inner.table
    }

    /// Index tensor over items plus the padding id.
    pub fn ids(&self, ids: &[u32], dims: &[usize]) -> Result<Tensor> {
        ids_tensor(ids, dims, self.num_items + 1, self.inner.table.device())
    }

    /// Float mask with 1 at real items and 0 at padding, same shape as `ids`.
    pub fn mask(&self, ids: &Tensor, dtype: DType) -> Result<Tensor> {
        Ok(ids.ne(self.pad())?.to_dtype(dtype)?)
    }

    pub fn lookup(&self, ids: &Tensor) -> Result<Tensor> {
        let e = self.inner.lookup(ids)?;
        let mask = self.mask(ids, e.dtype())?.unsqueeze(candle_core::D::Minus1)?;
        Ok(e.broadcast_mul(&mask)?)
    }
}
