//! Row-parallel matrix-vector products over scoped worker threads.
//!
//! Rows are split into contiguous ranges, one per worker. Each output element
//! is computed by exactly one worker with the same per-row reduction order, so
//! results are bitwise identical for every thread count.

use std::thread;

use kquant_core::kernels::{has_kernel, matvec_rows, Activations};
use kquant_core::{Error, Isa, QuantizedTensor, Result};

fn check(w: &QuantizedTensor, x_len: usize) -> Result<()> {
    if !has_kernel(w.format()) {
        return Err(Error::UnsupportedKernel(w.format()));
    }
    if x_len != w.row_len() {
        return Err(Error::Length {
            expected: w.row_len(),
            actual: x_len,
        });
    }
    Ok(())
}

/// `y = W · a` with `threads` workers (at least one).
pub fn matvec_prepared(isa: Isa, w: &QuantizedTensor, a: &Activations, y: &mut [f32], threads: usize) -> Result<()> {
    check(w, a.len())?;
    if y.len() != w.rows() {
        return Err(Error::Length {
            expected: w.rows(),
            actual: y.len(),
        });
    }
    let rb = w.row_bytes();
    let per = w.rows().div_ceil(threads.max(1));
    if threads <= 1 || per >= w.rows() {
        return matvec_rows(isa, w.format(), w.payload(), rb, a, y);
    }
    thread::scope(|s| {
        let workers: Vec<_> = y
            .chunks_mut(per)
            .zip(w.payload().chunks(per * rb))
            .map(|(ys, rows)| s.spawn(move || matvec_rows(isa, w.format(), rows, rb, a, ys)))
            .collect();
        workers
            .into_iter()
            .try_for_each(|h| h.join().expect("matvec worker panicked"))
    })
}

/// `W · x` with `threads` workers.
pub fn matvec(isa: Isa, w: &QuantizedTensor, x: &[f32], threads: usize) -> Result<Vec<f32>> {
    check(w, x.len())?;
    let a = Activations::prepare(w.format(), x)?;
    let mut y = vec![0f32; w.rows()];
    matvec_prepared(isa, w, &a, &mut y, threads)?;
    Ok(y)
}

/// Batched product over prepared inputs. `y` holds one output row of
/// `w.rows()` values per input. Each weight row is loaded once per batch.
pub fn matmul_prepared(isa: Isa, w: &QuantizedTensor, acts: &[Activations], y: &mut [f32], threads: usize) -> Result<()> {
    let rows = w.rows();
    if y.len() != rows * acts.len() {
        return Err(Error::Length {
            expected: rows * acts.len(),
            actual: y.len(),
        });
    }
    for a in acts {
        check(w, a.len())?;
    }
    let rb = w.row_bytes();
    // Workers fill a row-major [row][token] scratch so each owns a contiguous
    // range; it is transposed into [token][row] afterwards.
    let mut scratch = vec![0f32; y.len()];
    let run = |payload: &[u8], out: &mut [f32]| -> Result<()> {
        for (row, o) in payload.chunks_exact(rb).zip(out.chunks_exact_mut(acts.len())) {
            for (t, a) in acts.iter().enumerate() {
                matvec_rows(isa, w.format(), row, rb, a, &mut o[t..t + 1])?;
            }
        }
        Ok(())
    };
    let per = rows.div_ceil(threads.max(1));
    if threads <= 1 || per >= rows || acts.is_empty() {
        run(w.payload(), &mut scratch)?;
    } else {
        thread::scope(|s| {
            let run = &run;
            let workers: Vec<_> = scratch
                .chunks_mut(per * acts.len())
                .zip(w.payload().chunks(per * rb))
                .map(|(out, payload)| s.spawn(move || run(payload, out)))
                .collect();
            workers
                .into_iter()
                .try_for_each(|h| h.join().expect("matmul worker panicked"))
        })?;
    }
    for (r, chunk) in scratch.chunks_exact(acts.len().max(1)).enumerate() {
        for (t, &v) in chunk.iter().enumerate() {
            y[t * rows + r] = v;
        }
    }
    Ok(())
}
