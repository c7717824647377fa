//! Pruned 3D FFTs on a zero-padded cube.
//!
//! A field occupying `[0, m)³` of a `P³` buffer only needs `m²` x-lines and
//! `m·P` y-lines transformed on the way in; symmetrically only those lines
//! are needed on the way out when just `[0, m)³` of the result is read.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

/// Smallest `2^a 3^b 5^c 7^d ≥ min`.
pub fn fast_length(min: usize) -> usize {
    let smooth = |mut k: usize| {
        for f in [2, 3, 5, 7] {
            while k % f == 0 {
                k /= f;
            }
        }
        k == 1
    };
    (min.max(1)..).find(|&k| smooth(k)).unwrap()
}

pub struct Fft3<R: Real> {
    len: usize,
    forward: Arc<dyn Fft<R>>,
    inverse: Arc<dyn Fft<R>>,
}

impl<R: Real> Fft3<R> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform of data supported in `[0, active)³`.
    pub fn forward(&self, data: &mut [Complex<R>], active: usize) {
        let p = self.len;
        assert_eq!(data.len(), p * p * p);
        self.pass_x(data, active, active, &self.forward);
        self.pass_y(data, active, &self.forward);
        self.pass_z(data, &self.forward);
    }

    /// Unnormalized in-place inverse; only `[0, active)³` of the output is
    /// valid afterwards.
    pub fn inverse(&self, data: &mut [Complex<R>], active: usize) {
        self.pass_z(data, &self.inverse);
        self.pass_y(data, active, &self.inverse);
        self.pass_x(data, active, active, &self.inverse);
    }

    fn pass_x(&self, data: &mut [Complex<R>], ys: usize, zs: usize, fft: &Arc<dyn Fft<R>>) {
        let p = self.len;
        data.par_chunks_mut(p * p).take(zs).for_each(|plane| {
            let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut plane[..p * ys], &mut scratch);
        });
    }

    fn pass_y(&self, data: &mut [Complex<R>], zs: usize, fft: &Arc<dyn Fft<R>>) {
        let p = self.len;
        data.par_chunks_mut(p * p).take(zs).for_each(|plane| {
            let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
            let mut t = vec![Complex::default(); p * p];
            transpose(plane, &mut t, p);
            fft.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, plane, p);
        });
    }

    fn pass_z(&self, data: &mut [Complex<R>], fft: &Arc<dyn Fft<R>>) {
        let p = self.len;
        let pp = p * p;
        let mut lines = vec![Complex::default(); p * pp];
        {
            let src = &*data;
            lines.par_chunks_mut(p * p).enumerate().for_each(|(y, block)| {
                let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
                for x in 0..p {
                    let c = x + p * y;
                    for z in 0..p {
                        block[x * p + z] = src[c + pp * z];
                    }
                }
                fft.process_with_scratch(block, &mut scratch);
            });
        }
        data.par_chunks_mut(pp).enumerate().for_each(|(z, plane)| {
            for (c, v) in plane.iter_mut().enumerate() {
                *v = lines[c * p + z];
            }
        });
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], p: usize) {
    for r in 0..p {
        for c in 0..p {
            dst[c * p + r] = src[r * p + c];
        }
    }
}
