//! Paige-Saunders LSQR for `min ‖A x - b‖² + damp² ‖x‖²`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqrOptions {
    pub damp: f64,
    pub atol: f64,
    pub btol: f64,
    pub conlim: f64,
    /// Iteration cap; `None` means `10 * ncols`.
    pub max_iter: Option<usize>,
    /// Systems with at most this many unknowns are re-solved densely when LSQR stalls.
    pub dense_fallback_max: usize,
}

impl Default for LsqrOptions {
    fn default() -> Self {
        LsqrOptions {
            damp: 0.0,
            atol: 1e-10,
            btol: 1e-10,
            conlim: 1e8,
            max_iter: None,
            dense_fallback_max: 100,
        }
    }
}

impl LsqrOptions {
    pub fn with_tolerance(tol: f64) -> Self {
        LsqrOptions {
            atol: tol,
            btol: tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `b = 0`, so `x = 0` is exact.
    ZeroRhs,
    /// `Ax = b` solved to `atol`/`btol`.
    Compatible,
    /// Least-squares optimality reached to `atol`.
    LeastSquares,
    /// Condition estimate exceeded `conlim`.
    IllConditioned,
    /// Compatible system solved to machine precision.
    CompatibleEps,
    LeastSquaresEps,
    IllConditionedEps,
    IterationLimit,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(
            self,
            StopReason::ZeroRhs
                | StopReason::Compatible
                | StopReason::LeastSquares
                | StopReason::CompatibleEps
                | StopReason::LeastSquaresEps
        )
    }
}

#[derive(Debug, Clone)]
pub struct LsqrResult {
    pub x: DVector<f64>,
    pub stop: StopReason,
    pub iterations: usize,
    /// `‖b - A x‖`
    pub r1norm: f64,
    /// `‖Aᵀ r‖` estimate.
    pub arnorm: f64,
    pub anorm: f64,
    pub acond: f64,
}

fn sym_ortho(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (if a == 0.0 { 1.0 } else { a.signum() }, 0.0, a.abs());
    }
    if a == 0.0 {
        return (0.0, b.signum(), b.abs());
    }
    if b.abs() > a.abs() {
        let tau = a / b;
        let s = b.signum() / (1.0 + tau * tau).sqrt();
        let c = s * tau;
        (c, s, b / s)
    } else {
        let tau = b / a;
        let c = a.signum() / (1.0 + tau * tau).sqrt();
        let s = c * tau;
        (c, s, a / c)
    }
}

pub fn lsqr(a: &CsrMatrix, b: &DVector<f64>, opts: &LsqrOptions) -> Result<LsqrResult> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::dim("lsqr right-hand side", m, b.len()));
    }
    let iter_lim = opts.max_iter.unwrap_or(10 * n).max(1);
    let ctol = if opts.conlim > 0.0 { 1.0 / opts.conlim } else { 0.0 };
    let dampsq = opts.damp * opts.damp;
    let eps = f64::EPSILON;

    let mut x = DVector::zeros(n);
    let mut u = b.clone();
    let bnorm = u.norm();
    let mut v = DVector::zeros(n);
    let mut beta = bnorm;
    let mut alfa = 0.0;
    if beta > 0.0 {
        u /= beta;
        a.tr_mul_vec(&u, &mut v);
        alfa = v.norm();
    }
    if alfa > 0.0 {
        v /= alfa;
    }
    let mut w = v.clone();

    let mut result = LsqrResult {
        x: x.clone(),
        stop: StopReason::ZeroRhs,
        iterations: 0,
        r1norm: beta,
        arnorm: alfa * beta,
        anorm: 0.0,
        acond: 0.0,
    };
    if alfa * beta == 0.0 {
        return Ok(result);
    }

    let (mut anorm, mut ddnorm, mut res2) = (0.0f64, 0.0f64, 0.0f64);
    let mut acond;
    let (mut xxnorm, mut z, mut cs2, mut sn2) = (0.0f64, 0.0f64, -1.0f64, 0.0f64);
    let mut rhobar = alfa;
    let mut phibar = beta;
    let mut rnorm;
    let mut arnorm;
    let mut r1norm;
    let mut av = DVector::zeros(m);
    let mut atu = DVector::zeros(n);
    let mut itn = 0;
    let stop;

    loop {
        itn += 1;
        a.mul_vec(&v, &mut av);
        u.axpy(1.0, &av, -alfa);
        beta = u.norm();
        if beta > 0.0 {
            u /= beta;
            anorm = (anorm * anorm + alfa * alfa + beta * beta + dampsq).sqrt();
            a.tr_mul_vec(&u, &mut atu);
            v.axpy(1.0, &atu, -beta);
            alfa = v.norm();
            if alfa > 0.0 {
                v /= alfa;
            }
        }

        let (rhobar1, psi) = if opts.damp > 0.0 {
            let rhobar1 = (rhobar * rhobar + dampsq).sqrt();
            let cs1 = rhobar / rhobar1;
            let sn1 = opts.damp / rhobar1;
            let psi = sn1 * phibar;
            phibar *= cs1;
            (rhobar1, psi)
        } else {
            (rhobar, 0.0)
        };

        let (cs, sn, rho) = sym_ortho(rhobar1, beta);
        let theta = sn * alfa;
        rhobar = -cs * alfa;
        let phi = cs * phibar;
        phibar *= sn;
        let tau = sn * phi;

        let t1 = phi / rho;
        let t2 = -theta / rho;
        ddnorm += w.norm_squared() / (rho * rho);
        x.axpy(t1, &w, 1.0);
        w.axpy(1.0, &v, t2);

        let delta = sn2 * rho;
        let gambar = -cs2 * rho;
        let rhs = phi - delta * z;
        let zbar = rhs / gambar;
        let xnorm = (xxnorm + zbar * zbar).sqrt();
        let gamma = (gambar * gambar + theta * theta).sqrt();
        cs2 = gambar / gamma;
        sn2 = theta / gamma;
        z = rhs / gamma;
        xxnorm += z * z;

        acond = anorm * ddnorm.sqrt();
        res2 += psi * psi;
        rnorm = (phibar * phibar + res2).sqrt();
        arnorm = alfa * tau.abs();
        let r1sq = rnorm * rnorm - dampsq * xxnorm;
        r1norm = r1sq.abs().sqrt().copysign(r1sq);

        let test1 = rnorm / bnorm;
        let test2 = arnorm / (anorm * rnorm + eps);
        let test3 = 1.0 / (acond + eps);
        let t1 = test1 / (1.0 + anorm * xnorm / bnorm);
        let rtol = opts.btol + opts.atol * anorm * xnorm / bnorm;

        let mut s = None;
        if itn >= iter_lim {
            s = Some(StopReason::IterationLimit);
        }
        if 1.0 + test3 <= 1.0 {
            s = Some(StopReason::IllConditionedEps);
        }
        if 1.0 + test2 <= 1.0 {
            s = Some(StopReason::LeastSquaresEps);
        }
        if 1.0 + t1 <= 1.0 {
            s = Some(StopReason::CompatibleEps);
        }
        if test3 <= ctol {
            s = Some(StopReason::IllConditioned);
        }
        if test2 <= opts.atol {
            s = Some(StopReason::LeastSquares);
        }
        if test1 <= rtol {
            s = Some(StopReason::Compatible);
        }
        if let Some(s) = s {
            stop = s;
            break;
        }
    }

    result.x = x;
    result.stop = stop;
    result.iterations = itn;
    result.r1norm = r1norm;
    result.arnorm = arnorm;
    result.anorm = anorm;
    result.acond = acond;
    Ok(result)
}

/// Dense least squares through an SVD; used as the fallback path.
pub fn dense_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let eps = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * svd.singular_values.max();
    svd.solve(b, eps).map_err(|e| Error::Numerical(e.to_string()))
}

/// LSQR with a dense fallback for small systems that fail to converge.
pub fn solve_least_squares(a: &CsrMatrix, b: &DVector<f64>, opts: &LsqrOptions) -> Result<LsqrResult> {
    let res = lsqr(a, b, opts)?;
    if res.stop.converged() {
        return Ok(res);
    }
    if a.ncols() <= opts.dense_fallback_max {
        warn!(
            "lsqr stopped ({:?}) after {} iterations, residual {:.3e}; solving densely",
            res.stop, res.iterations, res.r1norm
        );
        let dense = a.to_dense();
        let x = dense_least_squares(&dense, b)?;
        let r = &dense * &x - b;
        return Ok(LsqrResult {
            arnorm: (dense.transpose() * &r).norm(),
            r1norm: r.norm(),
            x,
            ..res
        });
    }
    Err(Error::NoConvergence {
        iterations: res.iterations,
        residual: res.r1norm,
    })
}
