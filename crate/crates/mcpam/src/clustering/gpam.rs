//! The GPAM inner step and PAM as GPAM(m, m).

use super::{full_accumulate, ExitReason, MedoidResult, TraceEntry};
use crate::data::{Dataset, KTuple, Point};
use crate::error::{Error, Result};
use crate::metric::Metric;

fn mean_delta(t: &KTuple, sample: &[Point], metric: &Metric) -> f64 {
    let mut s = 0.0;
    for y in sample {
        s += metric.min_distance(y, t);
    }
    s / sample.len() as f64
}

/// One greedy pass over all swaps (i, l): swap point `swaps[i]` into slot
/// `l`, score it on `eval_samples(i, l)`, and keep it whenever the score is
/// strictly below the current one. Returns the final tuple and its score.
pub fn gpam_inner<'s>(
    cur: &KTuple,
    ecc_cur: f64,
    swaps: &[Point],
    eval_samples: &dyn Fn(usize, usize) -> &'s [Point],
    metric: &Metric,
) -> (KTuple, f64) {
    let mut cur = cur.clone();
    let mut ecc = ecc_cur;
    for (i, x) in swaps.iter().enumerate() {
        for l in 0..cur.k() {
            let cand = cur.swapped(l, x);
            let e = mean_delta(&cand, eval_samples(i, l), metric);
            if e < ecc {
                cur = cand;
                ecc = e;
            }
        }
    }
    (cur, ecc)
}

/// [`gpam_inner`] with one shared eval sample, scoring the starting tuple on
/// it first. Keeps a k × n table of slot distances so each candidate costs n
/// distance evaluations; sums run over the sample in order, so scores match
/// the generic version exactly. Also returns the distance evaluations spent.
pub fn gpam_inner_shared(cur: &KTuple, swaps: &[Point], eval: &[Point], metric: &Metric) -> (KTuple, f64, u64) {
    let n = eval.len();
    let k = cur.k();
    let mut cur = cur.clone();
    let mut table: Vec<Vec<f64>> = cur.slots.iter().map(|s| eval.iter().map(|y| metric.dist(y, s)).collect()).collect();
    let mut evals = (k * n) as u64;
    let mut other = vec![vec![0.0; n]; k];
    let rebuild_other = |table: &Vec<Vec<f64>>, other: &mut Vec<Vec<f64>>| {
        for (l, o) in other.iter_mut().enumerate() {
            for (j, v) in o.iter_mut().enumerate() {
                *v = (0..k).filter(|&q| q != l).map(|q| table[q][j]).fold(f64::INFINITY, f64::min);
            }
        }
    };
    rebuild_other(&table, &mut other);
    let mut ecc = {
        let mut s = 0.0;
        for j in 0..n {
            s += (0..k).map(|q| table[q][j]).fold(f64::INFINITY, f64::min);
        }
        s / n as f64
    };
    let mut dvec = vec![0.0; n];
    for x in swaps {
        for (j, y) in eval.iter().enumerate() {
            dvec[j] = metric.dist(y, x);
        }
        evals += n as u64;
        for l in 0..k {
            let o = &other[l];
            let mut s = 0.0;
            for j in 0..n {
                s += dvec[j].min(o[j]);
            }
            let e = s / n as f64;
            if e < ecc {
                ecc = e;
                cur.slots[l] = x.clone();
                table[l].copy_from_slice(&dvec);
                rebuild_other(&table, &mut other);
            }
        }
    }
    (cur, ecc, evals)
}

/// PAM: repeat the inner pass with swap set = eval sample = all data until
/// the eccentricity improvement is at most `tol`.
pub fn pam(data: &Dataset, k: usize, metric: &Metric, tol: f64, init: KTuple) -> Result<MedoidResult> {
    if data.len() < k || k == 0 {
        return Err(Error::InvalidArgument(format!("cannot fit {k} medoids to {} points", data.len())));
    }
    if init.k() != k {
        return Err(Error::Config(format!("init has {} slots, k = {k}", init.k())));
    }
    let m = data.len();
    let mut cur = init;
    let mut evals = 0u64;
    let mut trace = Vec::new();
    let mut outer = 0;
    loop {
        let before = full_accumulate(&data.points, &cur, metric).estimate(0.05)?;
        let (new, e_new, ev) = gpam_inner_shared(&cur, &data.points, &data.points, metric);
        evals += ev;
        let improvement = before.mean - e_new;
        let moved = new != cur;
        let exit = if moved && improvement > tol { ExitReason::Swept } else { ExitReason::Converged };
        trace.push(TraceEntry {
            outer,
            round: 0,
            n: m,
            swapped: moved,
            exit,
            cur: before,
            minhi: None,
            minlo: None,
            tau: tol,
            new_ecc: Some(e_new),
            distance_evals: ev,
        });
        cur = new;
        outer += 1;
        if exit == ExitReason::Converged {
            break;
        }
    }
    let ecc = full_accumulate(&data.points, &cur, metric).estimate(0.05)?;
    evals += (m * k) as u64;
    Ok(MedoidResult { medoid: cur, ecc, trace, total_distance_evals: evals })
}
