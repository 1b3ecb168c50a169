//! Dense loops behind the tape ops. Layouts are channels-last; every
//! reduction runs in a fixed order so results are bit-reproducible.

/// `out[m, n] += a[m, k] · b[k, n]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `da[m, k] += g[m, n] · b[k, n]ᵀ`.
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], da: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            da[i * k + kk] += dot(grow, brow);
        }
    }
}

/// `db[k, n] += a[m, k]ᵀ · g[m, n]`.
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (d, &gv) in db[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                *d += av * gv;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub(crate) struct SpatialGeom {
    pub frames: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub ho: usize,
    pub wo: usize,
    pub pad_y: usize,
    pub pad_x: usize,
}

impl SpatialGeom {
    /// Input pixel feeding output `(oy, ox)` through kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy + ky).checked_sub(self.pad_y)?;
        let ix = (ox + kx).checked_sub(self.pad_x)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }
}

pub(crate) fn conv2d_forward(g: &SpatialGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (cin, cout) = (g.cin, g.cout);
    let mut out = vec![0.0; g.frames * g.ho * g.wo * cout];
    for f in 0..g.frames {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let o_off = ((f * g.ho + oy) * g.wo + ox) * cout;
                let opx = &mut out[o_off..o_off + cout];
                opx.copy_from_slice(b);
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let Some((iy, ix)) = g.source(oy, ox, ky, kx) else { continue };
                        let i_off = ((f * g.h + iy) * g.w + ix) * cin;
                        let w_off = (ky * g.kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x[i_off + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &w[w_off + ci * cout..w_off + (ci + 1) * cout];
                            for (o, &wv) in opx.iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) type ConvGrads = (Option<Vec<f64>>, Vec<f64>, Vec<f64>);

pub(crate) fn conv2d_backward(g: &SpatialGeom, x: &[f64], w: &[f64], go: &[f64], want_dx: bool) -> ConvGrads {
    let (cin, cout) = (g.cin, g.cout);
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    for f in 0..g.frames {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let o_off = ((f * g.ho + oy) * g.wo + ox) * cout;
                let gpx = &go[o_off..o_off + cout];
                for (d, &gv) in db.iter_mut().zip(gpx) {
                    *d += gv;
                }
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let Some((iy, ix)) = g.source(oy, ox, ky, kx) else { continue };
                        let i_off = ((f * g.h + iy) * g.w + ix) * cin;
                        let w_off = (ky * g.kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let wr = w_off + ci * cout..w_off + (ci + 1) * cout;
                            if let Some(dx) = dx.as_mut() {
                                dx[i_off + ci] += dot(gpx, &w[wr.clone()]);
                            }
                            let xv = x[i_off + ci];
                            if xv != 0.0 {
                                for (d, &gv) in dw[wr].iter_mut().zip(gpx) {
                                    *d += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Debug)]
pub(crate) struct TemporalGeom {
    pub batch: usize,
    pub t: usize,
    pub sites: usize,
    pub cin: usize,
    pub kt: usize,
    pub cout: usize,
    pub to: usize,
    pub pad_t: usize,
}

impl TemporalGeom {
    #[inline]
    fn source(&self, ot: usize, k: usize) -> Option<usize> {
        let it = (ot + k).checked_sub(self.pad_t)?;
        (it < self.t).then_some(it)
    }
}

pub(crate) fn conv1d_forward(g: &TemporalGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (cin, cout) = (g.cin, g.cout);
    let mut out = vec![0.0; g.batch * g.to * g.sites * cout];
    for bi in 0..g.batch {
        for ot in 0..g.to {
            for s in 0..g.sites {
                let o_off = ((bi * g.to + ot) * g.sites + s) * cout;
                let opx = &mut out[o_off..o_off + cout];
                opx.copy_from_slice(b);
                for k in 0..g.kt {
                    let Some(it) = g.source(ot, k) else { continue };
                    let i_off = ((bi * g.t + it) * g.sites + s) * cin;
                    let w_off = k * cin * cout;
                    for ci in 0..cin {
                        let xv = x[i_off + ci];
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &w[w_off + ci * cout..w_off + (ci + 1) * cout];
                        for (o, &wv) in opx.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv1d_backward(g: &TemporalGeom, x: &[f64], w: &[f64], go: &[f64], want_dx: bool) -> ConvGrads {
    let (cin, cout) = (g.cin, g.cout);
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    for bi in 0..g.batch {
        for ot in 0..g.to {
            for s in 0..g.sites {
                let o_off = ((bi * g.to + ot) * g.sites + s) * cout;
                let gpx = &go[o_off..o_off + cout];
                for (d, &gv) in db.iter_mut().zip(gpx) {
                    *d += gv;
                }
                for k in 0..g.kt {
                    let Some(it) = g.source(ot, k) else { continue };
                    let i_off = ((bi * g.t + it) * g.sites + s) * cin;
                    let w_off = k * cin * cout;
                    for ci in 0..cin {
                        let wr = w_off + ci * cout..w_off + (ci + 1) * cout;
                        if let Some(dx) = dx.as_mut() {
                            dx[i_off + ci] += dot(gpx, &w[wr.clone()]);
                        }
                        let xv = x[i_off + ci];
                        if xv != 0.0 {
                            for (d, &gv) in dw[wr].iter_mut().zip(gpx) {
                                *d += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Debug)]
pub(crate) struct PoolGeom {
    pub frames: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
}

pub(crate) fn avg_pool_forward(g: &PoolGeom, x: &[f64]) -> Vec<f64> {
    let (ho, wo, c, k) = (g.h / g.k, g.w / g.k, g.c, g.k);
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; g.frames * ho * wo * c];
    for f in 0..g.frames {
        for oy in 0..ho {
            for ox in 0..wo {
                let o_off = ((f * ho + oy) * wo + ox) * c;
                let opx = &mut out[o_off..o_off + c];
                for dy in 0..k {
                    for dx in 0..k {
                        let i_off = ((f * g.h + oy * k + dy) * g.w + ox * k + dx) * c;
                        for (o, &v) in opx.iter_mut().zip(&x[i_off..i_off + c]) {
                            *o += v;
                        }
                    }
                }
                for o in opx.iter_mut() {
                    *o *= norm;
                }
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward(g: &PoolGeom, go: &[f64], dx: &mut [f64]) {
    let (ho, wo, c, k) = (g.h / g.k, g.w / g.k, g.c, g.k);
    let norm = 1.0 / (k * k) as f64;
    for f in 0..g.frames {
        for oy in 0..ho {
            for ox in 0..wo {
                let o_off = ((f * ho + oy) * wo + ox) * c;
                let gpx = &go[o_off..o_off + c];
                for dy in 0..k {
                    for ddx in 0..k {
                        let i_off = ((f * g.h + oy * k + dy) * g.w + ox * k + ddx) * c;
                        for (d, &gv) in dx[i_off..i_off + c].iter_mut().zip(gpx) {
                            *d += gv * norm;
                        }
                    }
                }
            }
        }
    }
}
