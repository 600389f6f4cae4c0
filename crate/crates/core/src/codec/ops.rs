//! Differentiable tape operations specific to the codec: phase-signal
//! synthesis and forward kinematics over normalized pose features.

use std::f64::consts::TAU;

use phasegen_nn::{Function, Mat};

use crate::motion::{FeatureNormalizer, Skeleton};
use crate::phase::{FramePlan, Representation, SegmentTag};

/// `(a, p, o)`, each `B x M`, to a stacked `(B*T) x C` phase signal.
pub struct PhaseSignalOp {
    pub freqs: Vec<u32>,
    pub plans: Vec<FramePlan>,
    pub repr: Representation,
}

impl PhaseSignalOp {
    fn frames(&self) -> usize {
        self.plans.first().map_or(0, FramePlan::len)
    }
}

impl Function for PhaseSignalOp {
    fn forward(&self, inputs: &[&Mat]) -> Mat {
        let (a, p, o) = (inputs[0], inputs[1], inputs[2]);
        let (b, m) = a.dim();
        let t_len = self.frames();
        let cpp = self.repr.channels_per_phase();
        let mut out = Mat::zeros((b * t_len, cpp * m));
        for (bi, plan) in self.plans.iter().enumerate() {
            assert_eq!(plan.len(), t_len, "all plans in a batch need equal length");
            for (t, &frame) in plan.frames.iter().enumerate() {
                let row = bi * t_len + t;
                for i in 0..m {
                    let (s, c) = crate::phase::phase_channels(
                        a[[bi, i]],
                        p[[bi, i]],
                        o[[bi, i]],
                        self.freqs[i],
                        frame,
                    );
                    out[[row, cpp * i]] = s;
                    if cpp == 2 {
                        out[[row, 2 * i + 1]] = c;
                    }
                }
            }
        }
        out
    }

    fn backward(&self, inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Mat> {
        let (a, p) = (inputs[0], inputs[1]);
        let (b, m) = a.dim();
        let t_len = self.frames();
        let cpp = self.repr.channels_per_phase();
        let mut ga = Mat::zeros((b, m));
        let mut gp = Mat::zeros((b, m));
        let mut go = Mat::zeros((b, m));
        for (bi, plan) in self.plans.iter().enumerate() {
            for (t, frame) in plan.frames.iter().enumerate() {
                let row = bi * t_len + t;
                for i in 0..m {
                    let gs = grad[[row, cpp * i]];
                    let gc = if cpp == 2 { grad[[row, 2 * i + 1]] } else { 0.0 };
                    let amp = a[[bi, i]];
                    match frame.tag {
                        SegmentTag::Periodic => {
                            let th = TAU * (f64::from(self.freqs[i]) * frame.k + p[[bi, i]]);
                            let (s, c) = th.sin_cos();
                            ga[[bi, i]] += gs * s + gc * c;
                            gp[[bi, i]] += TAU * amp * (gs * c - gc * s);
                            go[[bi, i]] += gs + gc;
                        }
                        SegmentTag::RampIn | SegmentTag::RampOut => {
                            let (s, c) = (TAU * p[[bi, i]]).sin_cos();
                            let k = frame.k;
                            ga[[bi, i]] += k * (gs * s + gc * c);
                            gp[[bi, i]] += k * TAU * amp * (gs * c - gc * s);
                            go[[bi, i]] += k * (gs + gc);
                        }
                    }
                }
            }
        }
        vec![ga, gp, go]
    }
}

type M3 = [[f64; 3]; 3];

fn quat_matrix(w: f64, x: f64, y: f64, z: f64) -> M3 {
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Partial derivatives of [`quat_matrix`] with respect to `w, x, y, z`.
fn quat_matrix_grads(w: f64, x: f64, y: f64, z: f64) -> [M3; 4] {
    [
        [[0.0, -2.0 * z, 2.0 * y], [2.0 * z, 0.0, -2.0 * x], [-2.0 * y, 2.0 * x, 0.0]],
        [[0.0, 2.0 * y, 2.0 * z], [2.0 * y, -4.0 * x, -2.0 * w], [2.0 * z, 2.0 * w, -4.0 * x]],
        [[-4.0 * y, 2.0 * x, 2.0 * w], [2.0 * x, 0.0, 2.0 * z], [-2.0 * w, 2.0 * z, -4.0 * y]],
        [[-4.0 * z, -2.0 * w, 2.0 * x], [2.0 * w, -4.0 * z, 2.0 * y], [2.0 * x, 2.0 * y, 0.0]],
    ]
}

fn mm(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    o
}

fn mv(a: &M3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

const MIN_NORM: f64 = 1e-8;

/// Joint positions from normalized pose features, with the root placed at
/// `(0, height, 0)` and every coordinate multiplied by `scale`.
pub struct FkOp {
    pub parents: Vec<Option<usize>>,
    pub offsets: Vec<[f64; 3]>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub scale: f64,
}

struct FrameFk {
    unit: Vec<[f64; 4]>,
    norms: Vec<f64>,
    local: Vec<M3>,
    global: Vec<M3>,
    pos: Vec<[f64; 3]>,
}

impl FkOp {
    pub fn new(skeleton: &Skeleton, normalizer: &FeatureNormalizer, scale: f64) -> Self {
        FkOp {
            parents: skeleton.parents.clone(),
            offsets: skeleton.offsets.clone(),
            mean: normalizer.mean.clone(),
            std: normalizer.std.clone(),
            scale,
        }
    }

    fn frame(&self, z: ndarray::ArrayView1<f64>) -> FrameFk {
        let j = self.parents.len();
        let x = |d: usize| z[d] * self.std[d] + self.mean[d];
        let mut f = FrameFk {
            unit: Vec::with_capacity(j),
            norms: Vec::with_capacity(j),
            local: Vec::with_capacity(j),
            global: Vec::with_capacity(j),
            pos: Vec::with_capacity(j),
        };
        for i in 0..j {
            let b = 3 + 4 * i;
            let q = [x(b), x(b + 1), x(b + 2), x(b + 3)];
            let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt().max(MIN_NORM);
            let u = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
            let r = quat_matrix(u[0], u[1], u[2], u[3]);
            match self.parents[i] {
                None => {
                    f.global.push(r);
                    f.pos.push([0.0, x(1), 0.0]);
                }
                Some(p) => {
                    let off = mv(&f.global[p], &self.offsets[i]);
                    let pp = f.pos[p];
                    f.pos.push([pp[0] + off[0], pp[1] + off[1], pp[2] + off[2]]);
                    let g = mm(&f.global[p], &r);
                    f.global.push(g);
                }
            }
            f.unit.push(u);
            f.norms.push(n);
            f.local.push(r);
        }
        f
    }
}

impl Function for FkOp {
    fn forward(&self, inputs: &[&Mat]) -> Mat {
        let z = inputs[0];
        let j = self.parents.len();
        let mut out = Mat::zeros((z.nrows(), 3 * j));
        for (r, row) in z.rows().into_iter().enumerate() {
            let f = self.frame(row);
            for i in 0..j {
                for c in 0..3 {
                    out[[r, 3 * i + c]] = f.pos[i][c] * self.scale;
                }
            }
        }
        out
    }

    fn backward(&self, inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Mat> {
        let z = inputs[0];
        let j = self.parents.len();
        let mut gz = Mat::zeros(z.dim());
        for (r, row) in z.rows().into_iter().enumerate() {
            let f = self.frame(row);
            let mut g_pos: Vec<[f64; 3]> = (0..j)
                .map(|i| {
                    [
                        grad[[r, 3 * i]] * self.scale,
                        grad[[r, 3 * i + 1]] * self.scale,
                        grad[[r, 3 * i + 2]] * self.scale,
                    ]
                })
                .collect();
            let mut g_glob: Vec<M3> = vec![[[0.0; 3]; 3]; j];
            for i in (0..j).rev() {
                let g_local: M3 = match self.parents[i] {
                    None => {
                        gz[[r, 1]] += g_pos[i][1] * self.std[1];
                        g_glob[i]
                    }
                    Some(p) => {
                        let gp = g_pos[i];
                        let off = self.offsets[i];
                        let gg = g_glob[i];
                        let parent = f.global[p];
                        let local = f.local[i];
                        // G_i = G_p R_i
                        let mut gl = [[0.0; 3]; 3];
                        for a in 0..3 {
                            for b in 0..3 {
                                gl[a][b] = (0..3).map(|c| parent[c][a] * gg[c][b]).sum();
                                let from_child: f64 = (0..3).map(|c| gg[a][c] * local[b][c]).sum();
                                g_glob[p][a][b] += from_child + gp[a] * off[b];
                            }
                        }
                        for c in 0..3 {
                            g_pos[p][c] += gp[c];
                        }
                        gl
                    }
                };
                let u = f.unit[i];
                let dr = quat_matrix_grads(u[0], u[1], u[2], u[3]);
                let mut gu = [0.0; 4];
                for (c, d) in dr.iter().enumerate() {
                    gu[c] = (0..3)
                        .flat_map(|a| (0..3).map(move |b| (a, b)))
                        .map(|(a, b)| g_local[a][b] * d[a][b])
                        .sum();
                }
                let dot: f64 = (0..4).map(|c| gu[c] * u[c]).sum();
                for c in 0..4 {
                    let d = 3 + 4 * i + c;
                    gz[[r, d]] += (gu[c] - u[c] * dot) / f.norms[i] * self.std[d];
                }
            }
        }
        vec![gz]
    }
}
