#![allow(dead_code)]

use fcsim_core::fit::operators::dense;
use fcsim_core::fit::FitModel;
use fcsim_core::linalg::hcat;
use nalgebra::DMatrix;

pub struct SpecBuilder {
    pub n: usize,
    pub dx: f64,
    pub conductor: Option<[usize; 6]>,
    pub sigma: f64,
    pub coils: Vec<([usize; 6], usize, f64)>,
    pub bh: &'static str,
    pub formulation: &'static str,
}

impl SpecBuilder {
    pub fn new(n: usize, formulation: &'static str) -> Self {
        SpecBuilder { n, dx: 0.01, conductor: None, sigma: 3.5e7, coils: Vec::new(), bh: "linear", formulation }
    }

    pub fn conductor(mut self, b: [usize; 6]) -> Self {
        self.conductor = Some(b);
        self
    }

    pub fn coil(mut self, b: [usize; 6], w: usize, turns: f64) -> Self {
        self.coils.push((b, w, turns));
        self
    }

    pub fn bh(mut self, bh: &'static str) -> Self {
        self.bh = bh;
        self
    }

    pub fn dx(mut self, dx: f64) -> Self {
        self.dx = dx;
        self
    }

    pub fn text(&self) -> String {
        let n = self.n;
        let mut s = format!("grid.nx = {n}\ngrid.ny = {n}\ngrid.nz = {n}\ngrid.dx = {:?}\n", self.dx);
        if let Some(b) = self.conductor {
            s.push_str(&format!(
                "conductor.box = {},{},{},{},{},{}\nconductor.sigma = {:?}\n",
                b[0], b[1], b[2], b[3], b[4], b[5], self.sigma
            ));
        }
        for (k, (b, w, t)) in self.coils.iter().enumerate() {
            s.push_str(&format!(
                "coil.{}.frame = {},{},{},{},{},{},{}\ncoil.{}.turns = {:?}\n",
                k + 1,
                b[0],
                b[1],
                b[2],
                b[3],
                b[4],
                b[5],
                w,
                k + 1,
                t
            ));
        }
        s.push_str(&format!("material.bh = {}\nformulation = {}\n", self.bh, self.formulation));
        s
    }

    pub fn build(&self) -> FitModel {
        FitModel::from_text(&self.text()).unwrap()
    }
}

/// T-Ω models with eddy-current unknowns where the grid allows them.
pub fn tomega_family() -> Vec<(usize, FitModel)> {
    vec![
        (2, SpecBuilder::new(2, "tomega").conductor([0, 0, 1, 2, 2, 2]).coil([0, 0, 0, 2, 2, 1], 1, 10.0).build()),
        (3, SpecBuilder::new(3, "tomega").conductor([0, 0, 1, 3, 3, 3]).coil([0, 0, 0, 3, 3, 1], 1, 10.0).build()),
        (4, SpecBuilder::new(4, "tomega").conductor([1, 1, 1, 3, 3, 3]).coil([0, 0, 1, 4, 4, 3], 1, 100.0).build()),
    ]
}

/// A* models; coils stay clear of the edges touching the conductor.
pub fn astar_family() -> Vec<(usize, FitModel)> {
    vec![
        (2, SpecBuilder::new(2, "astar").coil([0, 0, 0, 2, 2, 1], 1, 10.0).build()),
        (3, SpecBuilder::new(3, "astar").conductor([1, 1, 2, 2, 2, 3]).coil([0, 0, 0, 3, 3, 1], 1, 10.0).build()),
        (4, SpecBuilder::new(4, "astar").conductor([1, 1, 2, 3, 3, 4]).coil([0, 0, 0, 4, 4, 1], 1, 100.0).build()),
    ]
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

/// Schur complement of `Bᵀ M B` onto the coil block, `B = [P | S̃ᵀ | Y]`.
pub fn tomega_oracle(model: &FitModel, p: &DMatrix<f64>) -> DMatrix<f64> {
    let b = hcat(&[p, &dense(&model.ops.s_tilde_t), &model.windings.y_s]);
    let m = DMatrix::from_diagonal(&model.mats.m_mu);
    let g = b.transpose() * m * &b;
    let n = g.nrows() - model.n_coils();
    let s = model.n_coils();
    let gzz = g.view((0, 0), (n, n)).into_owned();
    let gzi = g.view((0, n), (n, s)).into_owned();
    let gii = g.view((n, n), (s, s)).into_owned();
    let inv = gzz.try_inverse().expect("regular oracle block");
    gii - gzi.transpose() * inv * gzi
}

/// `X_nᵀ K_nn⁻¹ X_n` over the non-conducting gauged unknowns.
pub fn astar_oracle(model: &FitModel, cols: &[usize], p: &DMatrix<f64>) -> DMatrix<f64> {
    let cp = dense(&model.ops.c) * p;
    let k = cp.transpose() * DMatrix::from_diagonal(&model.mats.m_nu) * &cp;
    let x = p.transpose() * &model.windings.x_s;
    let keep: Vec<usize> = (0..cols.len()).filter(|&r| model.mats.m_sigma[cols[r]] == 0.0).collect();
    let knn = k.select_rows(&keep).select_columns(&keep);
    let xn = x.select_rows(&keep);
    let sol = knn.lu().solve(&xn).expect("regular K_nn");
    xn.transpose() * sol
}
