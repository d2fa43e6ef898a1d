//! Dormand–Prince 8(5,3) embedded Runge–Kutta pair with 7th-order dense output.
//!
//! Step-size control and the error norm follow Hairer's DOP853. The stepper
//! only advances; event handling lives in the trajectory driver, which asks an
//! accepted step for its interpolant when it needs one.

const N_STAGES: usize = 12;

#[cfg(test)]
const C: [f64; 16] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
    1.0,
    0.1,
    0.2,
    0.777777777777777777777777777778,
];

const A: [[f64; 15]; 16] = {
    let mut a = [[0.0; 15]; 16];
    a[1][0] = 5.26001519587677318785587544488e-2;

    a[2][0] = 1.97250569845378994544595329183e-2;
    a[2][1] = 5.91751709536136983633785987549e-2;

    a[3][0] = 2.95875854768068491816892993775e-2;
    a[3][2] = 8.87627564304205475450678981324e-2;

    a[4][0] = 2.41365134159266685502369798665e-1;
    a[4][2] = -8.84549479328286085344864962717e-1;
    a[4][3] = 9.24834003261792003115737966543e-1;

    a[5][0] = 3.7037037037037037037037037037e-2;
    a[5][3] = 1.70828608729473871279604482173e-1;
    a[5][4] = 1.25467687566822425016691814123e-1;

    a[6][0] = 3.7109375e-2;
    a[6][3] = 1.70252211019544039314978060272e-1;
    a[6][4] = 6.02165389804559606850219397283e-2;
    a[6][5] = -1.7578125e-2;

    a[7][0] = 3.70920001185047927108779319836e-2;
    a[7][3] = 1.70383925712239993810214054705e-1;
    a[7][4] = 1.07262030446373284651809199168e-1;
    a[7][5] = -1.53194377486244017527936158236e-2;
    a[7][6] = 8.27378916381402288758473766002e-3;

    a[8][0] = 6.24110958716075717114429577812e-1;
    a[8][3] = -3.36089262944694129406857109825;
    a[8][4] = -8.68219346841726006818189891453e-1;
    a[8][5] = 2.75920996994467083049415600797e1;
    a[8][6] = 2.01540675504778934086186788979e1;
    a[8][7] = -4.34898841810699588477366255144e1;

    a[9][0] = 4.77662536438264365890433908527e-1;
    a[9][3] = -2.48811461997166764192642586468;
    a[9][4] = -5.90290826836842996371446475743e-1;
    a[9][5] = 2.12300514481811942347288949897e1;
    a[9][6] = 1.52792336328824235832596922938e1;
    a[9][7] = -3.32882109689848629194453265587e1;
    a[9][8] = -2.03312017085086261358222928593e-2;

    a[10][0] = -9.3714243008598732571704021658e-1;
    a[10][3] = 5.18637242884406370830023853209;
    a[10][4] = 1.09143734899672957818500254654;
    a[10][5] = -8.14978701074692612513997267357;
    a[10][6] = -1.85200656599969598641566180701e1;
    a[10][7] = 2.27394870993505042818970056734e1;
    a[10][8] = 2.49360555267965238987089396762;
    a[10][9] = -3.0467644718982195003823669022;

    a[11][0] = 2.27331014751653820792359768449;
    a[11][3] = -1.05344954667372501984066689879e1;
    a[11][4] = -2.00087205822486249909675718444;
    a[11][5] = -1.79589318631187989172765950534e1;
    a[11][6] = 2.79488845294199600508499808837e1;
    a[11][7] = -2.85899827713502369474065508674;
    a[11][8] = -8.87285693353062954433549289258;
    a[11][9] = 1.23605671757943030647266201528e1;
    a[11][10] = 6.43392746015763530355970484046e-1;

    a[12][0] = 5.42937341165687622380535766363e-2;
    a[12][5] = 4.45031289275240888144113950566;
    a[12][6] = 1.89151789931450038304281599044;
    a[12][7] = -5.8012039600105847814672114227;
    a[12][8] = 3.1116436695781989440891606237e-1;
    a[12][9] = -1.52160949662516078556178806805e-1;
    a[12][10] = 2.01365400804030348374776537501e-1;
    a[12][11] = 4.47106157277725905176885569043e-2;

    a[13][0] = 5.61675022830479523392909219681e-2;
    a[13][6] = 2.53500210216624811088794765333e-1;
    a[13][7] = -2.46239037470802489917441475441e-1;
    a[13][8] = -1.24191423263816360469010140626e-1;
    a[13][9] = 1.5329179827876569731206322685e-1;
    a[13][10] = 8.20105229563468988491666602057e-3;
    a[13][11] = 7.56789766054569976138603589584e-3;
    a[13][12] = -8.298e-3;

    a[14][0] = 3.18346481635021405060768473261e-2;
    a[14][5] = 2.83009096723667755288322961402e-2;
    a[14][6] = 5.35419883074385676223797384372e-2;
    a[14][7] = -5.49237485713909884646569340306e-2;
    a[14][10] = -1.08347328697249322858509316994e-4;
    a[14][11] = 3.82571090835658412954920192323e-4;
    a[14][12] = -3.40465008687404560802977114492e-4;
    a[14][13] = 1.41312443674632500278074618366e-1;

    a[15][0] = -4.28896301583791923408573538692e-1;
    a[15][5] = -4.69762141536116384314449447206;
    a[15][6] = 7.68342119606259904184240953878;
    a[15][7] = 4.06898981839711007970213554331;
    a[15][8] = 3.56727187455281109270669543021e-1;
    a[15][12] = -1.39902416515901462129418009734e-3;
    a[15][13] = 2.9475147891527723389556272149;
    a[15][14] = -9.15095847217987001081870187138;
    a
};

const E3: [f64; 13] = {
    let mut e = [0.0; 13];
    let mut i = 0;
    while i < 12 {
        e[i] = A[12][i];
        i += 1;
    }
    e[0] -= 0.244094488188976377952755905512;
    e[8] -= 0.733846688281611857341361741547;
    e[11] -= 0.220588235294117647058823529412e-1;
    e
};

const E5: [f64; 13] = {
    let mut e = [0.0; 13];
    e[0] = 0.1312004499419488073250102996e-1;
    e[5] = -0.1225156446376204440720569753e+1;
    e[6] = -0.4957589496572501915214079952;
    e[7] = 0.1664377182454986536961530415e+1;
    e[8] = -0.3503288487499736816886487290;
    e[9] = 0.3341791187130174790297318841;
    e[10] = 0.8192320648511571246570742613e-1;
    e[11] = -0.2235530786388629525884427845e-1;
    e
};

const D: [[f64; 16]; 4] = [
    [
        -0.84289382761090128651353491142e+1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.56671495351937776962531783590,
        -0.30689499459498916912797304727e+1,
        0.23846676565120698287728149680e+1,
        0.21170345824450282767155149946e+1,
        -0.87139158377797299206789907490,
        0.22404374302607882758541771650e+1,
        0.63157877876946881815570249290,
        -0.88990336451333310820698117400e-1,
        0.18148505520854727256656404962e+2,
        -0.91946323924783554000451984436e+1,
        -0.44360363875948939664310572000e+1,
    ],
    [
        0.10427508642579134603413151009e+2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.24228349177525818288430175319e+3,
        0.16520045171727028198505394887e+3,
        -0.37454675472269020279518312152e+3,
        -0.22113666853125306036270938578e+2,
        0.77334326684722638389603898808e+1,
        -0.30674084731089398182061213626e+2,
        -0.93321305264302278729567221706e+1,
        0.15697238121770843886131091075e+2,
        -0.31139403219565177677282850411e+2,
        -0.93529243588444783865713862664e+1,
        0.35816841486394083752465898540e+2,
    ],
    [
        0.19985053242002433820987653617e+2,
        0.0,
        0.0,
        0.0,
        0.0,
        -0.38703730874935176555105901742e+3,
        -0.18917813819516756882830838328e+3,
        0.52780815920542364900561016686e+3,
        -0.11573902539959630126141871134e+2,
        0.68812326946963000169666922661e+1,
        -0.10006050966910838403183860980e+1,
        0.77771377980534432092869265740,
        -0.27782057523535084065932004339e+1,
        -0.60196695231264120758267380846e+2,
        0.84320405506677161018159903784e+2,
        0.11992291136182789328035130030e+2,
    ],
    [
        -0.25693933462703749003312586129e+2,
        0.0,
        0.0,
        0.0,
        0.0,
        -0.15418974869023643374053993627e+3,
        -0.23152937917604549567536039109e+3,
        0.35763911791061412378285349910e+3,
        0.93405324183624310003907691704e+2,
        -0.37458323136451633156875139351e+2,
        0.10409964950896230045147246184e+3,
        0.29840293426660503123344363579e+2,
        -0.43533456590011143754432175058e+2,
        0.96324553959188282948394950600e+2,
        -0.39177261675615439165231486172e+2,
        -0.14972683625798562581422125276e+3,
    ],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Autonomous first-order system `y' = f(y)`.
pub trait Autonomous<const N: usize> {
    fn rhs(&self, y: &[f64; N], dy: &mut [f64; N]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-12,
            atol: 1e-12,
        }
    }
}

/// Raised when the controller cannot find an acceptable step.
#[derive(Debug, Clone, Copy)]
pub struct StepUnderflow {
    pub t: f64,
}

/// One accepted step; holds what is needed to build the interpolant.
pub struct Step<const N: usize> {
    pub t_old: f64,
    pub t: f64,
    pub y_old: [f64; N],
    pub y: [f64; N],
    pub f_old: [f64; N],
    pub f: [f64; N],
    k: [[f64; N]; 16],
    extended: bool,
}

/// Dense output over one step, 7th order.
pub struct Interpolant<const N: usize> {
    t_old: f64,
    h: f64,
    y_old: [f64; N],
    coeffs: [[f64; N]; 7],
}

impl<const N: usize> Interpolant<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let x = (t - self.t_old) / self.h;
        let mut y = [0.0; N];
        for (i, f) in self.coeffs.iter().rev().enumerate() {
            let w = if i % 2 == 0 { x } else { 1.0 - x };
            for c in 0..N {
                y[c] = (y[c] + f[c]) * w;
            }
        }
        for c in 0..N {
            y[c] += self.y_old[c];
        }
        y
    }
}

impl<const N: usize> Step<N> {
    pub fn h(&self) -> f64 {
        self.t - self.t_old
    }

    /// Builds the interpolant; costs three extra right-hand-side evaluations.
    pub fn interpolant<S: Autonomous<N>>(&mut self, sys: &S) -> Interpolant<N> {
        let h = self.h();
        if !self.extended {
            for s in (N_STAGES + 1)..16 {
                let mut y = self.y_old;
                for (j, kj) in self.k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for c in 0..N {
                            y[c] += h * a * kj[c];
                        }
                    }
                }
                let mut out = [0.0; N];
                sys.rhs(&y, &mut out);
                self.k[s] = out;
            }
            self.extended = true;
        }
        let mut coeffs = [[0.0; N]; 7];
        for c in 0..N {
            let dy = self.y[c] - self.y_old[c];
            coeffs[0][c] = dy;
            coeffs[1][c] = h * self.f_old[c] - dy;
            coeffs[2][c] = 2.0 * dy - h * (self.f[c] + self.f_old[c]);
        }
        for (r, drow) in D.iter().enumerate() {
            for c in 0..N {
                let mut acc = 0.0;
                for (j, d) in drow.iter().enumerate() {
                    if *d != 0.0 {
                        acc += d * self.k[j][c];
                    }
                }
                coeffs[3 + r][c] = h * acc;
            }
        }
        Interpolant {
            t_old: self.t_old,
            h,
            y_old: self.y_old,
            coeffs,
        }
    }
}

/// Adaptive stepper.
pub struct Dop853<const N: usize> {
    pub tol: Tolerances,
    pub h_max: f64,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h_abs: f64,
    error_mask: [bool; N],
    n_error: usize,
}

impl<const N: usize> Dop853<N> {
    pub fn new<S: Autonomous<N>>(sys: &S, t0: f64, y0: [f64; N], tol: Tolerances) -> Self {
        Self::with_error_mask(sys, t0, y0, tol, [true; N])
    }

    /// Components with `mask[c] == false` are integrated but excluded from
    /// step-size control.
    pub fn with_error_mask<S: Autonomous<N>>(
        sys: &S,
        t0: f64,
        y0: [f64; N],
        tol: Tolerances,
        mask: [bool; N],
    ) -> Self {
        let mut f = [0.0; N];
        sys.rhs(&y0, &mut f);
        let mut st = Dop853 {
            tol,
            h_max: f64::INFINITY,
            t: t0,
            y: y0,
            f,
            h_abs: 0.0,
            error_mask: mask,
            n_error: mask.iter().filter(|m| **m).count().max(1),
        };
        st.h_abs = st.initial_step(sys);
        st
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self.h_abs = self.h_abs.min(h_max);
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.atol + a.abs().max(b.abs()) * self.tol.rtol
    }

    fn initial_step<S: Autonomous<N>>(&self, sys: &S) -> f64 {
        // Hairer's heuristic, as in `select_initial_step`.
        let order = 7.0;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        let n = self.n_error as f64;
        for c in (0..N).filter(|&c| self.error_mask[c]) {
            let sc = self.scale(self.y[c], self.y[c]);
            d0 += (self.y[c] / sc).powi(2);
            d1 += (self.f[c] / sc).powi(2);
        }
        d0 = (d0 / n).sqrt();
        d1 = (d1 / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut y1 = self.y;
        for c in 0..N {
            y1[c] += h0 * self.f[c];
        }
        let mut f1 = [0.0; N];
        sys.rhs(&y1, &mut f1);
        let mut d2 = 0.0;
        for c in (0..N).filter(|&c| self.error_mask[c]) {
            let sc = self.scale(self.y[c], self.y[c]);
            d2 += ((f1[c] - self.f[c]) / sc).powi(2);
        }
        d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / (order + 1.0))
        };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// Advances by one accepted step.
    pub fn step<S: Autonomous<N>>(&mut self, sys: &S) -> Result<Step<N>, StepUnderflow> {
        let min_step = 10.0 * (next_up(self.t) - self.t).abs();
        let mut h_abs = self.h_abs.min(self.h_max).max(min_step);
        let mut rejected = false;
        let mut k = [[0.0; N]; 16];
        loop {
            if h_abs < min_step || !h_abs.is_finite() {
                return Err(StepUnderflow { t: self.t });
            }
            let h = h_abs;
            k[0] = self.f;
            for s in 1..N_STAGES {
                let mut y = self.y;
                for j in 0..s {
                    let a = A[s][j];
                    if a != 0.0 {
                        for c in 0..N {
                            y[c] += h * a * k[j][c];
                        }
                    }
                }
                let mut out = [0.0; N];
                sys.rhs(&y, &mut out);
                k[s] = out;
            }
            let mut y_new = self.y;
            for j in 0..N_STAGES {
                let b = A[12][j];
                if b != 0.0 {
                    for c in 0..N {
                        y_new[c] += h * b * k[j][c];
                    }
                }
            }
            let mut f_new = [0.0; N];
            sys.rhs(&y_new, &mut f_new);
            k[12] = f_new;

            let mut err5 = 0.0;
            let mut err3 = 0.0;
            for c in 0..N {
                if !self.error_mask[c] {
                    continue;
                }
                let sc = self.scale(self.y[c], y_new[c]);
                let mut e5 = 0.0;
                let mut e3 = 0.0;
                for j in 0..13 {
                    e5 += E5[j] * k[j][c];
                    e3 += E3[j] * k[j][c];
                }
                err5 += (e5 / sc).powi(2);
                err3 += (e3 / sc).powi(2);
            }
            let error_norm = if err5 == 0.0 && err3 == 0.0 {
                0.0
            } else {
                h * err5 / ((err5 + 0.01 * err3) * self.n_error as f64).sqrt()
            };

            if error_norm < 1.0 {
                let mut factor = if error_norm == 0.0 {
                    MAX_FACTOR
                } else {
                    MAX_FACTOR.min(SAFETY * error_norm.powf(-1.0 / 8.0))
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                let step = Step {
                    t_old: self.t,
                    t: self.t + h,
                    y_old: self.y,
                    y: y_new,
                    f_old: self.f,
                    f: f_new,
                    k,
                    extended: false,
                };
                self.t += h;
                self.y = y_new;
                self.f = f_new;
                self.h_abs = h_abs * factor;
                return Ok(step);
            }
            h_abs *= MIN_FACTOR.max(SAFETY * error_norm.powf(-1.0 / 8.0));
            rejected = true;
        }
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}
