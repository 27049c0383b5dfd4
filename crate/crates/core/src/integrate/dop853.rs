//! Dormand-Prince 8(5,3) embedded Runge-Kutta pair with 7th-order dense output.
//!
//! Step-size control and the combined 5th/3rd-order error estimate follow
//! Hairer, Norsett & Wanner, "Solving Ordinary Differential Equations I".

use crate::error::{Error, Result};

/// Autonomous first-order system `y' = f(y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed |step|; `None` for unbounded.
    pub h_max: Option<f64>,
    pub safety: f64,
    /// Bounds on the step-size ratio `h_new / h`.
    pub shrink_limit: f64,
    pub grow_limit: f64,
}

impl StepControl {
    pub fn with_tol(tol: f64) -> Self {
        StepControl {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-12,
            atol: 1e-12,
            h_max: None,
            safety: 0.9,
            shrink_limit: 0.333,
            grow_limit: 6.0,
        }
    }
}

/// Dense-output polynomial for one accepted step, in the step fraction `theta in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub tau0: f64,
    pub h: f64,
    dim: usize,
    /// 8 coefficient blocks of length `dim`.
    coeffs: Vec<f64>,
}

impl DenseStep {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau1(&self) -> f64 {
        self.tau0 + self.h
    }

    #[inline]
    fn block(&self, k: usize) -> &[f64] {
        &self.coeffs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn eval(&self, theta: f64, out: &mut [f64]) {
        let t1 = 1.0 - theta;
        let r: [&[f64]; 8] = std::array::from_fn(|k| self.block(k));
        for i in 0..self.dim {
            out[i] = r[0][i]
                + theta
                    * (r[1][i]
                        + t1 * (r[2][i]
                            + theta
                                * (r[3][i]
                                    + t1 * (r[4][i]
                                        + theta * (r[5][i] + t1 * (r[6][i] + theta * r[7][i]))))));
        }
    }

    pub fn eval_component(&self, theta: f64, i: usize) -> f64 {
        let t1 = 1.0 - theta;
        let c = |k: usize| self.coeffs[k * self.dim + i];
        c(0) + theta
            * (c(1)
                + t1 * (c(2)
                    + theta * (c(3) + t1 * (c(4) + theta * (c(5) + t1 * (c(6) + theta * c(7)))))))
    }

    pub fn start(&self) -> &[f64] {
        self.block(0)
    }

    pub fn end_value(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(1.0, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFailure {
    Underflow,
}

pub struct Dop853<'a, S: OdeSystem> {
    sys: &'a S,
    ctl: StepControl,
    tau: f64,
    y: Vec<f64>,
    f0: Vec<f64>,
    h: f64,
    fac_old: f64,
    last_rejected: bool,
    stages: Vec<Vec<f64>>,
    ytmp: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl<'a, S: OdeSystem> Dop853<'a, S> {
    /// `direction` is the sign of the integration direction in `tau`.
    pub fn new(sys: &'a S, tau0: f64, y0: Vec<f64>, direction: f64, ctl: StepControl) -> Result<Self> {
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::invalid("initial vector has wrong length"));
        }
        let mut f0 = vec![0.0; n];
        sys.rhs(&y0, &mut f0)?;
        let mut me = Dop853 {
            sys,
            ctl,
            tau: tau0,
            y: y0,
            f0,
            h: 0.0,
            fac_old: 1e-4,
            last_rejected: false,
            stages: vec![vec![0.0; n]; 17],
            ytmp: vec![0.0; n],
            accepted: 0,
            rejected: 0,
            evaluations: 1,
        };
        me.h = direction.signum() * me.initial_step()?;
        Ok(me)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.ctl.atol + self.ctl.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> Result<f64> {
        let n = self.y.len();
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = self.scale(self.y[i], 0.0);
            dnf += (self.f0[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let hmax = self.ctl.h_max.unwrap_or(f64::INFINITY);
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            0.01 * (dny / dnf).sqrt()
        };
        h = h.min(hmax);
        for i in 0..n {
            self.ytmp[i] = self.y[i] + h * self.f0[i];
        }
        let mut f1 = vec![0.0; n];
        self.sys.rhs(&self.ytmp, &mut f1)?;
        self.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = self.scale(self.y[i], 0.0);
            der2 += ((f1[i] - self.f0[i]) / sk).powi(2);
        }
        der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        Ok((100.0 * h).min(h1).min(hmax))
    }

    fn stage_input(&mut self, s: usize, h: f64) {
        let row = tableau::A[s];
        let n = self.y.len();
        self.ytmp.copy_from_slice(&self.y);
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let k = if j == 0 { &self.f0 } else { &self.stages[j] };
            for i in 0..n {
                self.ytmp[i] += h * a * k[i];
            }
        }
    }

    /// Advance one accepted step, never past `tau_limit`.
    pub fn step(&mut self, tau_limit: f64) -> Result<DenseStep> {
        let n = self.y.len();
        let dir = self.h.signum();
        loop {
            let remaining = tau_limit - self.tau;
            if remaining * dir <= 0.0 {
                return Err(Error::Precondition("step requested past the end of the span".into()));
            }
            if 0.1 * self.h.abs() <= f64::EPSILON * self.tau.abs() || self.h == 0.0 {
                return Err(Error::Precondition(format!(
                    "step-size underflow at tau = {}",
                    self.tau
                )));
            }
            let mut h = self.h;
            if let Some(hm) = self.ctl.h_max {
                if h.abs() > hm {
                    h = dir * hm;
                }
            }
            let last = (h * 1.01 - remaining) * dir >= 0.0;
            if last {
                h = remaining;
            }

            // stages 2..12 (1-based); stages[s] holds stage s+1, f0 is stage 1
            let mut failed = false;
            for s in 1..12 {
                self.stage_input(s, h);
                let (ytmp, stages) = (&self.ytmp, &mut self.stages);
                if self.sys.rhs(ytmp, &mut stages[s]).is_err() {
                    failed = true;
                    break;
                }
            }
            self.evaluations += 11;
            if failed {
                // a stage landed on a singular point: shrink and retry
                self.h = h * 0.25;
                self.rejected += 1;
                self.last_rejected = true;
                continue;
            }

            // 8th-order update and error estimates
            let mut ynew = vec![0.0; n];
            let (mut err, mut err2) = (0.0, 0.0);
            for i in 0..n {
                let k = |s: usize| if s == 0 { self.f0[i] } else { self.stages[s][i] };
                let mut inc = 0.0;
                let mut e5 = 0.0;
                for s in 0..12 {
                    let ks = k(s);
                    inc += tableau::B[s] * ks;
                    e5 += tableau::E[s] * ks;
                }
                ynew[i] = self.y[i] + h * inc;
                let e3 = inc - tableau::BHH[0] * k(0) - tableau::BHH[1] * k(8) - tableau::BHH[2] * k(11);
                let sk = self.scale(self.y[i], ynew[i]);
                err += (e5 / sk).powi(2);
                err2 += (e3 / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
            if !err.is_finite() {
                self.h = h * 0.25;
                self.rejected += 1;
                self.last_rejected = true;
                continue;
            }

            let fac11 = err.powf(1.0 / 8.0);
            let safe = self.ctl.safety;
            if err <= 1.0 {
                // stage 13: f(y_new)
                let mut fnew = vec![0.0; n];
                if self.sys.rhs(&ynew, &mut fnew).is_err() {
                    self.h = h * 0.25;
                    self.rejected += 1;
                    self.last_rejected = true;
                    continue;
                }
                self.evaluations += 1;
                self.stages[12] = fnew;
                let dense = self.dense_output(h, &ynew)?;

                let fac = (fac11 / safe).clamp(1.0 / self.ctl.grow_limit, 1.0 / self.ctl.shrink_limit);
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = dir * h_new.abs().min(h.abs());
                }
                self.fac_old = err.max(1e-4);
                self.last_rejected = false;
                self.accepted += 1;
                self.tau = if last { tau_limit } else { self.tau + h };
                self.y = ynew;
                self.f0 = self.stages[12].clone();
                if !last || h_new.abs() > 0.0 {
                    self.h = if last { self.h } else { h_new };
                }
                return Ok(dense);
            } else {
                let h_new = h / (fac11 / safe).min(1.0 / self.ctl.shrink_limit);
                self.rejected += 1;
                self.last_rejected = true;
                self.h = h_new;
            }
        }
    }

    fn dense_output(&mut self, h: f64, ynew: &[f64]) -> Result<DenseStep> {
        let n = self.y.len();
        // extra stages 14..16 (0-based 13..15)
        for s in 13..16 {
            self.stage_input(s, h);
            let (ytmp, stages) = (&self.ytmp, &mut self.stages);
            self.sys.rhs(ytmp, &mut stages[s])?;
        }
        self.evaluations += 3;
        let mut coeffs = vec![0.0; 8 * n];
        for i in 0..n {
            let k = |s: usize| if s == 0 { self.f0[i] } else { self.stages[s][i] };
            let ydiff = ynew[i] - self.y[i];
            let bspl = h * k(0) - ydiff;
            coeffs[i] = self.y[i];
            coeffs[n + i] = ydiff;
            coeffs[2 * n + i] = bspl;
            coeffs[3 * n + i] = ydiff - h * k(12) - bspl;
            for r in 0..4 {
                let mut acc = 0.0;
                for (s, &d) in tableau::D[r].iter().enumerate() {
                    if d != 0.0 {
                        acc += d * k(s);
                    }
                }
                coeffs[(4 + r) * n + i] = h * acc;
            }
        }
        Ok(DenseStep {
            tau0: self.tau,
            h,
            dim: n,
            coeffs,
        })
    }
}

mod tableau {
    // Row s holds a_{s+1, j+1}; rows 12 (stage 13) is unused by the stepper.
    pub const A: [&[f64]; 16] = [
        &[],
        &[5.26001519587677318785587544488E-2],
        &[1.97250569845378994544595329183E-2, 5.91751709536136983633785987549E-2],
        &[2.95875854768068491816892993775E-2, 0.0, 8.87627564304205475450678981324E-2],
        &[
            2.41365134159266685502369798665E-1,
            0.0,
            -8.84549479328286085344864962717E-1,
            9.24834003261792003115737966543E-1,
        ],
        &[
            3.7037037037037037037037037037E-2,
            0.0,
            0.0,
            1.70828608729473871279604482173E-1,
            1.25467687566822425016691814123E-1,
        ],
        &[
            3.7109375E-2,
            0.0,
            0.0,
            1.70252211019544039314978060272E-1,
            6.02165389804559606850219397283E-2,
            -1.7578125E-2,
        ],
        &[
            3.70920001185047927108779319836E-2,
            0.0,
            0.0,
            1.70383925712239993810214054705E-1,
            1.07262030446373284651809199168E-1,
            -1.53194377486244017527936158236E-2,
            8.27378916381402288758473766002E-3,
        ],
        &[
            6.24110958716075717114429577812E-1,
            0.0,
            0.0,
            -3.36089262944694129406857109825E0,
            -8.68219346841726006818189891453E-1,
            2.75920996994467083049415600797E1,
            2.01540675504778934086186788979E1,
            -4.34898841810699588477366255144E1,
        ],
        &[
            4.77662536438264365890433908527E-1,
            0.0,
            0.0,
            -2.48811461997166764192642586468E0,
            -5.90290826836842996371446475743E-1,
            2.12300514481811942347288949897E1,
            1.52792336328824235832596922938E1,
            -3.32882109689848629194453265587E1,
            -2.03312017085086261358222928593E-2,
        ],
        &[
            -9.3714243008598732571704021658E-1,
            0.0,
            0.0,
            5.18637242884406370830023853209E0,
            1.09143734899672957818500254654E0,
            -8.14978701074692612513997267357E0,
            -1.85200656599969598641566180701E1,
            2.27394870993505042818970056734E1,
            2.49360555267965238987089396762E0,
            -3.0467644718982195003823669022E0,
        ],
        &[
            2.27331014751653820792359768449E0,
            0.0,
            0.0,
            -1.05344954667372501984066689879E1,
            -2.00087205822486249909675718444E0,
            -1.79589318631187989172765950534E1,
            2.79488845294199600508499808837E1,
            -2.85899827713502369474065508674E0,
            -8.87285693353062954433549289258E0,
            1.23605671757943030647266201528E1,
            6.43392746015763530355970484046E-1,
        ],
        &[],
        &[
            5.61675022830479523392909219681E-2,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            2.53500210216624811088794765333E-1,
            -2.46239037470802489917441475441E-1,
            -1.24191423263816360469010140626E-1,
            1.5329179827876569731206322685E-1,
            8.20105229563468988491666602057E-3,
            7.56789766054569976138603589584E-3,
            -8.298E-3,
        ],
        &[
            3.18346481635021405060768473261E-2,
            0.0,
            0.0,
            0.0,
            0.0,
            2.83009096723667755288322961402E-2,
            5.35419883074385676223797384372E-2,
            -5.49237485713909884646569340306E-2,
            0.0,
            0.0,
            -1.08347328697249322858509316994E-4,
            3.82571090835658412954920192323E-4,
            -3.40465008687404560802977114492E-4,
            1.41312443674632500278074618366E-1,
        ],
        &[
            -4.28896301583791923408573538692E-1,
            0.0,
            0.0,
            0.0,
            0.0,
            -4.69762141536116384314449447206E0,
            7.68342119606259904184240953878E0,
            4.06898981839711007970213554331E0,
            3.56727187455281109270669543021E-1,
            0.0,
            0.0,
            0.0,
            -1.39902416515901462129418009734E-3,
            2.9475147891527723389556272149E0,
            -9.15095847217987001081870187138E0,
        ],
    ];

    pub const B: [f64; 12] = [
        5.42937341165687622380535766363E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        4.45031289275240888144113950566E0,
        1.89151789931450038304281599044E0,
        -5.8012039600105847814672114227E0,
        3.1116436695781989440891606237E-1,
        -1.52160949662516078556178806805E-1,
        2.01365400804030348374776537501E-1,
        4.47106157277725905176885569043E-2,
    ];

    pub const BHH: [f64; 3] = [
        0.244094488188976377952755905512E+00,
        0.733846688281611857341361741547E+00,
        0.220588235294117647058823529412E-01,
    ];

    pub const E: [f64; 12] = [
        0.1312004499419488073250102996E-01,
        0.0,
        0.0,
        0.0,
        0.0,
        -0.1225156446376204440720569753E+01,
        -0.4957589496572501915214079952E+00,
        0.1664377182454986536961530415E+01,
        -0.3503288487499736816886487290E+00,
        0.3341791187130174790297318841E+00,
        0.8192320648511571246570742613E-01,
        -0.2235530786388629525884427845E-01,
    ];

    pub const D: [[f64; 16]; 4] = [
        [
            -0.84289382761090128651353491142E+01,
            0.0,
            0.0,
            0.0,
            0.0,
            0.56671495351937776962531783590E+00,
            -0.30689499459498916912797304727E+01,
            0.23846676565120698287728149680E+01,
            0.21170345824450282767155149946E+01,
            -0.87139158377797299206789907490E+00,
            0.22404374302607882758541771650E+01,
            0.63157877876946881815570249290E+00,
            -0.88990336451333310820698117400E-01,
            0.18148505520854727256656404962E+02,
            -0.91946323924783554000451984436E+01,
            -0.44360363875948939664310572000E+01,
        ],
        [
            0.10427508642579134603413151009E+02,
            0.0,
            0.0,
            0.0,
            0.0,
            0.24228349177525818288430175319E+03,
            0.16520045171727028198505394887E+03,
            -0.37454675472269020279518312152E+03,
            -0.22113666853125306036270938578E+02,
            0.77334326684722638389603898808E+01,
            -0.30674084731089398182061213626E+02,
            -0.93321305264302278729567221706E+01,
            0.15697238121770843886131091075E+02,
            -0.31139403219565177677282850411E+02,
            -0.93529243588444783865713862664E+01,
            0.35816841486394083752465898540E+02,
        ],
        [
            0.19985053242002433820987653617E+02,
            0.0,
            0.0,
            0.0,
            0.0,
            -0.38703730874935176555105901742E+03,
            -0.18917813819516756882830838328E+03,
            0.52780815920542364900561016686E+03,
            -0.11573902539959630126141871134E+02,
            0.68812326946963000169666922661E+01,
            -0.10006050966910838403183860980E+01,
            0.77771377980534432092869265740E+00,
            -0.27782057523535084065932004339E+01,
            -0.60196695231264120758267380846E+02,
            0.84320405506677161018159903784E+02,
            0.11992291136182789328035130030E+02,
        ],
        [
            -0.25693933462703749003312586129E+02,
            0.0,
            0.0,
            0.0,
            0.0,
            -0.15418974869023643374053993627E+03,
            -0.23152937917604549567536039109E+03,
            0.35763911791061412378285349910E+03,
            0.93405324183624310003907691704E+02,
            -0.37458323136451633156875139351E+02,
            0.10409964950896230045147246184E+03,
            0.29840293426660503123344363579E+02,
            -0.43533456590011143754432175058E+02,
            0.96324553959188282948394950600E+02,
            -0.39177261675615439165231486172E+02,
            -0.14972683625798562581422125276E+03,
        ],
    ];
}

/// Integrate from `tau0` to `tau1`, returning every accepted dense step.
pub fn integrate_dense<S: OdeSystem>(
    sys: &S,
    tau0: f64,
    y0: Vec<f64>,
    tau1: f64,
    ctl: StepControl,
    max_steps: usize,
) -> Result<Vec<DenseStep>> {
    let mut stepper = Dop853::new(sys, tau0, y0, tau1 - tau0, ctl)?;
    let mut out = Vec::new();
    while (tau1 - stepper.tau()) * (tau1 - tau0).signum() > 0.0 {
        if out.len() >= max_steps {
            return Err(Error::Precondition(format!("max steps {max_steps} reached")));
        }
        out.push(stepper.step(tau1)?);
    }
    Ok(out)
}

/// Integrate and return only the final value.
pub fn integrate_to<S: OdeSystem>(
    sys: &S,
    tau0: f64,
    y0: Vec<f64>,
    tau1: f64,
    ctl: StepControl,
    max_steps: usize,
) -> Result<Vec<f64>> {
    if tau1 == tau0 {
        return Ok(y0);
    }
    let mut stepper = Dop853::new(sys, tau0, y0, tau1 - tau0, ctl)?;
    let mut n = 0;
    while (tau1 - stepper.tau()) * (tau1 - tau0).signum() > 0.0 {
        if n >= max_steps {
            return Err(Error::Precondition(format!("max steps {max_steps} reached")));
        }
        stepper.step(tau1)?;
        n += 1;
    }
    Ok(stepper.y().to_vec())
}
