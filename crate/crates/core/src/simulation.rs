//! Time-domain check of the disruption metric: fixed-step RK4 simulation of
//! the attacked closed loop `ẋ = A_c x + B_A ζ` from rest, with trapezoidal
//! energy accounting, and a randomized search for stealthy attacks that
//! lower-bounds `Q(M, A)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{AttackSet, MonitorSet, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("time step {dt} exceeds the stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("time step and horizon must be positive and finite (dt = {dt}, horizon = {horizon})")]
    BadGrid { dt: f64, horizon: f64 },
    #[error("attack signal is not finite at t = {0}")]
    NonFinite(f64),
    #[error("signal has {got} channels, attack set has {expected}")]
    ChannelCount { expected: usize, got: usize },
}

/// `amplitude · sin(frequency·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// Sum of tones under an optional envelope `e^{−decay·t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub tones: Vec<Tone>,
    #[serde(default)]
    pub decay: f64,
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        let s: f64 = self
            .tones
            .iter()
            .map(|tone| tone.amplitude * (tone.frequency * t + tone.phase).sin())
            .sum();
        s * (-self.decay * t).exp()
    }

    pub fn scaled(&self, factor: f64) -> Waveform {
        Waveform {
            tones: self
                .tones
                .iter()
                .map(|t| Tone {
                    amplitude: t.amplitude * factor,
                    ..*t
                })
                .collect(),
            decay: self.decay,
        }
    }
}

/// Per-channel attack waveforms, active on `[0, support]` and zero after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSignal {
    pub channels: Vec<Waveform>,
    pub support: f64,
}

impl AttackSignal {
    pub fn zero(channels: usize, support: f64) -> Self {
        AttackSignal {
            channels: vec![
                Waveform {
                    tones: vec![],
                    decay: 0.0
                };
                channels
            ],
            support,
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        if t > self.support {
            return DVector::zeros(self.channels.len());
        }
        DVector::from_iterator(self.channels.len(), self.channels.iter().map(|w| w.eval(t)))
    }

    /// Trapezoidal `‖ζ_j‖²` over `[0, support]` on a grid of step `dt`.
    pub fn channel_energies(&self, dt: f64) -> DVector<f64> {
        let steps = (self.support / dt).round().max(1.0) as usize;
        let h = self.support / steps as f64;
        let mut e = DVector::zeros(self.channels.len());
        for (j, w) in self.channels.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..=steps {
                let v = w.eval(k as f64 * h);
                let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
                acc += weight * v * v;
            }
            e[j] = acc * h;
        }
        e
    }

    pub fn scaled(&self, factor: f64) -> AttackSignal {
        AttackSignal {
            channels: self.channels.iter().map(|w| w.scaled(factor)).collect(),
            support: self.support,
        }
    }
}

/// `ẋ = a·x + b·ζ`, performance output `p = w·x`, monitor outputs `y_m = x_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl LtiSystem {
    pub fn attacked(spec: &NetworkSpec, attack: &AttackSet) -> Self {
        LtiSystem {
            a: spec.closed_loop().clone(),
            b: spec.attack_input_matrix(attack),
            w: spec.perf_weight().clone(),
        }
    }

    /// Largest `|λ|` over the eigenvalues of `a`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Integrator stability limit `0.1 / max|λ|`.
    pub fn max_step(&self) -> f64 {
        let r = self.spectral_radius();
        if r > 0.0 {
            0.1 / r
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `‖p(t)‖²` at each sample.
    pub perf_power: Vec<f64>,
    /// `J = ‖p‖²` over the horizon.
    pub perf_energy: f64,
    /// `‖x_i‖²` over the horizon for every node (monitor energies are the
    /// monitored entries).
    pub node_energies: DVector<f64>,
    /// `‖ζ_j‖²` over the horizon.
    pub input_energies: DVector<f64>,
}

/// Energies only, for search loops that do not keep samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Energies {
    pub perf: f64,
    pub nodes: DVector<f64>,
    pub inputs: DVector<f64>,
}

fn integrate(
    sys: &LtiSystem,
    signal: &AttackSignal,
    dt: f64,
    horizon: f64,
    mut record: Option<&mut Trajectory>,
) -> Result<Energies, SimulationError> {
    if !(dt > 0.0 && dt.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(SimulationError::BadGrid { dt, horizon });
    }
    let limit = sys.max_step();
    if dt > limit * (1.0 + 1e-12) {
        return Err(SimulationError::StepTooLarge { dt, limit });
    }
    if signal.channels.len() != sys.b.ncols() {
        return Err(SimulationError::ChannelCount {
            expected: sys.b.ncols(),
            got: signal.channels.len(),
        });
    }
    let n = sys.a.nrows();
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;

    let input = |t: f64| -> Result<DVector<f64>, SimulationError> {
        let u = signal.eval(t);
        if u.iter().all(|v| v.is_finite()) {
            Ok(u)
        } else {
            Err(SimulationError::NonFinite(t))
        }
    };
    let f = |x: &DVector<f64>, u: &DVector<f64>| &sys.a * x + &sys.b * u;

    let mut x = DVector::zeros(n);
    let mut u = input(0.0)?;
    let mut e = Energies {
        perf: 0.0,
        nodes: DVector::zeros(n),
        inputs: DVector::zeros(sys.b.ncols()),
    };
    let accumulate = |x: &DVector<f64>, u: &DVector<f64>, weight: f64, e: &mut Energies| -> f64 {
        let p = (&sys.w * x).norm_squared();
        e.perf += weight * p;
        e.nodes += x.component_mul(x) * weight;
        e.inputs += u.component_mul(u) * weight;
        p
    };

    let p0 = accumulate(&x, &u, 0.5 * h, &mut e);
    if let Some(tr) = record.as_deref_mut() {
        tr.times.push(0.0);
        tr.states.push(x.clone());
        tr.perf_power.push(p0);
    }
    for k in 0..steps {
        let t = k as f64 * h;
        let u_mid = input(t + 0.5 * h)?;
        let u_next = input(t + h)?;
        let k1 = f(&x, &u);
        let k2 = f(&(&x + &k1 * (0.5 * h)), &u_mid);
        let k3 = f(&(&x + &k2 * (0.5 * h)), &u_mid);
        let k4 = f(&(&x + &k3 * h), &u_next);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        u = u_next;
        let weight = if k + 1 == steps { 0.5 * h } else { h };
        let p = accumulate(&x, &u, weight, &mut e);
        if let Some(tr) = record.as_deref_mut() {
            tr.times.push(t + h);
            tr.states.push(x.clone());
            tr.perf_power.push(p);
        }
    }
    Ok(e)
}

/// Default horizon `50 / |Re λ_max(A_c)|`.
pub fn default_horizon(spec: &NetworkSpec) -> f64 {
    50.0 / spec.slowest_rate()
}

/// Simulates a general LTI system from rest over `[0, horizon]`.
pub fn simulate_lti(
    sys: &LtiSystem,
    signal: &AttackSignal,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory, SimulationError> {
    let mut tr = Trajectory {
        dt,
        times: Vec::new(),
        states: Vec::new(),
        perf_power: Vec::new(),
        perf_energy: 0.0,
        node_energies: DVector::zeros(0),
        input_energies: DVector::zeros(0),
    };
    let e = integrate(sys, signal, dt, horizon, Some(&mut tr))?;
    tr.dt = horizon / (tr.times.len() - 1) as f64;
    tr.perf_energy = e.perf;
    tr.node_energies = e.nodes;
    tr.input_energies = e.inputs;
    Ok(tr)
}

/// Simulates the attacked network from rest over `[0, horizon]`.
pub fn simulate(
    spec: &NetworkSpec,
    attack: &AttackSet,
    signal: &AttackSignal,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory, SimulationError> {
    simulate_lti(&LtiSystem::attacked(spec, attack), signal, dt, horizon)
}

/// Energies without keeping samples.
pub fn simulate_energies(
    sys: &LtiSystem,
    signal: &AttackSignal,
    dt: f64,
    horizon: f64,
) -> Result<Energies, SimulationError> {
    integrate(sys, signal, dt, horizon, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    pub stealthy: bool,
    /// `(node, δ_m − ‖y_m‖²)` for each monitored node, 0-based.
    pub margins: Vec<(usize, f64)>,
    /// Monitored nodes whose energy crossed the threshold.
    pub alarms: Vec<usize>,
}

pub fn stealth_report(node_energies: &DVector<f64>, monitors: &MonitorSet, spec: &NetworkSpec) -> StealthReport {
    let margins: Vec<(usize, f64)> = monitors
        .nodes()
        .iter()
        .map(|&m| (m, spec.alarm_thresholds()[m] - node_energies[m]))
        .collect();
    let alarms: Vec<usize> = margins.iter().filter(|(_, g)| *g < 0.0).map(|(m, _)| *m).collect();
    StealthReport {
        stealthy: alarms.is_empty(),
        margins,
        alarms,
    }
}

pub fn is_stealthy(traj: &Trajectory, monitors: &MonitorSet, spec: &NetworkSpec) -> StealthReport {
    stealth_report(&traj.node_energies, monitors, spec)
}

/// Every channel's energy is at most `E` (relative slack `1e-9` for
/// quadrature rounding).
pub fn is_admissible(signal: &AttackSignal, energy: f64, dt: f64) -> bool {
    signal.channel_energies(dt).iter().all(|&e| e <= energy * (1.0 + 1e-9))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub dt: Option<f64>,
    /// Attack support; defaults to [`default_horizon`].
    pub support: Option<f64>,
    /// Extra simulated time after the attack stops, in units of the slowest
    /// time constant, so the state returns to rest.
    pub settle: f64,
    pub max_tones: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            dt: None,
            support: None,
            settle: 20.0,
            max_tones: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    /// Best `J` over admissible stealthy trials (0 if none).
    pub value: f64,
    pub signal: AttackSignal,
    pub trial: Option<usize>,
    /// Trials that were stealthy at full energy.
    pub stealthy_trials: usize,
}

fn random_signal(
    rng: &mut ChaCha8Rng,
    channels: usize,
    support: f64,
    slow: f64,
    fast: f64,
    max_tones: usize,
) -> AttackSignal {
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.gen_range(lo.ln()..hi.ln())).exp();
    let waves = (0..channels)
        .map(|_| {
            let count = if rng.gen_bool(0.5) {
                1
            } else {
                rng.gen_range(1..=max_tones.max(1))
            };
            let tones = (0..count)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        Tone {
                            amplitude: rng.gen_range(-1.0..1.0),
                            frequency: 0.0,
                            phase: PI / 2.0,
                        }
                    } else {
                        Tone {
                            amplitude: rng.gen_range(0.1..1.0),
                            frequency: log_uniform(rng, 1e-2 * slow, fast),
                            phase: rng.gen_range(0.0..2.0 * PI),
                        }
                    }
                })
                .collect();
            let decay = if rng.gen_bool(0.5) {
                0.0
            } else {
                log_uniform(rng, 1e-3 * slow, slow)
            };
            Waveform { tones, decay }
        })
        .collect();
    AttackSignal {
        channels: waves,
        support,
    }
}

/// `(J, signal, stealthy without shrinking)` for one trial.
type Draw = (f64, AttackSignal, bool);

/// Random search over sum-of-sinusoid attacks. Each draw is rescaled so every
/// channel spends exactly `E`; draws that trip an alarm are also tried after
/// uniform shrinking to the stealth boundary. Trial `i` uses ChaCha8 seeded
/// with `seed` on stream `i`, so results do not depend on scheduling.
pub fn randomized_lower_bound(
    spec: &NetworkSpec,
    monitors: &MonitorSet,
    attack: &AttackSet,
    energy: f64,
    trials: usize,
    seed: u64,
    settings: &SearchSettings,
) -> Result<LowerBound, SimulationError> {
    let sys = LtiSystem::attacked(spec, attack);
    let slow = spec.slowest_rate();
    let fast = sys.spectral_radius().max(slow);
    let support = settings.support.unwrap_or_else(|| default_horizon(spec));
    let horizon = support + settings.settle / slow;
    let dt = settings
        .dt
        .unwrap_or_else(|| sys.max_step().min(support / 2000.0) * 0.1);
    let alpha = attack.len();

    let results: Vec<Result<Option<Draw>, SimulationError>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let raw = random_signal(&mut rng, alpha, support, slow, 10.0 * fast, settings.max_tones);
            let e = raw.channel_energies(dt);
            let mut signal = raw.clone();
            for j in 0..alpha {
                if e[j] > 0.0 {
                    signal.channels[j] = raw.channels[j].scaled((energy / e[j]).sqrt());
                }
            }
            if !is_admissible(&signal, energy, dt) {
                return Ok(None);
            }
            let en = simulate_energies(&sys, &signal, dt, horizon)?;
            let report = stealth_report(&en.nodes, monitors, spec);
            if report.stealthy {
                return Ok(Some((en.perf, signal, true)));
            }
            // Linear in amplitude: shrink until the tightest monitor sits on
            // its threshold.
            let shrink = monitors
                .nodes()
                .iter()
                .map(|&m| (spec.alarm_thresholds()[m] / en.nodes[m]).sqrt())
                .fold(1.0, f64::min)
                * (1.0 - 1e-9);
            Ok(Some((en.perf * shrink * shrink, signal.scaled(shrink), false)))
        })
        .collect();

    let mut best = LowerBound {
        value: 0.0,
        signal: AttackSignal::zero(alpha, support),
        trial: None,
        stealthy_trials: 0,
    };
    for (i, r) in results.into_iter().enumerate() {
        if let Some((value, signal, stealthy)) = r? {
            if stealthy {
                best.stealthy_trials += 1;
            }
            if value > best.value {
                best.value = value;
                best.signal = signal;
                best.trial = Some(i);
            }
        }
    }
    Ok(best)
}

impl Trajectory {
    /// CSV with columns `t, x1..xN, p_norm_sq` and the running energy
    /// `energy_y{m}` of each monitored node (1-based names).
    pub fn write_csv<W: Write>(&self, out: W, monitors: &MonitorSet) -> csv::Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("p_norm_sq".into());
        header.extend(monitors.one_based().iter().map(|m| format!("energy_y{m}")));
        w.write_record(&header)?;
        let mut running = vec![0.0; monitors.len()];
        for k in 0..self.times.len() {
            if k > 0 {
                let h = self.times[k] - self.times[k - 1];
                for (slot, &m) in running.iter_mut().zip(monitors.nodes()) {
                    let (a, b) = (self.states[k - 1][m], self.states[k][m]);
                    *slot += 0.5 * h * (a * a + b * b);
                }
            }
            let mut rec = vec![self.times[k].to_string()];
            rec.extend(self.states[k].iter().map(|v| v.to_string()));
            rec.push(self.perf_power[k].to_string());
            rec.extend(running.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::SolverSettings;
    use crate::disruption::worst_case_disruption;
    use crate::network::{build_network, RawNetwork};
    use approx::assert_relative_eq;

    fn chain2() -> NetworkSpec {
        build_network(&RawNetwork {
            nodes: 2,
            interconnection: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            control_gains: vec![1.0, 1.0],
            perf_weight: None,
            alarm_thresholds: vec![1.0, 1.0],
            sensor_costs: None,
            local_dynamics: None,
        })
        .unwrap()
    }

    fn scalar() -> LtiSystem {
        LtiSystem {
            a: DMatrix::from_element(1, 1, -1.0),
            b: DMatrix::from_element(1, 1, 1.0),
            w: DMatrix::from_element(1, 1, 1.0),
        }
    }

    fn tone(amplitude: f64, frequency: f64, phase: f64) -> Tone {
        Tone {
            amplitude,
            frequency,
            phase,
        }
    }

    #[test]
    fn zero_signal_stays_at_rest() {
        let spec = chain2();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let tr = simulate(&spec, &a, &AttackSignal::zero(1, 5.0), 0.01, 5.0).unwrap();
        assert!(tr.states.iter().all(|x| x.iter().all(|&v| v == 0.0)));
        assert_eq!(tr.perf_energy, 0.0);
        let m = MonitorSet::new(&[0, 1], 2, 2).unwrap();
        let r = is_stealthy(&tr, &m, &spec);
        assert!(r.stealthy);
        assert_eq!(r.margins, vec![(0, 1.0), (1, 1.0)]);
        assert!(is_stealthy(&tr, &MonitorSet::empty(), &spec).stealthy);
        assert!(is_admissible(&AttackSignal::zero(1, 5.0), 1e-12, 0.01));
    }

    #[test]
    fn scalar_decay_closed_form() {
        // x = t·e^{−t}; ∫₀^∞ t²e^{−2t} dt = 1/4.
        let signal = AttackSignal {
            channels: vec![Waveform {
                tones: vec![tone(1.0, 0.0, PI / 2.0)],
                decay: 1.0,
            }],
            support: 20.0,
        };
        let tr = simulate_lti(&scalar(), &signal, 1e-3, 20.0).unwrap();
        assert!((tr.perf_energy - 0.25).abs() < 1e-3, "{}", tr.perf_energy);
        let t = tr.times[1000];
        assert_relative_eq!(tr.states[1000][0], t * (-t).exp(), max_relative = 1e-9);
        assert_eq!(tr.times.len(), 20_001);
    }

    #[test]
    fn quadratic_scaling() {
        let spec = chain2();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let s = AttackSignal {
            channels: vec![Waveform {
                tones: vec![tone(0.7, 0.8, 0.1), tone(0.2, 2.5, 1.0)],
                decay: 0.05,
            }],
            support: 10.0,
        };
        let one = simulate(&spec, &a, &s, 0.005, 15.0).unwrap();
        let two = simulate(&spec, &a, &s.scaled(2.0), 0.005, 15.0).unwrap();
        assert_relative_eq!(two.perf_energy, 4.0 * one.perf_energy, max_relative = 1e-6);
        for i in 0..2 {
            assert_relative_eq!(two.node_energies[i], 4.0 * one.node_energies[i], max_relative = 1e-6);
        }
    }

    #[test]
    fn step_limit_enforced() {
        let spec = chain2();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let err = simulate(&spec, &a, &AttackSignal::zero(1, 1.0), 0.05, 1.0).unwrap_err();
        assert!(matches!(err, SimulationError::StepTooLarge { .. }));
        let nan = AttackSignal {
            channels: vec![Waveform {
                tones: vec![tone(f64::NAN, 1.0, 0.0)],
                decay: 0.0,
            }],
            support: 1.0,
        };
        assert!(matches!(
            simulate(&spec, &a, &nan, 0.01, 1.0),
            Err(SimulationError::NonFinite(_))
        ));
    }

    #[test]
    fn sinusoid_energy_closed_form() {
        for (omega, phase, t_end) in [(1.0, 0.3, 10.0), (5.0, 0.0, 3.0), (0.2, 1.1, 40.0)] {
            let s = AttackSignal {
                channels: vec![Waveform {
                    tones: vec![tone(1.0, omega, phase)],
                    decay: 0.0,
                }],
                support: t_end,
            };
            let dt = 1e-3 * 2.0 * PI / omega;
            let exact = t_end / 2.0 - ((2.0 * (omega * t_end + phase)).sin() - (2.0 * phase).sin()) / (4.0 * omega);
            assert_relative_eq!(s.channel_energies(dt)[0], exact, max_relative = 1e-4);
            assert!(is_admissible(&s, exact * 1.001, dt));
            assert!(!is_admissible(&s, exact * 0.999, dt));
        }
    }

    #[test]
    fn rk4_converges() {
        let spec = chain2();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let s = AttackSignal {
            channels: vec![Waveform {
                tones: vec![tone(1.0, 2.0, 0.0)],
                decay: 0.2,
            }],
            support: 10.0,
        };
        let coarse = simulate(&spec, &a, &s, 0.01, 20.0).unwrap().perf_energy;
        let fine = simulate(&spec, &a, &s, 0.005, 20.0).unwrap().perf_energy;
        assert!(((coarse - fine) / fine).abs() < 1e-5);
    }

    #[test]
    fn search_reaches_closed_form_and_never_exceeds_it() {
        let spec = chain2();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let q = worst_case_disruption(&spec, &MonitorSet::empty(), &a, 1.0, &SolverSettings::default())
            .unwrap()
            .value;
        let lb =
            randomized_lower_bound(&spec, &MonitorSet::empty(), &a, 1.0, 64, 5, &SearchSettings::default()).unwrap();
        assert!(lb.value <= q * (1.0 + 1e-3) + 1e-6, "{} > {}", lb.value, q);
        assert!(lb.value >= 0.8 * q, "{} < 0.8·{}", lb.value, q);
        assert!(is_admissible(&lb.signal, 1.0, 0.001));
    }

    #[test]
    fn tight_thresholds_choke_the_attack() {
        let spec = chain2().with_thresholds(DVector::from_element(2, 1e-8)).unwrap();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let m = MonitorSet::new(&[0, 1], 2, 2).unwrap();
        let lb = randomized_lower_bound(&spec, &m, &a, 1.0, 16, 1, &SearchSettings::default()).unwrap();
        assert!(lb.value < 1e-6, "{}", lb.value);
    }

    #[test]
    fn csv_export() {
        let spec = chain2();
        let a = AttackSet::new(&[1], 2, 1).unwrap();
        let s = AttackSignal {
            channels: vec![Waveform {
                tones: vec![tone(1.0, 1.0, 0.0)],
                decay: 0.0,
            }],
            support: 1.0,
        };
        let tr = simulate(&spec, &a, &s, 0.01, 1.0).unwrap();
        let m = MonitorSet::new(&[1], 2, 1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,p_norm_sq,energy_y2"));
        assert_eq!(text.lines().count(), tr.times.len() + 1);
        let last: Vec<f64> = text
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_relative_eq!(last[4], tr.node_energies[1], max_relative = 1e-12);
    }
}
