//! Current-based leaky integrate-and-fire neuron with exponential synapses
//! (`IF_curr_exp`), advanced on a fixed step with closed-form updates.
//!
//! Per step:
//! 1. a refractory neuron counts down and holds `v = v_reset`;
//! 2. otherwise `v` relaxes toward rest and integrates the synaptic current,
//!    which is held constant over the step;
//! 3. synaptic currents decay;
//! 4. threshold test, spike and reset;
//! 5. `v` is sampled;
//! 6. weights delivered for the next step are added to the synaptic currents.
//!
//! Decay factors are fixed-point constants with 32 fractional bits, so the
//! dynamics do not depend on the platform's `exp`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const FIXED_FRAC_BITS: i32 = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuronError {
    #[error("invalid neuron parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

/// Membrane and synapse parameters. Times in ms, potentials in mV,
/// capacitance in nF, currents in nA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub tau_m: f64,
    pub tau_syn_e: f64,
    pub tau_syn_i: f64,
    pub tau_refrac: f64,
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_thresh: f64,
    pub c_m: f64,
    pub i_offset: f64,
}

impl Default for LifParams {
    /// The set-value population of the loopback experiment.
    fn default() -> Self {
        Self {
            tau_m: 3.0,
            tau_syn_e: 0.5,
            tau_syn_i: 0.5,
            tau_refrac: 0.0,
            v_rest: -65.0,
            v_reset: -65.0,
            v_thresh: -50.0,
            c_m: 1.0,
            i_offset: 0.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), NeuronError> {
        let positive = [
            ("tau_m", self.tau_m),
            ("tau_syn_E", self.tau_syn_e),
            ("tau_syn_I", self.tau_syn_i),
            ("cm", self.c_m),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(NeuronError::InvalidParam {
                    name,
                    reason: format!("must be positive, got {value}"),
                });
            }
        }
        if !(self.tau_refrac.is_finite() && self.tau_refrac >= 0.0) {
            return Err(NeuronError::InvalidParam {
                name: "tau_refrac",
                reason: format!("must be non-negative, got {}", self.tau_refrac),
            });
        }
        for (name, value) in [
            ("v_rest", self.v_rest),
            ("v_reset", self.v_reset),
            ("v_thresh", self.v_thresh),
            ("i_offset", self.i_offset),
        ] {
            if !value.is_finite() {
                return Err(NeuronError::InvalidParam {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        if self.v_reset > self.v_thresh {
            return Err(NeuronError::InvalidParam {
                name: "v_reset",
                reason: format!("{} is above v_thresh {}", self.v_reset, self.v_thresh),
            });
        }
        Ok(())
    }
}

/// A decay factor `exp(-dt / tau)` rounded to 32 fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedDecay(u64);

impl FixedDecay {
    pub fn new(dt_ms: f64, tau_ms: f64) -> Self {
        let scaled = (-dt_ms / tau_ms).exp() * f64::powi(2.0, FIXED_FRAC_BITS);
        FixedDecay(scaled.round() as u64)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Exact value of the fixed-point constant.
    pub fn value(self) -> f64 {
        self.0 as f64 * f64::powi(2.0, -FIXED_FRAC_BITS)
    }
}

/// Parameters plus the per-step constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifKernel {
    pub params: LifParams,
    pub dt_us: u64,
    membrane: f64,
    syn_e: f64,
    syn_i: f64,
    input_gain: f64,
    refrac_steps: u32,
}

impl LifKernel {
    pub fn new(params: LifParams, dt_us: u64) -> Result<Self, NeuronError> {
        params.validate()?;
        if dt_us == 0 {
            return Err(NeuronError::InvalidParam {
                name: "dt",
                reason: "time step must be positive".into(),
            });
        }
        let dt_ms = dt_us as f64 / 1000.0;
        let membrane = FixedDecay::new(dt_ms, params.tau_m).value();
        // Round half up on whole steps.
        let refrac_steps = ((params.tau_refrac * 1000.0 / dt_us as f64) + 0.5).floor() as u32;
        Ok(Self {
            params,
            dt_us,
            membrane,
            syn_e: FixedDecay::new(dt_ms, params.tau_syn_e).value(),
            syn_i: FixedDecay::new(dt_ms, params.tau_syn_i).value(),
            input_gain: params.tau_m / params.c_m * (1.0 - membrane),
            refrac_steps,
        })
    }

    pub fn membrane_decay(&self) -> f64 {
        self.membrane
    }

    /// mV gained per nA of synaptic current held over one step.
    pub fn input_gain(&self) -> f64 {
        self.input_gain
    }

    pub fn refractory_steps(&self) -> u32 {
        self.refrac_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub v: f64,
    pub i_syn_e: f64,
    pub i_syn_i: f64,
    pub refrac_remaining: u32,
}

impl LifState {
    pub fn at_rest(params: &LifParams) -> Self {
        Self {
            v: params.v_rest,
            i_syn_e: 0.0,
            i_syn_i: 0.0,
            refrac_remaining: 0,
        }
    }

    /// Stages 1–5. Returns whether the neuron fired.
    pub fn advance(&mut self, kernel: &LifKernel) -> bool {
        let p = &kernel.params;
        if self.refrac_remaining > 0 {
            self.refrac_remaining -= 1;
            self.v = p.v_reset;
        } else {
            let current = self.i_syn_e - self.i_syn_i + p.i_offset;
            self.v = p.v_rest + (self.v - p.v_rest) * kernel.membrane + current * kernel.input_gain;
        }
        self.i_syn_e *= kernel.syn_e;
        self.i_syn_i *= kernel.syn_i;
        if self.refrac_remaining == 0 && self.v >= p.v_thresh {
            self.v = p.v_reset;
            self.refrac_remaining = kernel.refrac_steps;
            return true;
        }
        false
    }

    /// Stage 6: weights that take effect from the next step.
    pub fn inject(&mut self, input: SynapticInput) {
        self.i_syn_e += input.excitatory;
        self.i_syn_i += input.inhibitory;
    }
}

/// Summed synaptic weights (nA) delivered to one neuron in one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SynapticInput {
    pub excitatory: f64,
    pub inhibitory: f64,
}

impl SynapticInput {
    pub fn excitatory(weight: f64) -> Self {
        Self {
            excitatory: weight,
            inhibitory: 0.0,
        }
    }
}

/// One full step. The returned state's `v` is the recorded sample.
pub fn step_lif(state: &LifState, injected: SynapticInput, kernel: &LifKernel) -> (LifState, bool) {
    let mut next = *state;
    let spiked = next.advance(kernel);
    next.inject(injected);
    (next, spiked)
}
