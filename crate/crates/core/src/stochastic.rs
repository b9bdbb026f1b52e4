//! Keyed random streams and the sampling distributions of the generator.
//!
//! Every draw comes from a [`RandomStream`] addressed by
//! `(seed, purpose, entity, month)`. A stream is a ChaCha8 keystream whose key
//! holds the seed, purpose and month and whose stream id is the entity, so any
//! worker can reproduce any draw without shared state. The draw counter is
//! the position within that keystream.
//!
//! Distribution formulas are exposed as pure functions of their raw normal
//! and uniform draws; the `sample_*` functions bind them to streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{
    AgeParams, DistParams, InstallmentCountParams, Layout, MacroParams, PayDayParams,
    VolumeParams,
};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    ApplicationCount,
    AgeNormal,
    AgeUniform,
    Income,
    Installment,
    Spending,
    InstallmentCount,
    Nominal(u8),
    Interval(u8),
    MacroNoise,
    ScoreNoise,
    CycleNoise,
    PayDays,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::ApplicationCount => 1,
            Purpose::AgeNormal => 2,
            Purpose::AgeUniform => 3,
            Purpose::Income => 4,
            Purpose::Installment => 5,
            Purpose::Spending => 6,
            Purpose::InstallmentCount => 7,
            Purpose::MacroNoise => 8,
            Purpose::ScoreNoise => 9,
            Purpose::CycleNoise => 10,
            Purpose::PayDays => 11,
            Purpose::Nominal(k) => 0x100 + k as u64,
            Purpose::Interval(k) => 0x200 + k as u64,
        }
    }
}

/// Deterministic draw sequence for one `(seed, purpose, entity, month)` key.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, purpose: Purpose, entity: u64, month: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&purpose.tag().to_le_bytes());
        key[16..24].copy_from_slice(&month.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(entity);
        RandomStream { rng }
    }

    /// Stream keyed by month only (macro noise, application counts).
    pub fn for_month(seed: u64, purpose: Purpose, month: u32) -> Self {
        Self::new(seed, purpose, 0, month as u64)
    }

    /// Stream keyed by application (applicant characteristics).
    pub fn for_account(seed: u64, purpose: Purpose, app_id: u64) -> Self {
        Self::new(seed, purpose, app_id, u64::MAX)
    }

    /// Stream keyed by account and month (score noise, pay days).
    pub fn for_account_month(seed: u64, purpose: Purpose, app_id: u64, month: u32) -> Self {
        Self::new(seed, purpose, app_id, month as u64)
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// Truncation toward zero, the generator's `int()`.
fn int(x: f64) -> f64 {
    x.trunc()
}

// ---------------------------------------------------------------------------
// Formulas over raw draws

pub fn applications_count(p: &VolumeParams, normal: f64, december: bool, scale: f64) -> u32 {
    let mut volume = p.monthly_base * (1.0 + p.noise_sd * normal);
    if december {
        volume *= p.december_factor;
    }
    (volume * scale).round().max(0.0) as u32
}

pub fn age_years(p: &AgeParams, normal: f64, uniform: f64) -> f64 {
    let age = (p.max - p.min) * (normal + p.shift) / p.divisor + p.offset + p.uniform_span * uniform;
    age.clamp(p.min, p.max)
}

pub fn income(d: &DistParams, normal: f64) -> i64 {
    int(d.income_scale * normal.abs() + d.income_floor) as i64
}

/// `int(income * |N| / divisor)`; shared by installment and spending.
pub fn income_share(income: i64, normal: f64, divisor: f64) -> i64 {
    int(income as f64 * normal.abs() / divisor) as i64
}

pub fn installment_count(p: &InstallmentCountParams, normal: f64) -> u32 {
    let n = int(p.scale * normal.abs() / p.divisor + p.offset);
    (n.max(0.0) as u32).max(p.min)
}

pub fn nominal(d: &DistParams, normal: f64) -> u32 {
    int(d.nominal_scale * normal.abs()) as u32
}

pub fn interval(d: &DistParams, uniform: f64) -> f64 {
    d.interval_span * uniform
}

/// Pay-day offset in [-15, 15] given the due count before payment.
pub fn pay_days(p: &PayDayParams, n_due_before: u8, normal: f64) -> i8 {
    let days = if n_due_before < p.on_time_below {
        -int(p.span * (normal.abs() / p.divisor))
    } else {
        int(p.span * (normal / p.divisor))
    };
    days.clamp(-p.span, p.span) as i8
}

/// Lower and upper bounds of the macro variable (exclusive).
pub const MACRO_BOUNDS: (f64, f64) = (0.01, 0.9);

pub fn macro_value(p: &MacroParams, month: u32, horizon: u32, normal: f64) -> f64 {
    let phase = p.frequency * std::f64::consts::PI * month as f64 / horizon as f64;
    let e = p.floor + (p.level + p.amplitude * phase.sin() + p.noise_sd * normal) / p.divisor;
    let (lo, hi) = MACRO_BOUNDS;
    if e.is_nan() {
        return lo.next_up();
    }
    e.clamp(lo.next_up(), hi.next_down())
}

// ---------------------------------------------------------------------------
// Stream-bound samplers

pub fn sample_applications_count(layout: &Layout, month: u32) -> u32 {
    let normal = RandomStream::for_month(layout.seed, Purpose::ApplicationCount, month).std_normal();
    applications_count(
        &layout.distributions.applications,
        normal,
        layout.calendar().is_december(month),
        layout.volume_scale,
    )
}

/// Raw applicant characteristics before being dated and numbered.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplicantDraw {
    pub age: f64,
    pub income: i64,
    pub installment: i64,
    pub spending: i64,
    pub n_installments: u32,
    pub nominal: [u32; 4],
    pub interval: [f64; 4],
}

/// Applicant characteristics from explicit draws (normals for age, income,
/// installment, spending, count, then uniform for age).
pub fn applicant_from_draws(
    d: &DistParams,
    age_normal: f64,
    age_uniform: f64,
    income_normal: f64,
    installment_normal: f64,
    spending_normal: f64,
    count_normal: f64,
    nominal_normals: [f64; 4],
    interval_uniforms: [f64; 4],
) -> ApplicantDraw {
    let inc = income(d, income_normal);
    ApplicantDraw {
        age: age_years(&d.age, age_normal, age_uniform),
        income: inc,
        installment: income_share(inc, installment_normal, d.installment_divisor),
        spending: income_share(inc, spending_normal, d.spending_divisor),
        n_installments: installment_count(&d.installments, count_normal),
        nominal: nominal_normals.map(|n| nominal(d, n)),
        interval: interval_uniforms.map(|u| interval(d, u)),
    }
}

pub fn sample_applicant(layout: &Layout, app_id: u64) -> ApplicantDraw {
    let seed = layout.seed;
    let normal = |p| RandomStream::for_account(seed, p, app_id).std_normal();
    let uniform = |p| RandomStream::for_account(seed, p, app_id).uniform();
    applicant_from_draws(
        &layout.distributions,
        normal(Purpose::AgeNormal),
        uniform(Purpose::AgeUniform),
        normal(Purpose::Income),
        normal(Purpose::Installment),
        normal(Purpose::Spending),
        normal(Purpose::InstallmentCount),
        [0u8, 1, 2, 3].map(|k| normal(Purpose::Nominal(k))),
        [0u8, 1, 2, 3].map(|k| uniform(Purpose::Interval(k))),
    )
}

pub fn sample_pay_days(layout: &Layout, n_due_before: u8, app_id: u64, month: u32) -> i8 {
    let normal =
        RandomStream::for_account_month(layout.seed, Purpose::PayDays, app_id, month).std_normal();
    pay_days(&layout.distributions.pay_days, n_due_before, normal)
}

/// The macro variable for every month of the horizon; one noise draw per month.
pub fn macro_path(layout: &Layout) -> Vec<f64> {
    let horizon = layout.horizon();
    (0..horizon)
        .map(|m| {
            let n = RandomStream::for_month(layout.seed, Purpose::MacroNoise, m).std_normal();
            macro_value(&layout.macro_cycle, m, horizon, n)
        })
        .collect()
}
