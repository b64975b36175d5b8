//! C ABI over slim-core.
//!
//! Every fallible function returns a [`SlimStatus`]; on failure the message
//! is kept per thread and read with [`slim_last_error`]. Handles are opaque
//! and released with their `_free` function. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use slim_core::bandwidth::{max_message_dim, BandwidthBudget};
use slim_core::env::Environment;
use slim_core::harness::{load_checkpoint, save_checkpoint, RunConfig};
use slim_core::trainer::{ActionMode, Trainer};
use slim_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Contract = 4,
    Numerical = 5,
    Capacity = 6,
    Budget = 7,
    Diverged = 8,
    Checkpoint = 9,
    Io = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: SlimStatus, msg: impl Into<String>) -> SlimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn from_error(e: Error) -> SlimStatus {
    let status = match &e {
        Error::Config(_) | Error::Toml(_) => SlimStatus::Config,
        Error::Contract(_) | Error::NoAttendableInput => SlimStatus::Contract,
        Error::Numerical(_) => SlimStatus::Numerical,
        Error::Capacity(_) => SlimStatus::Capacity,
        Error::Budget(_) => SlimStatus::Budget,
        Error::Diverged { .. } => SlimStatus::Diverged,
        Error::Checkpoint(_) => SlimStatus::Checkpoint,
        Error::Io { .. } | Error::Csv(_) => SlimStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), SlimStatus>) -> SlimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlimStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SlimStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: slim_core::Result<T>) -> Result<T, SlimStatus> {
    r.map_err(from_error)
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, SlimStatus> {
    if p.is_null() {
        return Err(fail(SlimStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SlimStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, SlimStatus> {
    p.as_ref().ok_or_else(|| fail(SlimStatus::NullPointer, "null handle"))
}

unsafe fn obj_mut<'a, T>(p: *mut T) -> Result<&'a mut T, SlimStatus> {
    p.as_mut().ok_or_else(|| fail(SlimStatus::NullPointer, "null handle"))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, SlimStatus> {
    p.as_mut().ok_or_else(|| fail(SlimStatus::NullPointer, "null output pointer"))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, need: usize) -> Result<&'a mut [T], SlimStatus> {
    if p.is_null() {
        return Err(fail(SlimStatus::NullPointer, "null buffer"));
    }
    if len < need {
        return Err(fail(
            SlimStatus::InvalidArgument,
            format!("buffer holds {len} elements, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn slim_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Largest feasible message dimension, or 0 when none is.
///
/// # Safety
/// `dim` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slim_max_message_dim(beta: f64, sigma: f64, rounds: u32, dim: *mut usize) -> SlimStatus {
    guard(|| {
        let d = check(max_message_dim(beta, sigma, rounds))?;
        *out(dim)? = d.unwrap_or(0);
        Ok(())
    })
}

/// Opaque communication budget.
pub struct SlimBudget(BandwidthBudget);

/// # Safety
/// `handle` must be a valid pointer; the result is freed with
/// [`slim_budget_free`].
#[no_mangle]
pub unsafe extern "C" fn slim_budget_new(
    sigma: f64,
    rounds: u32,
    dim: usize,
    beta: f64,
    handle: *mut *mut SlimBudget,
) -> SlimStatus {
    guard(|| {
        let slot = out(handle)?;
        let b = BandwidthBudget::new(sigma, rounds, dim, beta);
        check(b.validate())?;
        *slot = Box::into_raw(Box::new(SlimBudget(b)));
        Ok(())
    })
}

/// Writes 1 if `sigma * rounds * dim <= beta`, else 0.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slim_budget_feasible(budget: *const SlimBudget, feasible: *mut u8) -> SlimStatus {
    guard(|| {
        let ok = check(obj(budget)?.0.validate())?;
        *out(feasible)? = u8::from(ok);
        Ok(())
    })
}

/// Like [`slim_budget_feasible`] but reports infeasibility as
/// `SLIM_STATUS_CONFIG` with the violated inequality as the message.
///
/// # Safety
/// `budget` must be valid.
#[no_mangle]
pub unsafe extern "C" fn slim_budget_require(budget: *const SlimBudget) -> SlimStatus {
    guard(|| check(obj(budget)?.0.require_feasible()))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slim_budget_load(budget: *const SlimBudget, load: *mut f64) -> SlimStatus {
    guard(|| {
        *out(load)? = obj(budget)?.0.load();
        Ok(())
    })
}

/// # Safety
/// `budget` must be null or come from [`slim_budget_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn slim_budget_free(budget: *mut SlimBudget) {
    if !budget.is_null() {
        drop(Box::from_raw(budget));
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlimEnvSpec {
    pub n_agents: usize,
    pub episode_cap: usize,
    pub action_arity: usize,
    pub obs_dim: usize,
    pub gamma: f64,
}

/// Opaque environment instance.
pub struct SlimEnv(Box<dyn Environment>);

/// Builds the `[environment]` of a TOML run config.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `handle` valid.
#[no_mangle]
pub unsafe extern "C" fn slim_env_new(config_toml: *const c_char, handle: *mut *mut SlimEnv) -> SlimStatus {
    guard(|| {
        let slot = out(handle)?;
        let cfg = check(RunConfig::from_toml(str_arg(config_toml)?))?;
        let env = check(cfg.environment.build())?;
        *slot = Box::into_raw(Box::new(SlimEnv(env)));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slim_env_spec(env: *const SlimEnv, spec: *mut SlimEnvSpec) -> SlimStatus {
    guard(|| {
        let s = obj(env)?.0.spec();
        *out(spec)? = SlimEnvSpec {
            n_agents: s.n_agents,
            episode_cap: s.episode_cap,
            action_arity: s.action_arity,
            obs_dim: s.obs_dim,
            gamma: s.gamma,
        };
        Ok(())
    })
}

/// Resets and writes the `n_agents x obs_dim` observations row-major.
///
/// # Safety
/// `obs` must point to `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn slim_env_reset(env: *mut SlimEnv, seed: u64, obs: *mut f64, obs_len: usize) -> SlimStatus {
    guard(|| {
        let env = &mut obj_mut(env)?.0;
        let s = env.spec().clone();
        let buf = slice_mut(obs, obs_len, s.n_agents * s.obs_dim)?;
        write_rows(buf, &env.reset(seed));
        Ok(())
    })
}

fn write_rows(buf: &mut [f64], rows: &[Vec<f64>]) {
    for (dst, src) in buf.chunks_mut(rows.first().map_or(1, Vec::len).max(1)).zip(rows) {
        dst.copy_from_slice(src);
    }
}

/// Applies one joint action. `rewards` and `dones` take one entry per
/// agent, `obs` the next observations.
///
/// # Safety
/// `actions` must hold `n_agents` entries; output buffers must be valid
/// for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn slim_env_step(
    env: *mut SlimEnv,
    actions: *const usize,
    n_actions: usize,
    obs: *mut f64,
    obs_len: usize,
    rewards: *mut f64,
    dones: *mut u8,
    episode_done: *mut u8,
) -> SlimStatus {
    guard(|| {
        let env = &mut obj_mut(env)?.0;
        let s = env.spec().clone();
        if actions.is_null() {
            return Err(fail(SlimStatus::NullPointer, "null actions"));
        }
        let acts = std::slice::from_raw_parts(actions, n_actions);
        let obs = slice_mut(obs, obs_len, s.n_agents * s.obs_dim)?;
        let rewards = slice_mut(rewards, s.n_agents, s.n_agents)?;
        let dones = slice_mut(dones, s.n_agents, s.n_agents)?;
        let episode_done = out(episode_done)?;
        let r = check(env.step(acts))?;
        write_rows(obs, &r.observations);
        rewards.copy_from_slice(&r.rewards);
        for (d, &x) in dones.iter_mut().zip(&r.dones) {
            *d = u8::from(x);
        }
        *episode_done = u8::from(r.episode_done);
        Ok(())
    })
}

/// # Safety
/// `env` must be null or come from [`slim_env_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn slim_env_free(env: *mut SlimEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlimEpochMetrics {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub budget_violations: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlimEvalMetrics {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub success_rate: f64,
}

/// Opaque trainer with its config.
pub struct SlimTrainer {
    cfg: RunConfig,
    trainer: Trainer,
}

/// Builds a trainer from a full TOML run config; an infeasible bandwidth
/// budget is refused here.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `handle` valid.
#[no_mangle]
pub unsafe extern "C" fn slim_trainer_new(config_toml: *const c_char, handle: *mut *mut SlimTrainer) -> SlimStatus {
    guard(|| {
        let slot = out(handle)?;
        let cfg = check(RunConfig::from_toml(str_arg(config_toml)?))?;
        check(cfg.validate())?;
        let trainer = check(Trainer::new(&cfg.environment, &cfg.model, &cfg.train))?;
        *slot = Box::into_raw(Box::new(SlimTrainer { cfg, trainer }));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slim_trainer_train_epoch(trainer: *mut SlimTrainer, metrics: *mut SlimEpochMetrics) -> SlimStatus {
    guard(|| {
        let t = obj_mut(trainer)?;
        let slot = out(metrics)?;
        let m = check(t.trainer.train_epoch())?;
        *slot = SlimEpochMetrics {
            epoch: m.epoch,
            mean_return: m.mean_return,
            mean_steps: m.mean_steps,
            success_rate: m.success_rate,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            entropy: m.entropy,
            grad_norm: m.grad_norm,
            budget_violations: m.budget_violations,
        };
        Ok(())
    })
}

/// Rolls out the current policy; `greedy` nonzero takes the most likely
/// action.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn slim_trainer_evaluate(
    trainer: *const SlimTrainer,
    episodes: usize,
    seed: u64,
    greedy: u8,
    metrics: *mut SlimEvalMetrics,
) -> SlimStatus {
    guard(|| {
        let t = obj(trainer)?;
        let slot = out(metrics)?;
        let mode = if greedy != 0 { ActionMode::Greedy } else { ActionMode::Sample };
        let m = check(t.trainer.evaluate(episodes, seed, mode))?;
        *slot = SlimEvalMetrics {
            episodes: m.episodes,
            mean_return: m.mean_return,
            mean_steps: m.mean_steps,
            success_rate: m.success_rate,
        };
        Ok(())
    })
}

/// # Safety
/// `trainer` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slim_trainer_save(trainer: *const SlimTrainer, path: *const c_char) -> SlimStatus {
    guard(|| {
        let t = obj(trainer)?;
        let path = Path::new(str_arg(path)?);
        let hash = check(t.cfg.config_hash())?;
        check(save_checkpoint(path, t.trainer.store(), &hash, t.trainer.epoch()))
    })
}

/// Replaces the parameters with a checkpoint written under the same
/// config.
///
/// # Safety
/// `trainer` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slim_trainer_load(trainer: *mut SlimTrainer, path: *const c_char) -> SlimStatus {
    guard(|| {
        let t = obj_mut(trainer)?;
        let path = Path::new(str_arg(path)?);
        let hash = check(t.cfg.config_hash())?;
        check(load_checkpoint(path, t.trainer.store_mut(), &hash)).map(|_| ())
    })
}

/// # Safety
/// `trainer` must be null or come from [`slim_trainer_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn slim_trainer_free(trainer: *mut SlimTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}
