//! C ABI over the softworld library.
//!
//! Objects live behind opaque handles created by `sw_*_new`/`sw_*_load` and
//! released by the matching `sw_*_free`. Every fallible call returns an
//! [`SwStatus`]; on failure [`sw_last_error`] describes the cause. Handles
//! are not thread-safe, and the error message is per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softworld::dynamics::{SoftGpt, Token};
use softworld::graph::{build_scene_graph, GraphEncoder, LatentState, EMBED_DIM};
use softworld::policy::Agent;
use softworld::sim::{iou, DoughEnv, RewardWeights, Shape, SimConfig, Task, ToolKind, ToolPose};
use softworld::skeleton::{extract_skeleton, SkeletonGraph};

/// Width of every latent vector crossing the boundary.
pub const SW_EMBED_DIM: usize = 32;
// A literal so cbindgen can emit it; kept in step with the library here.
const _: () = assert!(SW_EMBED_DIM == EMBED_DIM);

pub const SW_TASK_ROLLING: u32 = 0;
pub const SW_TASK_CUTTING: u32 = 1;
pub const SW_TASK_GATHERING: u32 = 2;
pub const SW_TASK_SHAPING: u32 = 3;

pub const SW_SHAPE_BALL: u32 = 0;
pub const SW_SHAPE_TWO_BALLS: u32 = 1;
pub const SW_SHAPE_CUBOID: u32 = 2;
pub const SW_SHAPE_RANDOM: u32 = 3;

pub const SW_TOOL_ROLLING_PIN: u32 = 0;
pub const SW_TOOL_KNIFE: u32 = 1;
pub const SW_TOOL_DUAL_FLATS: u32 = 2;
pub const SW_TOOL_ROLLING_BALL: u32 = 3;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwStatus {
    Ok = 0,
    NullPointer = 1,
    /// Wrong enum value, buffer length or pose width.
    InvalidArgument = 2,
    Config = 3,
    InsufficientData = 4,
    Simulation = 5,
    Io = 6,
    Checkpoint = 7,
    Internal = 8,
    /// A panic was caught at the boundary; the handle may be inconsistent.
    Panic = 9,
}

/// Simulator resolution; pass NULL for the library defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SwSimParams {
    pub lattice_spacing: f64,
    pub substeps: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SwMetrics {
    pub iou: f64,
    pub density_score: f64,
    pub sdf_score: f64,
    pub reward: f64,
}

pub struct SwEnv(DoughEnv);
pub struct SwSkeleton(SkeletonGraph);
pub struct SwEncoder(GraphEncoder);
pub struct SwSoftGpt(SoftGpt);
pub struct SwAgent(Agent);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SwStatus, String);

impl From<softworld::Error> for Failure {
    fn from(e: softworld::Error) -> Self {
        use softworld::Error as E;
        let status = match &e {
            E::Config(_) => SwStatus::Config,
            E::InsufficientData(_) => SwStatus::InsufficientData,
            E::Simulation { .. } | E::DegenerateState(_) => SwStatus::Simulation,
            E::Io { .. } => SwStatus::Io,
            E::Checkpoint(_) | E::Json(_) => SwStatus::Checkpoint,
            E::Dimension(_) | E::Usage(_) | E::Graph(_) | E::DegenerateInput(_) => SwStatus::InvalidArgument,
            E::Training { .. } => SwStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SwStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording its error or panic for [`sw_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload.downcast_ref::<String>().cloned().or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()));
            set_error(format!("panic: {}", msg.unwrap_or_default()));
            SwStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SwStatus::NullPointer, "null handle".into()))
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(SwStatus::NullPointer, "null handle".into()))
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(SwStatus::NullPointer, "null input buffer".into()));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure(SwStatus::NullPointer, "null output buffer".into()));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Writes a fresh handle to `out`.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SwStatus::NullPointer, "null output handle".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(SwStatus::NullPointer, "null path".into()));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn latent(v: &[f64]) -> Result<LatentState, Failure> {
    Ok(LatentState::from_slice(v)?)
}

fn fits(out_len: usize, need: usize, what: &str) -> Result<(), Failure> {
    if out_len < need {
        return Err(invalid(format!("{what} needs room for {need} values, got {out_len}")));
    }
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next `sw_*` call on the same thread.
#[no_mangle]
pub extern "C" fn sw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Resets a dough environment. `params` may be NULL.
///
/// # Safety
/// `params` must be NULL or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_env_new(task: u32, shape: u32, seed: u64, params: *const SwSimParams, out: *mut *mut SwEnv) -> SwStatus {
    guard(|| {
        let task = Task::from_index(task).ok_or_else(|| invalid(format!("unknown task {task}")))?;
        let shape = Shape::from_index(shape).ok_or_else(|| invalid(format!("unknown shape {shape}")))?;
        let mut sim = SimConfig::default();
        if let Some(p) = params.as_ref() {
            sim.lattice_spacing = p.lattice_spacing;
            sim.substeps = p.substeps as usize;
        }
        let env = DoughEnv::new(task, shape, seed, sim, RewardWeights::default())?;
        emit(out, SwEnv(env))
    })
}

/// # Safety
/// `env` must come from [`sw_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sw_env_free(env: *mut SwEnv) {
    free(env)
}

/// Number of particles; 0 for a NULL handle.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_env_particle_count(env: *const SwEnv) -> usize {
    env.as_ref().map_or(0, |e| e.0.state.len())
}

/// Pose width of the environment's tool; 0 for a NULL handle.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_env_action_dim(env: *const SwEnv) -> u32 {
    env.as_ref().map_or(0, |e| e.0.tool.action_dim() as u32)
}

/// Copies particle positions as `x, y, z` triples into `out[0..len]`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_env_positions(env: *const SwEnv, out: *mut f64, len: usize) -> SwStatus {
    guard(|| {
        let env = deref(env)?;
        let n = 3 * env.0.state.len();
        fits(len, n, "positions")?;
        let out = slice_mut(out, len)?;
        for (dst, p) in out.chunks_exact_mut(3).zip(&env.0.state.positions) {
            dst.copy_from_slice(p);
        }
        Ok(())
    })
}

/// Copies the current tool pose (`action_dim` values).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_env_tool_pose(env: *const SwEnv, out: *mut f64, len: usize) -> SwStatus {
    guard(|| {
        let env = deref(env)?;
        let pose = env.0.pose.as_slice();
        fits(len, pose.len(), "pose")?;
        slice_mut(out, len)?[..pose.len()].copy_from_slice(pose);
        Ok(())
    })
}

/// Moves the tool through `count` waypoints of `action_dim` values each.
/// `contact` (nullable) reports whether the tool touched the dough.
///
/// # Safety
/// `waypoints` must hold `count * action_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_env_step(env: *mut SwEnv, waypoints: *const f64, count: usize, contact: *mut bool) -> SwStatus {
    guard(|| {
        let env = deref_mut(env)?;
        let kind = env.0.tool.kind;
        let d = kind.action_dim();
        let values = slice(waypoints, count * d)?;
        let poses = values.chunks_exact(d).map(|w| ToolPose::new(kind, w)).collect::<softworld::Result<Vec<_>>>()?;
        let touched = env.0.step(&poses)?;
        if let Some(c) = contact.as_mut() {
            *c = touched;
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_env_metrics(env: *const SwEnv, out: *mut SwMetrics) -> SwStatus {
    guard(|| {
        let env = deref(env)?;
        let m = env.0.metrics()?;
        let out = deref_mut(out)?;
        *out = SwMetrics { iou: m.iou, density_score: m.density_score, sdf_score: m.sdf_score, reward: m.reward };
        Ok(())
    })
}

/// Skeleton of the current dough surface with `k` nodes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_env_skeleton(env: *const SwEnv, k: usize, out: *mut *mut SwSkeleton) -> SwStatus {
    guard(|| {
        let env = deref(env)?;
        let skeleton = extract_skeleton(&env.0.surface()?, k)?;
        emit(out, SwSkeleton(skeleton))
    })
}

/// Skeleton of `n` points given as `x, y, z` triples.
///
/// # Safety
/// `points` must hold `3 * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_skeleton_extract(points: *const f64, n: usize, k: usize, out: *mut *mut SwSkeleton) -> SwStatus {
    guard(|| {
        let pts: Vec<[f64; 3]> = slice(points, 3 * n)?.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        emit(out, SwSkeleton(extract_skeleton(&pts, k)?))
    })
}

/// # Safety
/// `skeleton` must be a live handle and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sw_skeleton_free(skeleton: *mut SwSkeleton) {
    free(skeleton)
}

/// # Safety
/// `skeleton` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_skeleton_node_count(skeleton: *const SwSkeleton) -> usize {
    skeleton.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `skeleton` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_skeleton_edge_count(skeleton: *const SwSkeleton) -> usize {
    skeleton.as_ref().map_or(0, |s| s.0.edges.len())
}

/// Node features as `x, y, z, radius` rows.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_skeleton_nodes(skeleton: *const SwSkeleton, out: *mut f64, len: usize) -> SwStatus {
    guard(|| {
        let s = deref(skeleton)?;
        fits(len, 4 * s.0.len(), "skeleton nodes")?;
        for (dst, f) in slice_mut(out, len)?.chunks_exact_mut(4).zip(s.0.features()) {
            dst.copy_from_slice(&f);
        }
        Ok(())
    })
}

/// Undirected links as `low, high` index pairs.
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn sw_skeleton_edges(skeleton: *const SwSkeleton, out: *mut u32, len: usize) -> SwStatus {
    guard(|| {
        let s = deref(skeleton)?;
        fits(len, 2 * s.0.edges.len(), "skeleton edges")?;
        for (dst, &(a, b)) in slice_mut(out, len)?.chunks_exact_mut(2).zip(&s.0.edges) {
            dst[0] = a as u32;
            dst[1] = b as u32;
        }
        Ok(())
    })
}

/// Loads an encoder checkpoint (`encoder.ckpt`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_encoder_load(path_: *const c_char, out: *mut *mut SwEncoder) -> SwStatus {
    guard(|| emit(out, SwEncoder(GraphEncoder::load(&path(path_)?)?)))
}

/// Encoder with fresh weights drawn from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_encoder_new(seed: u64, out: *mut *mut SwEncoder) -> SwStatus {
    guard(|| emit(out, SwEncoder(GraphEncoder::new(&mut ChaCha8Rng::seed_from_u64(seed)))))
}

/// # Safety
/// `encoder` must be a live handle and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sw_encoder_free(encoder: *mut SwEncoder) {
    free(encoder)
}

/// Object and scene embeddings of a skeleton acted on by a `tool` pose.
/// Either output may be NULL; non-NULL outputs hold [`SW_EMBED_DIM`] doubles.
///
/// # Safety
/// `pose` must hold `pose_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_encoder_encode(
    encoder: *const SwEncoder,
    skeleton: *const SwSkeleton,
    tool: u32,
    pose: *const f64,
    pose_len: usize,
    object_out: *mut f64,
    scene_out: *mut f64,
) -> SwStatus {
    guard(|| {
        let (enc, sk) = (deref(encoder)?, deref(skeleton)?);
        let kind = ToolKind::from_index(tool).ok_or_else(|| invalid(format!("unknown tool {tool}")))?;
        let pose = ToolPose::new(kind, slice(pose, pose_len)?)?;
        let (object, scene) = enc.0.encode(&build_scene_graph(&sk.0, &pose))?;
        for (dst, v) in [(object_out, object), (scene_out, scene)] {
            if !dst.is_null() {
                slice_mut(dst, SW_EMBED_DIM)?.copy_from_slice(&v.0);
            }
        }
        Ok(())
    })
}

/// Loads a SoftGPT checkpoint; its `.json` sidecar must sit next to it.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_softgpt_load(path_: *const c_char, out: *mut *mut SwSoftGpt) -> SwStatus {
    guard(|| emit(out, SwSoftGpt(SoftGpt::load(&path(path_)?)?)))
}

/// # Safety
/// `model` must be a live handle and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sw_softgpt_free(model: *mut SwSoftGpt) {
    free(model)
}

/// Next object embedding after `n` tokens. Token `i` is the scene
/// embedding `scenes[32i..32i+32]` and the object embedding it was built
/// from, `objects[32i..32i+32]`.
///
/// # Safety
/// `scenes` and `objects` must hold `32 * n` doubles, `out` 32.
#[no_mangle]
pub unsafe extern "C" fn sw_softgpt_predict_next(
    model: *const SwSoftGpt,
    scenes: *const f64,
    objects: *const f64,
    n: usize,
    out: *mut f64,
) -> SwStatus {
    guard(|| {
        let model = deref(model)?;
        let (s, o) = (slice(scenes, SW_EMBED_DIM * n)?, slice(objects, SW_EMBED_DIM * n)?);
        let tokens = s
            .chunks_exact(SW_EMBED_DIM)
            .zip(o.chunks_exact(SW_EMBED_DIM))
            .map(|(s, o)| Ok(Token { scene: latent(s)?, object: latent(o)? }))
            .collect::<Result<Vec<_>, Failure>>()?;
        let next = model.0.predict_next(&tokens)?;
        slice_mut(out, SW_EMBED_DIM)?.copy_from_slice(&next.0);
        Ok(())
    })
}

/// Loads an agent directory written by training (`<run>/agent`).
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_agent_load(dir: *const c_char, out: *mut *mut SwAgent) -> SwStatus {
    guard(|| emit(out, SwAgent(Agent::load(&path(dir)?)?)))
}

/// # Safety
/// `agent` must be a live handle and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sw_agent_free(agent: *mut SwAgent) {
    free(agent)
}

/// # Safety
/// `agent` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_agent_action_dim(agent: *const SwAgent) -> u32 {
    agent.as_ref().map_or(0, |a| a.0.action_dim() as u32)
}

/// Greedy target pose for an object embedding and a goal embedding.
///
/// # Safety
/// `eps` and `goal` must hold 32 doubles, `pose_out` `len`.
#[no_mangle]
pub unsafe extern "C" fn sw_agent_act(
    agent: *const SwAgent,
    eps: *const f64,
    goal: *const f64,
    pose_out: *mut f64,
    len: usize,
) -> SwStatus {
    guard(|| {
        let agent = deref(agent)?;
        let (e, g) = (latent(slice(eps, SW_EMBED_DIM)?)?, latent(slice(goal, SW_EMBED_DIM)?)?);
        // Deterministic actions draw no noise; the generator is a formality.
        let (pose, _) = agent.0.act(&e, &g, true, &mut ChaCha8Rng::seed_from_u64(0))?;
        let values = pose.as_slice();
        fits(len, values.len(), "pose")?;
        slice_mut(pose_out, len)?[..values.len()].copy_from_slice(values);
        Ok(())
    })
}

/// Intersection over union of two occupancy grids of `len` cells (nonzero
/// bytes are occupied).
///
/// # Safety
/// `a` and `b` must hold `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_iou(a: *const u8, b: *const u8, len: usize, out: *mut f64) -> SwStatus {
    guard(|| {
        let a: Vec<bool> = slice(a, len)?.iter().map(|&v| v != 0).collect();
        let b: Vec<bool> = slice(b, len)?.iter().map(|&v| v != 0).collect();
        *deref_mut(out)? = iou(&a, &b);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_match_the_library() {
        let tasks = [
            (SW_TASK_ROLLING, Task::Rolling),
            (SW_TASK_CUTTING, Task::Cutting),
            (SW_TASK_GATHERING, Task::Gathering),
            (SW_TASK_SHAPING, Task::Shaping),
        ];
        for (id, t) in tasks {
            assert_eq!(Task::from_index(id), Some(t));
        }
        let shapes = [
            (SW_SHAPE_BALL, Shape::Ball),
            (SW_SHAPE_TWO_BALLS, Shape::TwoBalls),
            (SW_SHAPE_CUBOID, Shape::Cuboid),
            (SW_SHAPE_RANDOM, Shape::Random),
        ];
        for (id, s) in shapes {
            assert_eq!(Shape::from_index(id), Some(s));
        }
        let tools = [
            (SW_TOOL_ROLLING_PIN, ToolKind::RollingPin),
            (SW_TOOL_KNIFE, ToolKind::Knife),
            (SW_TOOL_DUAL_FLATS, ToolKind::DualFlats),
            (SW_TOOL_ROLLING_BALL, ToolKind::RollingBall),
        ];
        for (id, k) in tools {
            assert_eq!(ToolKind::from_index(id), Some(k));
        }
    }

    fn last_error() -> String {
        let p = sw_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn errors_carry_codes_and_messages() {
        let mut env = ptr::null_mut();
        let status = unsafe { sw_env_new(SW_TASK_ROLLING, SW_SHAPE_TWO_BALLS, 0, ptr::null(), &mut env) };
        assert_eq!(status, SwStatus::Config);
        assert!(env.is_null());
        assert!(last_error().contains("two_balls"), "{}", last_error());
        assert_eq!(unsafe { sw_env_new(9, 0, 0, ptr::null(), &mut env) }, SwStatus::InvalidArgument);
        assert_eq!(unsafe { sw_env_metrics(ptr::null(), ptr::null_mut()) }, SwStatus::NullPointer);
        // A success clears the message.
        let mut out = 0.0;
        assert_eq!(unsafe { sw_iou([1u8, 0].as_ptr(), [1u8, 1].as_ptr(), 2, &mut out) }, SwStatus::Ok);
        assert_eq!(out, 0.5);
        assert!(sw_last_error().is_null());
    }

    #[test]
    fn environment_round_trip() {
        let params = SwSimParams { lattice_spacing: 0.035, substeps: 4 };
        let mut env = ptr::null_mut();
        assert_eq!(unsafe { sw_env_new(SW_TASK_ROLLING, SW_SHAPE_BALL, 3, &params, &mut env) }, SwStatus::Ok);
        let n = unsafe { sw_env_particle_count(env) };
        assert_eq!(unsafe { sw_env_action_dim(env) }, 3);
        let mut pos = vec![0.0; 3 * n];
        assert_eq!(unsafe { sw_env_positions(env, pos.as_mut_ptr(), pos.len()) }, SwStatus::Ok);
        assert_eq!(unsafe { sw_env_positions(env, pos.as_mut_ptr(), 3) }, SwStatus::InvalidArgument);
        let h0 = pos.chunks(3).map(|p| p[2]).fold(f64::MIN, f64::max);

        let path: Vec<f64> = (1..=20).flat_map(|k| [0.5, 0.5, 0.3 - 0.25 * k as f64 / 20.0]).collect();
        let mut contact = false;
        assert_eq!(unsafe { sw_env_step(env, path.as_ptr(), 20, &mut contact) }, SwStatus::Ok);
        assert!(contact);
        assert_eq!(unsafe { sw_env_positions(env, pos.as_mut_ptr(), pos.len()) }, SwStatus::Ok);
        assert!(pos.chunks(3).map(|p| p[2]).fold(f64::MIN, f64::max) < h0);
        // Out-of-bounds waypoints are rejected without moving anything.
        let far = [5.0, 0.5, 0.2];
        assert_eq!(unsafe { sw_env_step(env, far.as_ptr(), 1, ptr::null_mut()) }, SwStatus::InvalidArgument);

        let mut m = SwMetrics::default();
        assert_eq!(unsafe { sw_env_metrics(env, &mut m) }, SwStatus::Ok);
        assert!((0.0..=1.0).contains(&m.iou));

        let mut sk = ptr::null_mut();
        assert_eq!(unsafe { sw_env_skeleton(env, 30, &mut sk) }, SwStatus::Ok);
        assert_eq!(unsafe { sw_skeleton_node_count(sk) }, 30);
        let mut enc = ptr::null_mut();
        assert_eq!(unsafe { sw_encoder_new(1, &mut enc) }, SwStatus::Ok);
        let (mut object, mut scene) = ([0.0; SW_EMBED_DIM], [0.0; SW_EMBED_DIM]);
        let pose = [0.5, 0.5, 0.2];
        let status = unsafe { sw_encoder_encode(enc, sk, SW_TOOL_ROLLING_PIN, pose.as_ptr(), 3, object.as_mut_ptr(), scene.as_mut_ptr()) };
        assert_eq!(status, SwStatus::Ok);
        assert!(object.iter().all(|v| v.is_finite()) && object != scene);
        let status = unsafe { sw_encoder_encode(enc, sk, SW_TOOL_DUAL_FLATS, pose.as_ptr(), 3, object.as_mut_ptr(), ptr::null_mut()) };
        assert_eq!(status, SwStatus::InvalidArgument);
        unsafe {
            sw_encoder_free(enc);
            sw_skeleton_free(sk);
            sw_env_free(env);
        }
    }
}
